// ccsoc: Coulomb-counting SOC error analysis toolkit.
//
// Subcommands: predict, simulate, mc, fit-kappa, track, gen-profile, stats.
// Every output CSV gets a .meta.json sidecar holding the fully resolved
// configuration; re-running with --config <sidecar> reproduces the outputs
// byte for byte. Exit codes: 0 success, 1 tolerance failure, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ccsoc/errors.hpp"
#include "ccsoc/model.hpp"
#include "ccsoc/montecarlo.hpp"
#include "ccsoc/profiles.hpp"
#include "ccsoc/tracker.hpp"
#include "ccsoc/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ccsoc;

namespace {

constexpr const char* kVersion = "1.0.0";

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

double parse_horizon(const json& value) {
    if (value.is_number()) return value.get<double>();
    const std::string text = value.get<std::string>();
    if (text.empty()) throw UsageError("empty horizon");
    const char suffix = text.back();
    if (suffix == 'h' || suffix == 'd' || suffix == 'y' || suffix == 's' || suffix == 'm') {
        const double base = std::stod(text.substr(0, text.size() - 1));
        switch (suffix) {
            case 's': return base;
            case 'm': return base * 60.0;
            case 'h': return base * kSecondsPerHour;
            case 'd': return base * kSecondsPerDay;
            case 'y': return base * kSecondsPerYear;
        }
    }
    return std::stod(text);
}

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    json j;
    in >> j;
    // A sidecar wraps the original config under "config".
    if (j.contains("config") && j["config"].is_object()) {
        return j["config"];
    }
    return j;
}

/// Deep-merge overrides into base (objects merge, scalars replace).
void merge_into(json& base, const json& overrides) {
    for (const auto& [key, value] : overrides.items()) {
        if (value.is_object() && base.contains(key) && base[key].is_object()) {
            merge_into(base[key], value);
        } else {
            base[key] = value;
        }
    }
}

BatteryTruth battery_from(const json& config) {
    const json& b = config.at("battery");
    BatteryTruth truth;
    truth.c_true = b.value("c_true", 1.5);
    truth.eta_c_true = b.value("eta_c_true", 1.0);
    truth.eta_d_true = b.value("eta_d_true", 1.0);
    truth.delta_true = b.value("delta_true", 1.0);
    validate(truth);
    return truth;
}

BeliefParams belief_from(const json& config, const BatteryTruth& truth) {
    BeliefParams belief{truth.c_true, truth.eta_c_true, truth.eta_d_true, truth.delta_true};
    if (config.contains("belief")) {
        const json& b = config["belief"];
        belief.c_batt = b.value("c_batt", belief.c_batt);
        belief.eta_c = b.value("eta_c", belief.eta_c);
        belief.eta_d = b.value("eta_d", belief.eta_d);
        belief.delta = b.value("delta", belief.delta);
    }
    validate(belief);
    return belief;
}

NoiseSpec noise_from(const json& config) {
    NoiseSpec spec;
    if (config.contains("noise")) {
        spec = noise_spec_from_json(config["noise"]);
    }
    spec.seed = config.value("seed", spec.seed);
    return spec;
}

ProfileSpec profile_spec_from(const json& p) {
    ProfileSpec spec;
    spec.segment_count = p.value("segments", std::size_t{1});
    spec.amp_min = p.value("amp_min", 0.0);
    spec.amp_max = p.value("amp_max", 0.0);
    spec.dur_min = p.value("dur_min", 0.0);
    spec.dur_max = p.value("dur_max", 0.0);
    spec.align_delta = p.value("align_delta", 0.0);
    return spec;
}

SegmentProfile profile_from(const json& config, std::uint64_t seed) {
    const json& p = config.at("profile");
    if (p.contains("csv")) {
        return load_profile_csv(p["csv"].get<std::string>());
    }
    Philox rng(seed, mc_stream(0, RngPurpose::Profile));
    if (p.contains("duration")) {
        ProfileSpec spec = profile_spec_from(p);
        return ProfileFamily::timed(spec, p["duration"].get<double>(), false).make(rng);
    }
    return generate_profile(profile_spec_from(p), rng);
}

ProfileFamily family_from(const json& config) {
    const json& p = config.at("profile");
    if (p.contains("csv")) {
        return ProfileFamily::fixed(load_profile_csv(p["csv"].get<std::string>()));
    }
    const bool per_run = p.value("per_run", false);
    if (p.contains("duration")) {
        return ProfileFamily::timed(profile_spec_from(p), p["duration"].get<double>(), per_run);
    }
    return ProfileFamily::from_spec(profile_spec_from(p), per_run);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_sidecar(const fs::path& out_dir, const std::string& command, const json& config,
                   const json& results) {
    json meta{{"version", kVersion}, {"command", command}, {"config", config}};
    if (!results.is_null()) meta["results"] = results;
    write_text(out_dir / (command + ".meta.json"), meta.dump(2) + "\n");
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_given = false;
};

json resolve_config(const CommonArgs& args, json defaults) {
    json config = std::move(defaults);
    if (!args.config_path.empty()) {
        merge_into(config, load_config_file(args.config_path));
    }
    if (args.seed_given) {
        config["seed"] = args.seed;
    } else if (!config.contains("seed")) {
        config["seed"] = 0;
    }
    return config;
}

fs::path prepare_out_dir(const CommonArgs& args) {
    fs::path dir(args.out_dir);
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------

int cmd_predict(const CommonArgs& args, json config) {
    const BatteryTruth truth = battery_from(config);
    const BeliefParams base_belief = belief_from(config, truth);
    const NoiseSpec spec = noise_from(config);
    const bool efficiency_squared = config.value("efficiency_squared", false);
    const double s_cc = config.value("s_cc", 1.0);
    const double s_cc_c = config.value("s_cc_c", s_cc > 0.0 ? s_cc : 0.0);
    const double s_cc_d = config.value("s_cc_d", s_cc < 0.0 ? s_cc : 0.0);

    std::vector<double> deltas;
    for (const auto& d : config.at("deltas")) deltas.push_back(d.get<double>());
    std::vector<double> horizons;
    for (const auto& h : config.at("horizons")) horizons.push_back(parse_horizon(h));
    if (deltas.empty() || horizons.empty()) throw UsageError("empty delta or horizon grid");

    std::string csv = "delta_s,horizon_s,n,sigma_current_pct,sigma_integration_pct,"
                      "sigma_capacity_pct,sigma_efficiency_pct,sigma_timing_pct,combined_pct\n";
    for (double delta : deltas) {
        if (!(delta > 0.0)) throw UsageError("delta must be > 0");
        for (double horizon : horizons) {
            const auto n = static_cast<std::uint64_t>(std::llround(horizon / delta));
            BeliefParams belief = base_belief;
            belief.delta = delta;
            CcDecomposition d;
            d.n_c = n;
            d.n_d = 0;
            d.s_cc_c = s_cc_c;
            d.s_cc_d = s_cc_d;
            d.s_cc = s_cc;
            const BudgetEntry e = predict_combined(spec, belief, d, efficiency_squared);
            csv += format_double(delta) + ',' + format_double(horizon) + ',' + std::to_string(n) +
                   ',' + format_double(100.0 * e.sigma_current) + ',' +
                   format_double(100.0 * e.sigma_integration) + ',' +
                   format_double(100.0 * e.sigma_capacity) + ',' +
                   format_double(100.0 * e.sigma_efficiency) + ',' +
                   format_double(100.0 * e.sigma_timing) + ',' +
                   format_double(100.0 * e.combined) + '\n';
        }
    }

    const fs::path out = prepare_out_dir(args);
    write_text(out / "predict.csv", csv);
    write_sidecar(out, "predict", config, nullptr);
    std::cout << csv;
    return 0;
}

int cmd_gen_profile(const CommonArgs& args, json config) {
    const SegmentProfile profile = profile_from(config, config["seed"].get<std::uint64_t>());
    const fs::path out = prepare_out_dir(args);
    std::ofstream csv(out / "profile.csv", std::ios::binary);
    write_profile_csv(profile, csv);
    csv.close();
    write_sidecar(out, "gen-profile", config,
                  json{{"segments", profile.segments.size()},
                       {"total_duration_s", profile.total_duration_s}});
    std::cout << "profile: " << profile.segments.size() << " segments, "
              << format_double(profile.total_duration_s) << " s\n";
    return 0;
}

int cmd_stats(const CommonArgs& args, json config) {
    const std::string input = config.at("input").get<std::string>();
    const double c_batt = config.value("c_batt", 1.5);
    const double sigma_i = config.value("sigma_i", 0.0);

    const SampledCurrent sc = load_csv(input);
    const LoadStats s = stats(sc, c_batt, sigma_i);

    json hist = json::array();
    for (const auto& bin : s.diff_histogram) {
        hist.push_back(json{{"lo", bin.lo}, {"hi", bin.hi}, {"count", bin.count}});
    }
    const json report{{"samples", sc.samples.size()},
                      {"delta_s", sc.delta},
                      {"sigma_l", s.sigma_l},
                      {"rho_i_coeff", s.rho_i_coeff},
                      {"rho_int_coeff", s.rho_int_coeff},
                      {"diff_histogram", hist}};

    const fs::path out = prepare_out_dir(args);
    write_text(out / "stats.json", report.dump(2) + "\n");
    write_sidecar(out, "stats", config, report);
    std::cout << "sigma_l = " << format_double(s.sigma_l)
              << " A, rho_I = " << format_double(s.rho_int_coeff) << " /h\n";
    return 0;
}

int cmd_simulate(const CommonArgs& args, json config) {
    const BatteryTruth truth = battery_from(config);
    const BeliefParams belief = belief_from(config, truth);
    const NoiseSpec spec = noise_from(config);
    const ErrorSource source = error_source_from_string(config.value("source", "combined"));
    const double s0 = config.value("s0", 0.0);
    const auto run_index = config.value("run_index", std::uint64_t{0});

    const SegmentProfile profile = profile_from(config, spec.seed);
    const SocTrace truth_trace = true_soc_trace(profile, truth, s0, truth.delta_true);
    const SocTrace corrupted = inject(source, profile, truth, belief, spec, run_index, s0);

    std::string csv = "k,t_s,s_true,s_corrupted,error\n";
    for (std::size_t k = 1; k <= corrupted.steps(); ++k) {
        const double t = static_cast<double>(k) * truth.delta_true;
        const double err = corrupted.values[k - 1] - truth_trace.values[k - 1];
        csv += std::to_string(k) + ',' + format_double(t) + ',' +
               format_double(truth_trace.values[k - 1]) + ',' +
               format_double(corrupted.values[k - 1]) + ',' + format_double(err) + '\n';
    }

    const fs::path out = prepare_out_dir(args);
    write_text(out / "simulate.csv", csv);
    const double final_err = corrupted.steps() > 0
                                 ? corrupted.values.back() - truth_trace.values.back()
                                 : 0.0;
    write_sidecar(out, "simulate", config,
                  json{{"steps", corrupted.steps()}, {"final_error", final_err}});
    std::cout << "simulate: " << corrupted.steps() << " steps, final error "
              << format_double(final_err) << "\n";
    return 0;
}

double default_tolerance(ErrorSource source) {
    switch (source) {
        case ErrorSource::Capacity: return 0.12;
        case ErrorSource::Integration: return 0.10;
        default: return 0.07;
    }
}

int cmd_mc(const CommonArgs& args, json config) {
    const BatteryTruth truth = battery_from(config);
    const BeliefParams belief = belief_from(config, truth);
    const NoiseSpec spec = noise_from(config);
    const ErrorSource source = error_source_from_string(config.at("source").get<std::string>());
    const auto runs = config.value("runs", std::size_t{1000});

    McOptions options;
    options.warmup_steps = config.value("warmup", std::size_t{32});
    options.threads = config.value("threads", 0u);
    options.efficiency_squared = config.value("efficiency_squared", false);
    options.s0 = config.value("s0", 0.0);

    const McResult result = run_mc(source, family_from(config), truth, belief, spec, runs,
                                   truth.delta_true, options);

    const fs::path out = prepare_out_dir(args);
    std::ofstream csv(out / "mc.csv", std::ios::binary);
    write_mc_csv(result, csv);
    csv.close();

    json results = mc_metadata(result, spec);
    const double tolerance = config.value("tolerance", default_tolerance(source));
    results["tolerance"] = tolerance;
    const bool ok = result.max_rel_dev <= tolerance;
    results["within_tolerance"] = ok;
    write_sidecar(out, "mc", config, results);

    std::cout << "mc " << to_string(source) << ": runs=" << runs
              << " max_rel_dev=" << format_double(result.max_rel_dev)
              << " tolerance=" << format_double(tolerance) << (ok ? " [ok]" : " [exceeded]")
              << "\n";
    return ok ? 0 : 1;
}

int cmd_fit_kappa(const CommonArgs& args, json config) {
    const BatteryTruth truth = battery_from(config);
    const auto runs = config.value("runs", std::size_t{1000});
    const auto seed = config["seed"].get<std::uint64_t>();

    McOptions options;
    options.warmup_steps = config.value("warmup", std::size_t{32});
    options.threads = config.value("threads", 0u);

    const KappaFit fit =
        fit_kappa(family_from(config), truth, truth.delta_true, runs, seed, options);

    const fs::path out = prepare_out_dir(args);
    std::ofstream csv(out / "fit_kappa.csv", std::ios::binary);
    write_mc_csv(fit.mc, csv);
    csv.close();

    const double tolerance = config.value("tolerance", 0.10);
    const bool ok = fit.max_rel_dev <= tolerance;
    write_sidecar(out, "fit-kappa", config,
                  json{{"kappa_hat", fit.kappa_hat},
                       {"sigma_l", fit.sigma_l},
                       {"max_rel_dev", fit.max_rel_dev},
                       {"tolerance", tolerance},
                       {"within_tolerance", ok}});
    std::cout << "kappa_hat = " << format_double(fit.kappa_hat)
              << " (sigma_l = " << format_double(fit.sigma_l)
              << " A, residual max_rel_dev = " << format_double(fit.max_rel_dev) << ")"
              << (ok ? " [ok]" : " [exceeded]") << "\n";
    return ok ? 0 : 1;
}

int cmd_track(const CommonArgs& args, json config) {
    const BatteryTruth truth = battery_from(config);
    const BeliefParams belief = belief_from(config, truth);
    const NoiseSpec spec = noise_from(config);
    const double s0 = config.value("s0", 0.0);

    MeasurementModel model;
    const json& m = config.at("model");
    for (const auto& c : m.at("ocv_coeffs")) model.ocv_coeffs.push_back(c.get<double>());
    if (m.contains("b")) {
        for (const auto& c : m["b"]) model.b.push_back(c.get<double>());
    }
    model.sigma_z = m.value("sigma_z", 0.0);
    validate(model);

    TrackerOptions options;
    options.incremental_q = config.value("incremental_q", true);
    options.efficiency_squared = config.value("efficiency_squared", false);
    const std::string q_mode = config.value("q_mode", "derived");
    if (q_mode == "constant") {
        options.q_mode = TrackerOptions::QMode::Constant;
        options.q_constant = config.value("q_constant", 0.0);
    } else if (q_mode != "derived") {
        throw UsageError("q_mode must be 'derived' or 'constant'");
    }

    const SegmentProfile profile = profile_from(config, spec.seed);
    const TrackResult result = track(profile, truth, belief, spec, model, spec.seed, s0, options);

    const fs::path out = prepare_out_dir(args);
    std::ofstream csv(out / "track.csv", std::ios::binary);
    write_track_csv(result, csv);
    csv.close();
    write_sidecar(out, "track", config,
                  json{{"rmse", result.rmse},
                       {"rmse_open_loop", result.rmse_open_loop},
                       {"steps", result.estimate.values.size()}});
    std::cout << "track: rmse=" << format_double(result.rmse)
              << " open_loop_rmse=" << format_double(result.rmse_open_loop) << "\n";
    return 0;
}

json predict_defaults() {
    return json{{"battery", json::object()},
                {"noise", json{{"sigma_i", 0.01}}},
                {"deltas", json::array({0.1, 1.0, 10.0})},
                {"horizons", json::array({"1h", "24h", "1y"})}};
}

json mc_defaults() {
    // Mirrors the validation experiments: 3.5 h at 1 s sampling on an
    // aligned random profile.
    return json{{"battery", json::object()},
                {"source", "current"},
                {"runs", std::size_t{1000}},
                {"noise", json{{"sigma_i", 0.01}}},
                {"profile", json{{"segments", std::size_t{400}},
                                 {"amp_min", 0.2},
                                 {"amp_max", 2.0},
                                 {"dur_min", 4.0},
                                 {"dur_max", 60.0},
                                 {"align_delta", 1.0}}}};
}

json fit_kappa_defaults() {
    return json{{"battery", json::object()},
                {"runs", std::size_t{1000}},
                {"profile", json{{"amp_min", 0.2},
                                 {"amp_max", 2.0},
                                 {"dur_min", 0.1},
                                 {"dur_max", 0.4},
                                 {"duration", 3600.0},
                                 {"per_run", true}}}};
}

json simulate_defaults() {
    return json{{"battery", json::object()},
                {"source", "combined"},
                {"noise", json::object()},
                {"profile", json{{"segments", std::size_t{200}},
                                 {"amp_min", 0.2},
                                 {"amp_max", 2.0},
                                 {"dur_min", 4.0},
                                 {"dur_max", 60.0},
                                 {"align_delta", 1.0}}}};
}

json track_defaults() {
    return json{{"battery", json::object()},
                {"noise", json{{"sigma_i", 0.05}, {"sigma_batt", 0.09}}},
                {"model", json{{"ocv_coeffs", json::array({3.2, 0.7})},
                               {"b", json::array({0.05})},
                               {"sigma_z", 0.01}}},
                {"profile", json{{"segments", std::size_t{60}},
                                 {"amp_min", -1.5},
                                 {"amp_max", 1.5},
                                 {"dur_min", 10.0},
                                 {"dur_max", 120.0},
                                 {"align_delta", 1.0}}}};
}

json gen_profile_defaults() {
    return json{{"profile", json{{"segments", std::size_t{100}},
                                 {"amp_min", -2.0},
                                 {"amp_max", 2.0},
                                 {"dur_min", 1.0},
                                 {"dur_max", 60.0}}}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coulomb-counting SOC error analysis toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags are accepted after the subcommand name

    CommonArgs args;
    app.add_option("--config", args.config_path, "JSON config file (or a .meta.json sidecar)");
    app.add_option("--out", args.out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", args.seed, "RNG seed");

    std::string source_flag;
    std::size_t runs_flag = 0;
    std::string input_flag;

    auto* predict = app.add_subcommand("predict", "closed-form error tables over a grid");
    auto* simulate = app.add_subcommand("simulate", "one corrupted simulation run");
    simulate->add_option("--source", source_flag, "error source");
    auto* mc = app.add_subcommand("mc", "Monte-Carlo validation of one error source");
    mc->add_option("--source", source_flag, "error source");
    mc->add_option("--runs", runs_flag, "number of Monte-Carlo runs");
    auto* fit = app.add_subcommand("fit-kappa", "fit the integration-error constant");
    fit->add_option("--runs", runs_flag, "number of Monte-Carlo runs");
    auto* track_cmd = app.add_subcommand("track", "closed-loop recursive SOC tracking");
    auto* gen = app.add_subcommand("gen-profile", "generate a piecewise-constant profile");
    auto* stats_cmd = app.add_subcommand("stats", "load statistics of a current log");
    stats_cmd->add_option("--input", input_flag, "current log CSV (t_s,i_a)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    args.seed_given = seed_opt->count() > 0;

    try {
        if (*predict) return cmd_predict(args, resolve_config(args, predict_defaults()));
        if (*simulate) {
            json config = resolve_config(args, simulate_defaults());
            if (!source_flag.empty()) config["source"] = source_flag;
            return cmd_simulate(args, config);
        }
        if (*mc) {
            json config = resolve_config(args, mc_defaults());
            if (!source_flag.empty()) config["source"] = source_flag;
            if (runs_flag > 0) config["runs"] = runs_flag;
            return cmd_mc(args, config);
        }
        if (*fit) {
            json config = resolve_config(args, fit_kappa_defaults());
            if (runs_flag > 0) config["runs"] = runs_flag;
            return cmd_fit_kappa(args, config);
        }
        if (*track_cmd) return cmd_track(args, resolve_config(args, track_defaults()));
        if (*gen) return cmd_gen_profile(args, resolve_config(args, gen_profile_defaults()));
        if (*stats_cmd) {
            json config = resolve_config(args, json{{"c_batt", 1.5}});
            if (!input_flag.empty()) config["input"] = input_flag;
            return cmd_stats(args, config);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
