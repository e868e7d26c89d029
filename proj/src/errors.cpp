#include "ccsoc/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace ccsoc {

const char* to_string(ErrorSource source) {
    switch (source) {
        case ErrorSource::Current: return "current";
        case ErrorSource::Integration: return "integration";
        case ErrorSource::Capacity: return "capacity";
        case ErrorSource::Efficiency: return "efficiency";
        case ErrorSource::Timing: return "timing";
        case ErrorSource::Combined: return "combined";
    }
    return "unknown";
}

ErrorSource error_source_from_string(const std::string& name) {
    if (name == "current") return ErrorSource::Current;
    if (name == "integration") return ErrorSource::Integration;
    if (name == "capacity") return ErrorSource::Capacity;
    if (name == "efficiency") return ErrorSource::Efficiency;
    if (name == "timing") return ErrorSource::Timing;
    if (name == "combined") return ErrorSource::Combined;
    throw std::invalid_argument("unknown error source: " + name);
}

ErrorClass classify(ErrorSource source) {
    switch (source) {
        case ErrorSource::Current:
        case ErrorSource::Integration:
            return ErrorClass::TimeCumulative;
        default:
            return ErrorClass::SocProportional;
    }
}

namespace {

void require_nonnegative(double x, const char* name) {
    if (!std::isfinite(x) || x < 0.0) {
        throw std::invalid_argument(std::string(name) + " must be finite and >= 0");
    }
}

double efficiency_weight(double eta_c, double eta_d, std::uint64_t n_c, std::uint64_t n_d,
                         bool squared) {
    const double wc = squared ? eta_c * eta_c : eta_c;
    const double wd = squared ? eta_d * eta_d : eta_d;
    return wc * static_cast<double>(n_c) + wd * static_cast<double>(n_d);
}

} // namespace

void validate(const NoiseSpec& spec) {
    require_nonnegative(spec.sigma_i, "sigma_i");
    require_nonnegative(spec.kappa, "kappa");
    require_nonnegative(spec.sigma_l, "sigma_l");
    require_nonnegative(spec.sigma_batt, "sigma_batt");
    require_nonnegative(spec.sigma_eta_c, "sigma_eta_c");
    require_nonnegative(spec.sigma_eta_d, "sigma_eta_d");
    require_nonnegative(spec.sigma_delta, "sigma_delta");
    if (spec.rho_delta_fixed) {
        if (!std::isfinite(*spec.rho_delta_fixed)) {
            throw std::invalid_argument("rho_delta_fixed must be finite");
        }
        if (spec.sigma_delta > 0.0) {
            throw std::invalid_argument(
                "timing error modes conflict: set sigma_delta or rho_delta_fixed, not both");
        }
    }
}

NoiseSpec noise_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("noise spec must be a JSON object");
    }
    NoiseSpec spec;
    for (const auto& [key, value] : j.items()) {
        if (key == "sigma_i") spec.sigma_i = value.get<double>();
        else if (key == "kappa") spec.kappa = value.get<double>();
        else if (key == "sigma_l") spec.sigma_l = value.get<double>();
        else if (key == "sigma_batt") spec.sigma_batt = value.get<double>();
        else if (key == "sigma_eta_c") spec.sigma_eta_c = value.get<double>();
        else if (key == "sigma_eta_d") spec.sigma_eta_d = value.get<double>();
        else if (key == "sigma_delta") spec.sigma_delta = value.get<double>();
        else if (key == "rho_delta_fixed") spec.rho_delta_fixed = value.get<double>();
        else if (key == "seed") spec.seed = value.get<std::uint64_t>();
        else throw std::invalid_argument("unknown noise spec field: " + key);
    }
    validate(spec);
    return spec;
}

nlohmann::json to_json(const NoiseSpec& spec) {
    nlohmann::json j{{"sigma_i", spec.sigma_i},
                     {"kappa", spec.kappa},
                     {"sigma_l", spec.sigma_l},
                     {"sigma_batt", spec.sigma_batt},
                     {"sigma_eta_c", spec.sigma_eta_c},
                     {"sigma_eta_d", spec.sigma_eta_d},
                     {"sigma_delta", spec.sigma_delta},
                     {"seed", spec.seed}};
    if (spec.rho_delta_fixed) {
        j["rho_delta_fixed"] = *spec.rho_delta_fixed;
    }
    return j;
}

double predict_sigma_current(double delta_s, double sigma_i, double c_batt, double eta_c,
                             double eta_d, std::uint64_t n_c, std::uint64_t n_d,
                             bool efficiency_squared) {
    require_nonnegative(delta_s, "delta");
    require_nonnegative(sigma_i, "sigma_i");
    if (!(c_batt > 0.0)) throw std::invalid_argument("c_batt must be > 0");
    return (delta_s * sigma_i / (kSecondsPerHour * c_batt)) *
           std::sqrt(efficiency_weight(eta_c, eta_d, n_c, n_d, efficiency_squared));
}

double predict_sigma_integration(double delta_s, double kappa, double sigma_l, double c_batt,
                                 double eta_c, double eta_d, std::uint64_t n_c, std::uint64_t n_d,
                                 bool efficiency_squared) {
    require_nonnegative(delta_s, "delta");
    require_nonnegative(kappa, "kappa");
    require_nonnegative(sigma_l, "sigma_l");
    if (!(c_batt > 0.0)) throw std::invalid_argument("c_batt must be > 0");
    return (kappa * delta_s * sigma_l / (kSecondsPerHour * c_batt)) *
           std::sqrt(efficiency_weight(eta_c, eta_d, n_c, n_d, efficiency_squared));
}

double predict_sigma_capacity(double rho_c, double s_cc) {
    require_nonnegative(rho_c, "rho_c");
    return rho_c * std::abs(s_cc);
}

double predict_sigma_efficiency(double sigma_eta_c, double sigma_eta_d, double s_cc_c,
                                double s_cc_d) {
    require_nonnegative(sigma_eta_c, "sigma_eta_c");
    require_nonnegative(sigma_eta_d, "sigma_eta_d");
    return std::sqrt(sigma_eta_c * sigma_eta_c * s_cc_c * s_cc_c +
                     sigma_eta_d * sigma_eta_d * s_cc_d * s_cc_d);
}

double predict_sigma_timing(double sigma_delta, double s_cc) {
    require_nonnegative(sigma_delta, "sigma_delta");
    return sigma_delta * std::abs(s_cc);
}

double predict_timing_bias(double rho_delta, double s_cc) {
    if (!std::isfinite(rho_delta)) throw std::invalid_argument("rho_delta must be finite");
    return rho_delta * s_cc;
}

double rho_delta_from_drift(double drift_s, double period_s) {
    if (!(period_s > 0.0)) throw std::invalid_argument("period must be > 0");
    return drift_s / period_s;
}

BudgetEntry predict_combined(const NoiseSpec& spec, const BeliefParams& belief,
                             const CcDecomposition& decomp, bool efficiency_squared) {
    validate(spec);
    validate(belief);

    BudgetEntry e;
    e.sigma_current = predict_sigma_current(belief.delta, spec.sigma_i, belief.c_batt,
                                            belief.eta_c, belief.eta_d, decomp.n_c, decomp.n_d,
                                            efficiency_squared);
    e.sigma_integration = predict_sigma_integration(belief.delta, spec.kappa, spec.sigma_l,
                                                    belief.c_batt, belief.eta_c, belief.eta_d,
                                                    decomp.n_c, decomp.n_d, efficiency_squared);
    const double rho_c = spec.sigma_batt / belief.c_batt;
    e.sigma_capacity = predict_sigma_capacity(rho_c, decomp.s_cc);
    e.sigma_efficiency =
        predict_sigma_efficiency(spec.sigma_eta_c, spec.sigma_eta_d, decomp.s_cc_c, decomp.s_cc_d);
    e.sigma_timing = predict_sigma_timing(spec.sigma_delta, decomp.s_cc);
    e.combined = std::sqrt(e.sigma_current * e.sigma_current +
                           e.sigma_integration * e.sigma_integration +
                           e.sigma_capacity * e.sigma_capacity +
                           e.sigma_efficiency * e.sigma_efficiency +
                           e.sigma_timing * e.sigma_timing);
    return e;
}

ErrorBudget predict_budget(std::span<const double> currents, const NoiseSpec& spec,
                           const BeliefParams& belief, bool efficiency_squared) {
    validate(spec);
    DecompAccumulator acc(belief);

    ErrorBudget budget;
    const std::size_t n = currents.size();
    budget.sigma_current.reserve(n);
    budget.sigma_integration.reserve(n);
    budget.sigma_capacity.reserve(n);
    budget.sigma_efficiency.reserve(n);
    budget.sigma_timing.reserve(n);
    budget.combined.reserve(n);

    for (double i : currents) {
        acc.add(i);
        const BudgetEntry e = predict_combined(spec, belief, acc.current(), efficiency_squared);
        budget.sigma_current.push_back(e.sigma_current);
        budget.sigma_integration.push_back(e.sigma_integration);
        budget.sigma_capacity.push_back(e.sigma_capacity);
        budget.sigma_efficiency.push_back(e.sigma_efficiency);
        budget.sigma_timing.push_back(e.sigma_timing);
        budget.combined.push_back(e.combined);
    }
    return budget;
}

ConfidenceBands capacity_confidence_bands(double rho_c, double soc) {
    const double sigma_pct = 100.0 * predict_sigma_capacity(rho_c, soc);
    const double center_pct = 100.0 * soc;
    ConfidenceBands bands{};
    for (int level = 1; level <= 3; ++level) {
        bands.lo[level - 1] = center_pct - level * sigma_pct;
        bands.hi[level - 1] = center_pct + level * sigma_pct;
    }
    return bands;
}

InjectionRealization realize_injection(ErrorSource source, const SegmentProfile& profile,
                                       const BatteryTruth& truth,
                                       const BeliefParams& belief_template, const NoiseSpec& spec,
                                       std::uint64_t run_index) {
    validate(truth);
    validate(belief_template);
    validate(spec);

    const bool perturb_current = source == ErrorSource::Current || source == ErrorSource::Combined;
    const bool perturb_capacity =
        source == ErrorSource::Capacity || source == ErrorSource::Combined;
    const bool perturb_efficiency =
        source == ErrorSource::Efficiency || source == ErrorSource::Combined;
    const bool perturb_timing = source == ErrorSource::Timing || source == ErrorSource::Combined;

    InjectionRealization real;
    real.c_used = belief_template.c_batt;
    real.eta_c_used = belief_template.eta_c;
    real.eta_d_used = belief_template.eta_d;
    real.delta_used = belief_template.delta;

    // Hardware ticks at the true period; the counter's belief about the
    // period is what timing error distorts.
    real.measured = sample(profile, truth.delta_true, 0.0);

    if (perturb_current && spec.sigma_i > 0.0) {
        Philox rng(spec.seed, mc_stream(run_index, RngPurpose::CurrentNoise));
        for (double& z : real.measured.samples) {
            z += spec.sigma_i * rng.gaussian();
        }
    }

    // Parameter draws: one per run, held constant over the trace.
    if (perturb_capacity && spec.sigma_batt > 0.0) {
        Philox rng(spec.seed, mc_stream(run_index, RngPurpose::CapacityDraw));
        real.c_used = truth.c_true + spec.sigma_batt * rng.gaussian();
        if (!(real.c_used > 0.0)) {
            throw std::runtime_error("capacity draw produced a non-positive capacity");
        }
    }

    if (perturb_efficiency) {
        if (spec.sigma_eta_c > 0.0) {
            Philox rng(spec.seed, mc_stream(run_index, RngPurpose::EfficiencyChargeDraw));
            real.eta_c_used = truth.eta_c_true * (1.0 + spec.sigma_eta_c * rng.gaussian());
        }
        if (spec.sigma_eta_d > 0.0) {
            Philox rng(spec.seed, mc_stream(run_index, RngPurpose::EfficiencyDischargeDraw));
            real.eta_d_used = truth.eta_d_true * (1.0 + spec.sigma_eta_d * rng.gaussian());
        }
        if (real.eta_c_used <= 0.0 || real.eta_d_used <= 0.0) {
            throw std::runtime_error("efficiency draw produced a non-positive efficiency");
        }
    }

    if (perturb_timing) {
        double rho = 0.0;
        if (spec.rho_delta_fixed) {
            rho = *spec.rho_delta_fixed;
        } else if (spec.sigma_delta > 0.0) {
            Philox rng(spec.seed, mc_stream(run_index, RngPurpose::TimingDraw));
            rho = spec.sigma_delta * rng.gaussian();
        }
        real.delta_used = truth.delta_true * (1.0 + rho);
        if (!(real.delta_used > 0.0)) {
            throw std::runtime_error("timing draw produced a non-positive sample period");
        }
    }
    return real;
}

SocTrace inject(ErrorSource source, const SegmentProfile& profile, const BatteryTruth& truth,
                const BeliefParams& belief_template, const NoiseSpec& spec,
                std::uint64_t run_index, double s0) {
    const InjectionRealization real =
        realize_injection(source, profile, truth, belief_template, spec, run_index);

    SocTrace trace;
    trace.s0 = s0;
    trace.delta = truth.delta_true;
    trace.values.reserve(real.measured.samples.size());

    const double scale_c = real.eta_c_used * real.delta_used / (kSecondsPerHour * real.c_used);
    const double scale_d = real.eta_d_used * real.delta_used / (kSecondsPerHour * real.c_used);
    NeumaierSum acc;
    for (double z : real.measured.samples) {
        acc.add(z > 0.0 ? scale_c * z : scale_d * z);
        trace.values.push_back(s0 + acc.value());
    }
    return trace;
}

} // namespace ccsoc
