#include "ccsoc/montecarlo.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "ccsoc/util.hpp"

namespace ccsoc {

namespace {

// Runs are reduced in fixed-size chunks combined in chunk order, so the
// reduction tree does not depend on the thread count.
constexpr std::size_t kChunkRuns = 16;

// Theoretical s.d. below this is treated as an exact zero (SOC is an O(1)
// quantity, so the floor is a machine-epsilon scale).
constexpr double kSigmaFloor = 10.0 * std::numeric_limits<double>::epsilon();

double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    NeumaierSum mean_acc;
    for (double x : xs) mean_acc.add(x);
    const double mean = mean_acc.value() / static_cast<double>(xs.size());
    NeumaierSum var_acc;
    for (double x : xs) var_acc.add((x - mean) * (x - mean));
    return std::sqrt(var_acc.value() / static_cast<double>(xs.size() - 1));
}

/// Per-k compensated accumulator pair used for the squared-error reduction.
struct CompensatedArray {
    std::vector<double> sum;
    std::vector<double> comp;

    explicit CompensatedArray(std::size_t n) : sum(n, 0.0), comp(n, 0.0) {}

    void add(std::size_t k, double x) {
        const double t = sum[k] + x;
        if (std::abs(sum[k]) >= std::abs(x)) {
            comp[k] += (sum[k] - t) + x;
        } else {
            comp[k] += (x - t) + sum[k];
        }
        sum[k] = t;
    }

    void merge(const CompensatedArray& other) {
        for (std::size_t k = 0; k < sum.size(); ++k) {
            add(k, other.sum[k] + other.comp[k]);
        }
    }

    double value(std::size_t k) const { return sum[k] + comp[k]; }
};

struct TheorySeries {
    std::vector<double> sigma;  // per k, 1-based stored at k-1
};

TheorySeries theory_for_source(ErrorSource source, std::span<const double> clean_samples,
                               const BatteryTruth& truth, const BeliefParams& belief,
                               const NoiseSpec& spec, double sigma_l_used, double delta,
                               bool efficiency_squared) {
    TheorySeries theory;
    theory.sigma.reserve(clean_samples.size());

    const double rho_c = spec.sigma_batt / truth.c_true;
    DecompAccumulator acc(belief);
    for (double i : clean_samples) {
        acc.add(i);
        const CcDecomposition d = acc.current();
        double sigma = 0.0;
        switch (source) {
            case ErrorSource::Current:
                sigma = predict_sigma_current(delta, spec.sigma_i, belief.c_batt, belief.eta_c,
                                              belief.eta_d, d.n_c, d.n_d, efficiency_squared);
                break;
            case ErrorSource::Integration:
                sigma = predict_sigma_integration(delta, spec.kappa, sigma_l_used, belief.c_batt,
                                                  belief.eta_c, belief.eta_d, d.n_c, d.n_d,
                                                  efficiency_squared);
                break;
            case ErrorSource::Capacity:
                sigma = predict_sigma_capacity(rho_c, d.s_cc);
                break;
            case ErrorSource::Efficiency:
                sigma = predict_sigma_efficiency(spec.sigma_eta_c, spec.sigma_eta_d, d.s_cc_c,
                                                 d.s_cc_d);
                break;
            case ErrorSource::Timing:
                sigma = spec.rho_delta_fixed
                            ? std::abs(predict_timing_bias(*spec.rho_delta_fixed, d.s_cc))
                            : predict_sigma_timing(spec.sigma_delta, d.s_cc);
                break;
            case ErrorSource::Combined: {
                const double sc = predict_sigma_current(delta, spec.sigma_i, belief.c_batt,
                                                        belief.eta_c, belief.eta_d, d.n_c, d.n_d,
                                                        efficiency_squared);
                const double si = predict_sigma_integration(delta, spec.kappa, sigma_l_used,
                                                            belief.c_batt, belief.eta_c,
                                                            belief.eta_d, d.n_c, d.n_d,
                                                            efficiency_squared);
                const double scap = predict_sigma_capacity(rho_c, d.s_cc);
                const double seff = predict_sigma_efficiency(spec.sigma_eta_c, spec.sigma_eta_d,
                                                             d.s_cc_c, d.s_cc_d);
                const double stim = spec.rho_delta_fixed
                                        ? std::abs(predict_timing_bias(*spec.rho_delta_fixed, d.s_cc))
                                        : predict_sigma_timing(spec.sigma_delta, d.s_cc);
                sigma = std::sqrt(sc * sc + si * si + scap * scap + seff * seff + stim * stim);
                break;
            }
        }
        theory.sigma.push_back(sigma);
    }
    return theory;
}

} // namespace

ProfileFamily ProfileFamily::fixed(SegmentProfile profile) {
    validate(profile);
    ProfileFamily family;
    family.per_run = false;
    family.make = [profile = std::move(profile)](Philox&) { return profile; };
    return family;
}

ProfileFamily ProfileFamily::from_spec(ProfileSpec spec, bool per_run) {
    ProfileFamily family;
    family.per_run = per_run;
    family.make = [spec](Philox& rng) { return generate_profile(spec, rng); };
    return family;
}

ProfileFamily ProfileFamily::timed(ProfileSpec spec, double target_duration_s, bool per_run) {
    if (!(target_duration_s > 0.0)) {
        throw std::invalid_argument("target duration must be > 0");
    }
    if (!(spec.dur_min > 0.0) || !(spec.dur_min <= spec.dur_max) ||
        !(spec.amp_min <= spec.amp_max)) {
        throw std::invalid_argument("profile spec has an empty amplitude or duration range");
    }
    ProfileFamily family;
    family.per_run = per_run;
    family.make = [spec, target_duration_s](Philox& rng) {
        std::vector<SegmentProfile::Segment> segments;
        double covered = 0.0;
        while (covered < target_duration_s) {
            double duration = spec.dur_min + (spec.dur_max - spec.dur_min) * rng.uniform01();
            const double amps = spec.amp_min + (spec.amp_max - spec.amp_min) * rng.uniform01();
            if (covered + duration >= target_duration_s) {
                duration = target_duration_s - covered;
                covered = target_duration_s;
            } else {
                covered += duration;
            }
            if (duration > 0.0) {
                segments.push_back({duration, amps});
            }
        }
        auto profile = SegmentProfile::from_segments(std::move(segments));
        profile.total_duration_s = target_duration_s;  // exact by construction
        return profile;
    };
    return family;
}

McResult run_mc(ErrorSource source, const ProfileFamily& family, const BatteryTruth& truth,
                const BeliefParams& belief_template, const NoiseSpec& spec, std::size_t runs,
                double delta, const McOptions& options) {
    validate(truth);
    validate(belief_template);
    validate(spec);
    if (runs < 2) {
        throw std::invalid_argument("Monte-Carlo needs at least 2 runs");
    }
    if (!family.make) {
        throw std::invalid_argument("profile family has no generator");
    }
    if (std::abs(delta - truth.delta_true) > 1e-12 * std::abs(delta)) {
        throw std::invalid_argument("delta must match the true sample period");
    }
    if (family.per_run && source != ErrorSource::Integration) {
        throw std::invalid_argument(
            "per-run profile families are only supported for the integration source");
    }

    // Run 0's profile fixes the sample grid and the clean decomposition the
    // theory is evaluated on.
    Philox profile_rng0(spec.seed, mc_stream(0, RngPurpose::Profile));
    const SegmentProfile profile0 = family.make(profile_rng0);
    const SampledCurrent clean0 = sample(profile0, truth.delta_true);
    const std::size_t n = clean0.samples.size();
    if (n == 0) {
        throw std::invalid_argument("profile is shorter than one sample period");
    }

    SocTrace shared_truth;
    if (!family.per_run) {
        shared_truth = true_soc_trace(profile0, truth, options.s0, truth.delta_true);
    }

    const std::size_t chunk_count = (runs + kChunkRuns - 1) / kChunkRuns;
    std::vector<CompensatedArray> partial_sq(chunk_count, CompensatedArray(n));
    std::vector<double> partial_sigma_l(chunk_count, 0.0);
    std::vector<double> partial_cap_scale(chunk_count, 0.0);

    std::atomic<std::size_t> next_chunk{0};
    std::exception_ptr worker_error;
    std::mutex error_mutex;

    const bool measure_sigma_l = source == ErrorSource::Integration;
    const bool measure_cap_scale = source == ErrorSource::Capacity && spec.sigma_batt > 0.0;

    auto worker = [&]() {
        try {
            for (;;) {
                const std::size_t c = next_chunk.fetch_add(1);
                if (c >= chunk_count) break;
                const std::size_t begin = c * kChunkRuns;
                const std::size_t end = std::min(begin + kChunkRuns, runs);
                NeumaierSum sigma_l_acc;
                NeumaierSum cap_scale_acc;
                for (std::size_t m = begin; m < end; ++m) {
                    SegmentProfile run_profile;
                    const SegmentProfile* profile = &profile0;
                    SocTrace run_truth;
                    const SocTrace* truth_trace = &shared_truth;
                    if (family.per_run) {
                        if (m == 0) {
                            run_profile = profile0;
                        } else {
                            Philox rng(spec.seed, mc_stream(m, RngPurpose::Profile));
                            run_profile = family.make(rng);
                        }
                        profile = &run_profile;
                        run_truth = true_soc_trace(run_profile, truth, options.s0,
                                                   truth.delta_true);
                        truth_trace = &run_truth;
                    }

                    const InjectionRealization real =
                        realize_injection(source, *profile, truth, belief_template, spec, m);
                    if (real.measured.samples.size() != n || truth_trace->values.size() != n) {
                        throw std::runtime_error(
                            "per-run profile produced a different sample count");
                    }

                    const double scale_c =
                        real.eta_c_used * real.delta_used / (kSecondsPerHour * real.c_used);
                    const double scale_d =
                        real.eta_d_used * real.delta_used / (kSecondsPerHour * real.c_used);
                    NeumaierSum acc;
                    for (std::size_t k = 0; k < n; ++k) {
                        const double z = real.measured.samples[k];
                        acc.add(z > 0.0 ? scale_c * z : scale_d * z);
                        const double err = truth_trace->values[k] - (options.s0 + acc.value());
                        partial_sq[c].add(k, err * err);
                    }
                    if (measure_sigma_l) {
                        sigma_l_acc.add(sample_sd(real.measured.samples));
                    }
                    if (measure_cap_scale) {
                        const double relative = (truth.c_true - real.c_used) / real.c_used;
                        cap_scale_acc.add(relative * relative);
                    }
                }
                partial_sigma_l[c] = sigma_l_acc.value();
                partial_cap_scale[c] = cap_scale_acc.value();
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!worker_error) worker_error = std::current_exception();
        }
    };

    unsigned thread_count = options.threads != 0 ? options.threads
                                                 : std::max(1u, std::thread::hardware_concurrency());
    thread_count = std::min<unsigned>(thread_count, static_cast<unsigned>(chunk_count));
    if (thread_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(thread_count);
        for (unsigned t = 0; t < thread_count; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) t.join();
    }
    if (worker_error) std::rethrow_exception(worker_error);

    CompensatedArray total(n);
    for (const auto& part : partial_sq) {
        total.merge(part);
    }
    NeumaierSum sigma_l_total;
    for (double part : partial_sigma_l) sigma_l_total.add(part);
    NeumaierSum cap_scale_total;
    for (double part : partial_cap_scale) cap_scale_total.add(part);

    McResult result;
    result.source = source;
    result.runs = runs;
    result.delta = delta;
    result.seed = spec.seed;
    result.sigma_l_measured =
        measure_sigma_l ? sigma_l_total.value() / static_cast<double>(runs) : 0.0;
    if (measure_cap_scale) {
        const double rho_c = spec.sigma_batt / truth.c_true;
        result.capacity_exact_scale =
            std::sqrt(cap_scale_total.value() / static_cast<double>(runs)) / rho_c;
    }

    result.empirical_sd.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        result.empirical_sd.push_back(std::sqrt(std::max(0.0, total.value(k)) /
                                                static_cast<double>(runs)));
    }

    const double sigma_l_used = spec.sigma_l > 0.0 ? spec.sigma_l : result.sigma_l_measured;
    result.theoretical_sd = theory_for_source(source, clean0.samples, truth, belief_template,
                                              spec, sigma_l_used, delta,
                                              options.efficiency_squared)
                                .sigma;

    // Burn-in: skip indices whose theory sits at the numerical floor, plus a
    // configurable warm-up for families whose first steps are not yet in the
    // stationary regime.
    std::size_t k_min = n + 1;
    for (std::size_t k = 0; k < n; ++k) {
        if (result.theoretical_sd[k] > kSigmaFloor) {
            k_min = k + 1;
            break;
        }
    }
    if (k_min <= n) {
        k_min = std::max(k_min, options.warmup_steps + 1);
    }
    result.k_min = k_min;

    double max_rel = 0.0;
    for (std::size_t k = k_min; k <= n; ++k) {
        const double th = result.theoretical_sd[k - 1];
        if (th <= kSigmaFloor) continue;
        max_rel = std::max(max_rel, std::abs(result.empirical_sd[k - 1] - th) / th);
    }
    result.max_rel_dev = max_rel;
    return result;
}

KappaFit fit_kappa(const ProfileFamily& family, const BatteryTruth& truth, double delta,
                   std::size_t runs, std::uint64_t seed, const McOptions& options) {
    NoiseSpec spec;
    spec.kappa = 1.0;
    spec.seed = seed;

    BeliefParams belief{truth.c_true, truth.eta_c_true, truth.eta_d_true, truth.delta_true};
    McResult mc = run_mc(ErrorSource::Integration, family, truth, belief, spec, runs, delta,
                         options);

    if (mc.sigma_l_measured <= 1e-12) {
        throw std::invalid_argument("degenerate profile: constant current has no integration error");
    }

    NeumaierSum num;
    NeumaierSum den;
    const std::size_t n = mc.empirical_sd.size();
    for (std::size_t k = mc.k_min; k <= n; ++k) {
        const double b = mc.theoretical_sd[k - 1];
        if (b <= kSigmaFloor) continue;
        num.add(mc.empirical_sd[k - 1] * b);
        den.add(b * b);
    }
    const double kappa_hat = den.value() > 0.0 ? num.value() / den.value() : 0.0;

    double max_rel = 0.0;
    for (std::size_t k = mc.k_min; k <= n; ++k) {
        const double scaled = kappa_hat * mc.theoretical_sd[k - 1];
        mc.theoretical_sd[k - 1] = scaled;
        if (scaled > kSigmaFloor) {
            max_rel = std::max(max_rel, std::abs(mc.empirical_sd[k - 1] - scaled) / scaled);
        }
    }
    for (std::size_t k = 1; k < mc.k_min && k <= n; ++k) {
        mc.theoretical_sd[k - 1] *= kappa_hat;
    }
    mc.max_rel_dev = max_rel;

    KappaFit fit;
    fit.kappa_hat = kappa_hat;
    fit.sigma_l = mc.sigma_l_measured;
    fit.max_rel_dev = max_rel;
    fit.mc = std::move(mc);
    return fit;
}

void write_mc_csv(const McResult& result, std::ostream& out) {
    out << "k,t_s,empirical_sd,theoretical_sd\n";
    for (std::size_t k = 1; k <= result.empirical_sd.size(); ++k) {
        out << k << ',' << format_double(static_cast<double>(k) * result.delta) << ','
            << format_double(result.empirical_sd[k - 1]) << ','
            << format_double(result.theoretical_sd[k - 1]) << '\n';
    }
}

nlohmann::json mc_metadata(const McResult& result, const NoiseSpec& spec) {
    nlohmann::json j{{"source", to_string(result.source)},
                     {"runs", result.runs},
                     {"seed", result.seed},
                     {"delta", result.delta},
                     {"k_min", result.k_min},
                     {"max_rel_dev", result.max_rel_dev},
                     {"sigma_l_measured", result.sigma_l_measured},
                     {"noise", to_json(spec)}};
    if (result.source == ErrorSource::Capacity) {
        j["capacity_exact_scale"] = result.capacity_exact_scale;
    }
    return j;
}

} // namespace ccsoc
