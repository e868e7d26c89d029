#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>

#include "ccsoc/errors.hpp"
#include "ccsoc/model.hpp"
#include "ccsoc/profiles.hpp"

#include "json.hpp"

namespace ccsoc {

/// Source of per-run current profiles. A fixed family hands every run the
/// same profile; a per-run family draws a fresh profile from the run's own
/// substream. The integration experiment needs per-run profiles: with a
/// fixed profile every run is identical and the ensemble s.d. degenerates
/// to a single |error path| that no sqrt(n) theory can match.
struct ProfileFamily {
    std::function<SegmentProfile(Philox&)> make;
    bool per_run = false;

    static ProfileFamily fixed(SegmentProfile profile);
    static ProfileFamily from_spec(ProfileSpec spec, bool per_run = false);
    /// Draw segments until the profile covers target_duration_s, truncating
    /// the final segment; every run then has the same sample count.
    static ProfileFamily timed(ProfileSpec spec, double target_duration_s, bool per_run = true);
};

struct McOptions {
    std::size_t warmup_steps = 32;  // extra burn-in before relative deviations count
    unsigned threads = 0;           // 0 = hardware concurrency
    bool efficiency_squared = false;
    double s0 = 0.0;
};

/// Monte-Carlo validation result for one error source.
struct McResult {
    ErrorSource source = ErrorSource::Current;
    std::size_t runs = 0;
    double delta = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> empirical_sd;    // sigma-hat(k), k = 1..n
    std::vector<double> theoretical_sd;  // sigma(k) from the matching predictor
    std::size_t k_min = 1;               // first index where deviations are evaluated
    double max_rel_dev = 0.0;            // max |emp - th| / th over evaluated k
    double sigma_l_measured = 0.0;       // mean sampled load s.d. across runs
    /// Capacity source diagnostic: the first-order theory uses rho_C; the
    /// realized error per run scales with C_delta / (C_true + C_delta).
    /// Multiplying theoretical_sd by this factor removes the Taylor gap.
    double capacity_exact_scale = 1.0;
};

/// Run M seeded simulations of one error source, estimate the empirical
/// SOC-error s.d. sigma-hat(k) = sqrt(mean_m (s_true(k) - s_m(k))^2), and
/// compare against the closed-form predictor. Results are bit-identical
/// for a fixed (spec.seed, M) regardless of thread count.
McResult run_mc(ErrorSource source, const ProfileFamily& family, const BatteryTruth& truth,
                const BeliefParams& belief_template, const NoiseSpec& spec, std::size_t runs,
                double delta, const McOptions& options = {});

struct KappaFit {
    double kappa_hat = 0.0;
    double sigma_l = 0.0;        // measured load s.d. used in the fit
    double max_rel_dev = 0.0;    // residual after scaling theory by kappa_hat
    McResult mc;                 // theoretical_sd holds the kappa_hat-scaled curve
};

/// Least-squares fit of the integration-error constant:
/// kappa_hat = sum(sigma_hat * b) / sum(b^2) with b(k) the kappa = 1
/// prediction. Throws if the profile family is degenerate (sigma_l = 0).
KappaFit fit_kappa(const ProfileFamily& family, const BatteryTruth& truth, double delta,
                   std::size_t runs, std::uint64_t seed = 0, const McOptions& options = {});

/// CSV columns: k,t_s,empirical_sd,theoretical_sd (k = 1..n).
void write_mc_csv(const McResult& result, std::ostream& out);

/// Sidecar content: seed, run count, spec, max_rel_dev, k_min.
nlohmann::json mc_metadata(const McResult& result, const NoiseSpec& spec);

} // namespace ccsoc
