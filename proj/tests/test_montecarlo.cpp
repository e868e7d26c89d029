#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "ccsoc/montecarlo.hpp"

using namespace ccsoc;

namespace {

const BatteryTruth kTruth{1.5, 1.0, 1.0, 1.0};
const BeliefParams kBelief{1.5, 1.0, 1.0, 1.0};

ProfileFamily aligned_family(double delta, std::size_t segment_count = 50, double amp_lo = 0.2,
                             double amp_hi = 2.0) {
    ProfileSpec spec;
    spec.segment_count = segment_count;
    spec.amp_min = amp_lo;
    spec.amp_max = amp_hi;
    spec.dur_min = 4.0 * delta;
    spec.dur_max = 12.0 * delta;
    spec.align_delta = delta;
    return ProfileFamily::from_spec(spec);
}

/// Integration family in the heavy-downsampling regime: segments much
/// shorter than the sample period, like a load changing faster than the
/// meter.
ProfileFamily integration_family(double delta, double duration) {
    ProfileSpec spec;
    spec.amp_min = 0.2;
    spec.amp_max = 2.0;
    spec.dur_min = 0.1 * delta;
    spec.dur_max = 0.4 * delta;
    return ProfileFamily::timed(spec, duration, true);
}

double amplitude_at(const SegmentProfile& profile, double t) {
    double start = 0.0;
    for (const auto& seg : profile.segments) {
        const double end = start + seg.duration_s;
        if (t > start && t <= end + 1e-9) return seg.amps;
        start = end;
    }
    return profile.segments.back().amps;
}

/// Test-side oracle: per-step rectangle deficits enumerated directly from
/// segment geometry (interval overlaps), independent of the sampled-trace
/// path under test.
std::vector<double> brute_force_error_path(const SegmentProfile& profile,
                                           const BatteryTruth& truth, double delta) {
    const std::size_t n =
        static_cast<std::size_t>(std::floor(profile.total_duration_s / delta + 1e-9));
    std::vector<double> w(n, 0.0);

    double err = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        const double t0 = (static_cast<double>(k) - 1.0) * delta;
        const double t1 = std::min(static_cast<double>(k) * delta, profile.total_duration_s);

        // Exact integral over (t0, t1] by interval intersection.
        double integral = 0.0;
        double seg_start = 0.0;
        for (const auto& seg : profile.segments) {
            const double seg_end = seg_start + seg.duration_s;
            const double lo = std::max(t0, seg_start);
            const double hi = std::min(t1, seg_end);
            if (hi > lo) integral += seg.amps * (hi - lo);
            seg_start = seg_end;
        }

        const double deficit = integral - delta * amplitude_at(profile, t1);
        err += truth.eta_c_true * deficit / (3600.0 * truth.c_true);
        w[k - 1] = err;
    }
    return w;
}

} // namespace

TEST_CASE("all-zero spec yields a zero ensemble") {
    NoiseSpec spec;
    const McResult r = run_mc(ErrorSource::Current, aligned_family(1.0, 50, 0.5, 1.5), kTruth,
                              kBelief, spec, 8, 1.0);
    for (double sd : r.empirical_sd) CHECK(sd < 1e-12);
    CHECK(r.max_rel_dev == 0.0);
    CHECK(r.k_min == r.empirical_sd.size() + 1);  // nothing above the floor
}

TEST_CASE("mc results are bit-identical across thread counts") {
    NoiseSpec spec;
    spec.sigma_i = 0.01;
    spec.seed = 5;
    const ProfileFamily family = aligned_family(1.0);

    McOptions serial;
    serial.threads = 1;
    McOptions parallel;
    parallel.threads = 4;

    const McResult a = run_mc(ErrorSource::Current, family, kTruth, kBelief, spec, 64, 1.0, serial);
    const McResult b =
        run_mc(ErrorSource::Current, family, kTruth, kBelief, spec, 64, 1.0, parallel);
    CHECK(a.empirical_sd == b.empirical_sd);
    CHECK(a.max_rel_dev == b.max_rel_dev);

    const McResult c = run_mc(ErrorSource::Current, family, kTruth, kBelief, spec, 64, 1.0, serial);
    CHECK(a.empirical_sd == c.empirical_sd);
}

TEST_CASE("current-source smoke agreement") {
    NoiseSpec spec;
    spec.sigma_i = 0.01;
    spec.seed = 2;
    const McResult r = run_mc(ErrorSource::Current, aligned_family(1.0), kTruth, kBelief,
                              spec, 400, 1.0);
    // 3 / sqrt(2M) at M = 400 is about 10.6%.
    CHECK(r.max_rel_dev < 0.12);
}

TEST_CASE("deterministic timing source matches its bias curve exactly") {
    NoiseSpec spec;
    spec.rho_delta_fixed = 6.9444e-5;
    spec.seed = 3;
    const McResult r = run_mc(ErrorSource::Timing, aligned_family(1.0, 50, 0.5, 1.5), kTruth,
                              kBelief, spec, 4, 1.0);
    CHECK(r.max_rel_dev < 1e-6);
}

TEST_CASE("stochastic timing source tracks its proportional theory") {
    NoiseSpec spec;
    spec.sigma_delta = 1e-3;
    spec.seed = 14;
    const McResult r = run_mc(ErrorSource::Timing, aligned_family(1.0, 50, 0.5, 1.5), kTruth,
                              kBelief, spec, 400, 1.0);
    // The error is exactly proportional to s_CC, so only estimator noise
    // remains: 3 / sqrt(2M) at M = 400 is about 10.6%.
    CHECK(r.max_rel_dev < 0.12);
}

TEST_CASE("efficiency source tracks its proportional theory") {
    NoiseSpec spec;
    spec.sigma_eta_c = 0.04;
    spec.sigma_eta_d = 0.05;
    spec.seed = 15;
    ProfileSpec ps;
    ps.segment_count = 50;
    ps.amp_min = -2.0;
    ps.amp_max = 2.0;
    ps.dur_min = 4.0;
    ps.dur_max = 12.0;
    ps.align_delta = 1.0;
    const McResult r = run_mc(ErrorSource::Efficiency, ProfileFamily::from_spec(ps), kTruth,
                              kBelief, spec, 400, 1.0);
    CHECK(r.max_rel_dev < 0.12);
}

TEST_CASE("combined source tracks the root-sum-square theory") {
    // Aligned profile (no integration deficit) with every stochastic
    // mechanism active; the independent-sources variance sum should hold
    // within estimator noise plus the documented capacity Taylor gap.
    NoiseSpec spec;
    spec.sigma_i = 0.02;
    spec.sigma_batt = 0.06;
    spec.sigma_eta_c = 0.02;
    spec.sigma_eta_d = 0.02;
    spec.sigma_delta = 5e-4;
    spec.seed = 18;
    const McResult r = run_mc(ErrorSource::Combined, aligned_family(1.0, 50, 0.3, 1.8), kTruth,
                              kBelief, spec, 500, 1.0);
    CHECK(r.max_rel_dev < 0.15);
}

TEST_CASE("capacity diagnostic scale removes the first-order gap exactly") {
    NoiseSpec spec;
    spec.sigma_batt = 0.12;
    spec.seed = 31;
    const McResult r = run_mc(ErrorSource::Capacity, aligned_family(1.0, 40, 0.3, 1.8), kTruth,
                              kBelief, spec, 200, 1.0);
    // The sample scale sits near 1 (within second-moment sampling noise).
    CHECK(r.capacity_exact_scale > 0.7);
    CHECK(r.capacity_exact_scale < 1.3);
    double worst = 0.0;
    for (std::size_t k = r.k_min; k <= r.empirical_sd.size(); ++k) {
        const double exact = r.theoretical_sd[k - 1] * r.capacity_exact_scale;
        if (exact > 1e-15) {
            worst = std::max(worst, std::abs(r.empirical_sd[k - 1] / exact - 1.0));
        }
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("estimator consistency: more runs, tighter agreement") {
    NoiseSpec spec;
    spec.sigma_i = 0.02;
    const ProfileFamily family = aligned_family(1.0, 40, 0.4, 1.2);

    std::vector<double> small_devs, large_devs;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        NoiseSpec s = spec;
        s.seed = seed;
        small_devs.push_back(
            run_mc(ErrorSource::Current, family, kTruth, kBelief, s, 100, 1.0).max_rel_dev);
        large_devs.push_back(
            run_mc(ErrorSource::Current, family, kTruth, kBelief, s, 400, 1.0).max_rel_dev);
    }
    std::sort(small_devs.begin(), small_devs.end());
    std::sort(large_devs.begin(), large_devs.end());
    CHECK(large_devs[2] < small_devs[2]);  // medians
}

TEST_CASE("per-run families are integration-only") {
    NoiseSpec spec;
    spec.sigma_i = 0.01;
    const ProfileFamily family = integration_family(1.0, 600.0);
    CHECK_THROWS_AS(run_mc(ErrorSource::Current, family, kTruth, kBelief, spec, 8, 1.0),
                    std::invalid_argument);
}

TEST_CASE("fit_kappa on an aligned family returns zero") {
    // Segment-aligned sampling has no rectangle deficit at all.
    const KappaFit fit = fit_kappa(aligned_family(1.0), kTruth, 1.0, 16, 4);
    CHECK(fit.kappa_hat == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(fit.sigma_l > 0.0);
}

TEST_CASE("fit_kappa rejects constant-current families") {
    ProfileSpec spec;
    spec.segment_count = 3;
    spec.amp_min = spec.amp_max = 1.0;
    spec.dur_min = spec.dur_max = 100.0;
    CHECK_THROWS_AS(fit_kappa(ProfileFamily::from_spec(spec), kTruth, 1.0, 8, 0),
                    std::invalid_argument);
}

TEST_CASE("integration mc matches the brute-force deficit oracle") {
    // Same per-run profiles, two independent error-path computations: the
    // sampled-trace implementation against direct geometric enumeration.
    const double delta = 1.0;
    const double duration = 400.0;
    const ProfileFamily family = integration_family(delta, duration);
    const std::size_t runs = 64;
    const std::uint64_t seed = 11;

    NoiseSpec spec;
    spec.kappa = 1.0;
    spec.seed = seed;
    const McResult mc =
        run_mc(ErrorSource::Integration, family, kTruth, kBelief, spec, runs, delta);
    const std::size_t n = mc.empirical_sd.size();

    std::vector<double> sumsq(n, 0.0);
    for (std::uint64_t m = 0; m < runs; ++m) {
        Philox rng(seed, mc_stream(m, RngPurpose::Profile));
        const SegmentProfile profile = family.make(rng);
        const auto w = brute_force_error_path(profile, kTruth, delta);
        REQUIRE(w.size() == n);
        for (std::size_t k = 0; k < n; ++k) sumsq[k] += w[k] * w[k];
    }

    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double oracle_sd = std::sqrt(sumsq[k] / static_cast<double>(runs));
        const double impl_sd = mc.empirical_sd[k];
        const double scale = std::max(oracle_sd, 1e-12);
        worst = std::max(worst, std::abs(impl_sd - oracle_sd) / scale);
    }
    CHECK(worst < 1e-9);

    // Least-squares fit on the oracle curve agrees with fit_kappa.
    const KappaFit fit = fit_kappa(family, kTruth, delta, runs, seed);
    double num = 0.0, den = 0.0;
    for (std::size_t k = fit.mc.k_min; k <= n; ++k) {
        const double b = fit.mc.theoretical_sd[k - 1] / fit.kappa_hat;  // kappa = 1 curve
        const double oracle_sd = std::sqrt(sumsq[k - 1] / static_cast<double>(runs));
        num += oracle_sd * b;
        den += b * b;
    }
    const double oracle_kappa = num / den;
    CHECK(fit.kappa_hat == doctest::Approx(oracle_kappa).epsilon(0.1));
}

TEST_CASE("two-delta segments with a half-step lead-in") {
    // Every interior boundary then sits mid-step: each even step's deficit
    // is (delta/2) * (amp_prev - amp_next), which the geometric oracle
    // enumerates in closed form.
    const double delta = 2.0;
    ProfileFamily family;
    family.per_run = true;
    family.make = [delta](Philox& rng) {
        std::vector<SegmentProfile::Segment> segs;
        segs.push_back({0.5 * delta, 0.5 + rng.uniform01()});
        for (int j = 0; j < 100; ++j) {
            segs.push_back({2.0 * delta, 0.5 + rng.uniform01()});
        }
        segs.push_back({1.5 * delta, 0.5 + rng.uniform01()});
        return SegmentProfile::from_segments(segs);
    };

    const std::size_t runs = 48;
    const std::uint64_t seed = 21;
    const BatteryTruth truth{1.5, 1.0, 1.0, delta};
    const BeliefParams belief{1.5, 1.0, 1.0, delta};
    NoiseSpec spec;
    spec.kappa = 1.0;
    spec.seed = seed;
    const McResult mc = run_mc(ErrorSource::Integration, family, truth, belief, spec, runs,
                               delta);
    const std::size_t n = mc.empirical_sd.size();

    std::vector<double> sumsq(n, 0.0);
    for (std::uint64_t m = 0; m < runs; ++m) {
        Philox rng(seed, mc_stream(m, RngPurpose::Profile));
        const SegmentProfile profile = family.make(rng);
        const auto w = brute_force_error_path(profile, truth, delta);
        for (std::size_t k = 0; k < n; ++k) sumsq[k] += w[k] * w[k];
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double oracle_sd = std::sqrt(sumsq[k] / static_cast<double>(runs));
        worst = std::max(worst,
                         std::abs(mc.empirical_sd[k] - oracle_sd) / std::max(oracle_sd, 1e-12));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("mc csv export shape") {
    NoiseSpec spec;
    spec.sigma_i = 0.01;
    const McResult r = run_mc(ErrorSource::Current, aligned_family(1.0, 50, 0.5, 1.5), kTruth,
                              kBelief, spec, 8, 1.0);
    std::ostringstream out;
    write_mc_csv(r, out);
    const std::string text = out.str();
    CHECK(text.rfind("k,t_s,empirical_sd,theoretical_sd\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') ==
          static_cast<long>(r.empirical_sd.size()) + 1);

    const nlohmann::json meta = mc_metadata(r, spec);
    CHECK(meta["runs"] == 8);
    CHECK(meta["source"] == "current");
    CHECK(meta.contains("max_rel_dev"));
}
