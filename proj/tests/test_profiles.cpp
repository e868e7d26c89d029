#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "ccsoc/profiles.hpp"
#include "ccsoc/rng.hpp"

using namespace ccsoc;

namespace {

SegmentProfile make_profile(std::initializer_list<SegmentProfile::Segment> segs) {
    return SegmentProfile::from_segments(std::vector<SegmentProfile::Segment>(segs));
}

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

} // namespace

TEST_CASE("exact_coulombs rectangle areas") {
    const auto one = make_profile({{3600.0, 1.5}});
    CHECK(exact_coulombs(one, 3600.0) == doctest::Approx(5400.0).epsilon(1e-15));
    CHECK(exact_coulombs(one, 0.0) == 0.0);

    const auto mixed = make_profile({{10.0, 2.0}, {10.0, -1.0}});
    CHECK(exact_coulombs(mixed, 15.0) == doctest::Approx(15.0).epsilon(1e-15));

    CHECK_THROWS_AS(exact_coulombs(one, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(exact_coulombs(one, 3601.0), std::invalid_argument);
}

TEST_CASE("exact_coulombs additivity and monotonicity") {
    Philox rng(5, 0);
    ProfileSpec spec;
    spec.segment_count = 20;
    spec.amp_min = 0.1;
    spec.amp_max = 2.0;
    spec.dur_min = 1.0;
    spec.dur_max = 30.0;
    const auto profile = generate_profile(spec, rng);

    double prev = 0.0;
    for (double t = 0.0; t <= profile.total_duration_s; t += profile.total_duration_s / 50.0) {
        const double q = exact_coulombs(profile, t);
        CHECK(q >= prev - 1e-12);  // nonnegative profile -> monotone
        prev = q;
    }

    // Additivity over concatenation.
    auto left = make_profile({{5.0, 1.0}, {5.0, -2.0}});
    auto right = make_profile({{3.0, 0.5}});
    std::vector<SegmentProfile::Segment> joined = left.segments;
    joined.insert(joined.end(), right.segments.begin(), right.segments.end());
    const auto both = SegmentProfile::from_segments(joined);
    CHECK(exact_coulombs(both, 13.0) ==
          doctest::Approx(exact_coulombs(left, 10.0) + exact_coulombs(right, 3.0)).epsilon(1e-15));
}

TEST_CASE("true_soc_trace on constant current") {
    const BatteryTruth truth{1.5, 1.0, 1.0, 1.0};
    const auto profile = make_profile({{3600.0, 1.5}});
    const SocTrace trace = true_soc_trace(profile, truth, 0.2, 1.0);
    REQUIRE(trace.steps() == 3600);
    CHECK(trace.values[1799] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(trace.final_soc() == doctest::Approx(1.2).epsilon(1e-12));

    const auto idle = make_profile({{100.0, 0.0}});
    const SocTrace flat = true_soc_trace(idle, truth, 0.4, 1.0);
    for (double v : flat.values) CHECK(v == 0.4);
}

TEST_CASE("sampling reproduces aligned segments") {
    const auto profile = make_profile({{10.0, 2.0}, {10.0, -1.0}});
    const SampledCurrent sc = sample(profile, 10.0);
    REQUIRE(sc.samples.size() == 2);
    CHECK(sc.samples[0] == 2.0);  // boundary instant belongs to the ended segment
    CHECK(sc.samples[1] == -1.0);

    const SampledCurrent halves = sample(profile, 5.0);
    REQUIRE(halves.samples.size() == 4);
    CHECK(halves.samples[0] == 2.0);
    CHECK(halves.samples[1] == 2.0);
    CHECK(halves.samples[2] == -1.0);
    CHECK(halves.samples[3] == -1.0);

    CHECK_THROWS_AS(sample(profile, 0.0), std::invalid_argument);
}

TEST_CASE("clock error shifts the sampling instants") {
    const auto profile = make_profile({{10.0, 1.0}, {10.0, 3.0}});
    // Believed delta 10 s, oscillator fast by 25%: true tick is 8 s, so the
    // second sample lands at t = 16 s inside the second segment.
    const SampledCurrent drift = sample(profile, 10.0, 0.25);
    REQUIRE(drift.samples.size() == 2);
    CHECK(drift.samples[0] == 1.0);
    CHECK(drift.samples[1] == 3.0);

    const SampledCurrent plain = sample(profile, 10.0, 0.0);
    CHECK(plain.samples[1] == 3.0);
    CHECK(plain.samples[0] == 1.0);
}

TEST_CASE("generate_profile determinism and ranges") {
    ProfileSpec spec;
    spec.segment_count = 5;
    spec.amp_min = -1.0;
    spec.amp_max = 2.0;
    spec.dur_min = 3.0;
    spec.dur_max = 9.0;

    const auto a = generate_profile(spec, 7);
    const auto b = generate_profile(spec, 7);
    REQUIRE(a.segments.size() == 5);
    REQUIRE(b.segments.size() == 5);
    for (std::size_t j = 0; j < 5; ++j) {
        CHECK(a.segments[j].amps == b.segments[j].amps);
        CHECK(a.segments[j].duration_s == b.segments[j].duration_s);
        CHECK(a.segments[j].amps >= spec.amp_min);
        CHECK(a.segments[j].amps <= spec.amp_max);
        CHECK(a.segments[j].duration_s >= spec.dur_min);
        CHECK(a.segments[j].duration_s <= spec.dur_max);
    }

    const auto c = generate_profile(spec, 8);
    bool any_diff = false;
    for (std::size_t j = 0; j < 5; ++j) {
        any_diff = any_diff || c.segments[j].amps != a.segments[j].amps;
    }
    CHECK(any_diff);

    ProfileSpec fixed;
    fixed.segment_count = 1;
    fixed.amp_min = fixed.amp_max = 1.5;
    fixed.dur_min = fixed.dur_max = 60.0;
    const auto single = generate_profile(fixed, 0);
    REQUIRE(single.segments.size() == 1);
    CHECK(single.segments[0].duration_s == 60.0);
    CHECK(single.segments[0].amps == 1.5);

    ProfileSpec bad;
    bad.segment_count = 2;
    bad.amp_min = 1.0;
    bad.amp_max = 0.0;
    bad.dur_min = 1.0;
    bad.dur_max = 2.0;
    CHECK_THROWS_AS(generate_profile(bad, 0), std::invalid_argument);
}

TEST_CASE("aligned generation snaps durations") {
    ProfileSpec spec;
    spec.segment_count = 40;
    spec.amp_min = -2.0;
    spec.amp_max = 2.0;
    spec.dur_min = 0.4;
    spec.dur_max = 12.0;
    spec.align_delta = 0.5;
    const auto profile = generate_profile(spec, 3);
    for (const auto& seg : profile.segments) {
        const double multiple = seg.duration_s / 0.5;
        CHECK(multiple == doctest::Approx(std::round(multiple)).epsilon(1e-12));
        CHECK(seg.duration_s >= 0.5);
    }
}

TEST_CASE("oracle equivalence on aligned profiles") {
    // Aligned rectangles admit no integration error: counting the sampled
    // current must reproduce the geometric truth at every sample.
    const BatteryTruth truth{1.2, 0.95, 0.9, 0.5};
    const BeliefParams belief{1.2, 0.95, 0.9, 0.5};

    ProfileSpec spec;
    spec.segment_count = 30;
    spec.amp_min = -2.0;
    spec.amp_max = 2.0;
    spec.dur_min = 0.5;
    spec.dur_max = 20.0;
    spec.align_delta = 0.5;

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto profile = generate_profile(spec, seed);
        const SocTrace geometric = true_soc_trace(profile, truth, 0.1, 0.5);
        const SocTrace counted = cc_trace(sample(profile, 0.5).samples, 0.1, belief);
        REQUIRE(geometric.steps() == counted.steps());
        double worst = 0.0;
        for (std::size_t k = 0; k < geometric.steps(); ++k) {
            worst = std::max(worst, std::abs(geometric.values[k] - counted.values[k]));
        }
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("stats of a constant current") {
    SampledCurrent sc;
    sc.delta = 1.0;
    sc.samples.assign(100, 0.7);
    const LoadStats s = stats(sc, 1.5);
    CHECK(s.sigma_l == 0.0);
    CHECK(s.rho_int_coeff == 0.0);
    std::uint64_t total = 0;
    for (const auto& bin : s.diff_histogram) total += bin.count;
    CHECK(total == sc.samples.size() - 1);
}

TEST_CASE("stats reproduces the published load coefficients") {
    // Two-level wave whose sample s.d. equals the reported sigma_L.
    auto two_level = [](double amp, std::size_t n) {
        SampledCurrent sc;
        sc.delta = 1.0;
        sc.samples.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            sc.samples.push_back(k % 2 == 0 ? amp : -amp);
        }
        return sc;
    };

    // Smart-phone-like: sigma_L = 0.1673 A on a 1.5 Ah pack -> 0.1115 /h.
    const std::size_t n = 20000;
    const double corr = std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n));
    const LoadStats phone = stats(two_level(0.1673 * corr, n), 1.5);
    CHECK(phone.sigma_l == doctest::Approx(0.1673).epsilon(1e-9));
    CHECK(phone.rho_int_coeff == doctest::Approx(0.1115).epsilon(5e-4));

    // EV-like: sigma_L = 8.6917 A on a 250 Ah pack -> about 0.0348 /h.
    const LoadStats ev = stats(two_level(8.6917 * corr, n), 250.0);
    CHECK(ev.rho_int_coeff == doctest::Approx(0.0348).epsilon(2e-3));

    // rho_i comes from the sensor, not the log.
    const LoadStats with_sensor = stats(two_level(1.0, n), 1.5, 0.01);
    CHECK(with_sensor.rho_i_coeff == doctest::Approx(0.01 / 1.5).epsilon(1e-12));
}

TEST_CASE("first differences of a piecewise-constant profile concentrate at zero") {
    const auto profile = make_profile({{10.0, 1.0}, {10.0, 2.0}, {10.0, -1.0}});
    const SampledCurrent sc = sample(profile, 1.0);
    const LoadStats s = stats(sc, 1.0);
    // 29 differences, 2 nonzero (one per interior boundary).
    std::uint64_t center = 0;
    for (const auto& bin : s.diff_histogram) {
        if (bin.lo <= 0.0 && 0.0 < bin.hi) center = bin.count;
    }
    CHECK(center == 27);
}

TEST_CASE("current log round trip and validation") {
    const auto good = write_temp("ccsoc_good.csv", "t_s,i_a\r\n0,1.5\r\n1,1.5\r\n2,-0.5\r\n");
    const SampledCurrent sc = load_csv(good.string());
    CHECK(sc.delta == doctest::Approx(1.0));
    REQUIRE(sc.samples.size() == 3);
    CHECK(sc.samples[2] == -0.5);

    const auto bad_row = write_temp("ccsoc_bad.csv", "t_s,i_a\n0,1.5\n1,abc\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_csv(bad_row.string())),
                         doctest::Contains(":3:"), std::runtime_error);

    const auto non_mono = write_temp("ccsoc_mono.csv", "t_s,i_a\n0,1\n2,1\n1,1\n");
    CHECK_THROWS_AS(static_cast<void>(load_csv(non_mono.string())), std::runtime_error);

    const auto non_uniform = write_temp("ccsoc_uni.csv", "t_s,i_a\n0,1\n1,1\n2.5,1\n");
    CHECK_THROWS_AS(static_cast<void>(load_csv(non_uniform.string())), std::runtime_error);

    const auto bad_header = write_temp("ccsoc_hdr.csv", "time,current\n0,1\n1,1\n");
    CHECK_THROWS_AS(static_cast<void>(load_csv(bad_header.string())), std::runtime_error);
}

TEST_CASE("segment profile csv") {
    const auto path = write_temp("ccsoc_prof.csv", "duration_s,amps\n10,2\n5,-1\n");
    const SegmentProfile profile = load_profile_csv(path.string());
    REQUIRE(profile.segments.size() == 2);
    CHECK(profile.total_duration_s == doctest::Approx(15.0));
    CHECK(profile.segments[1].amps == -1.0);

    const auto bad = write_temp("ccsoc_prof_bad.csv", "duration_s,amps\n-1,2\n");
    CHECK_THROWS_AS(static_cast<void>(load_profile_csv(bad.string())), std::runtime_error);
}
