#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ccsoc/model.hpp"
#include "ccsoc/rng.hpp"

namespace ccsoc {

/// Piecewise-constant current profile. Segment j covers the half-open
/// interval (start_j, start_j + duration_j] so a boundary instant carries
/// the amplitude of the segment that just ended. Exactly integrable as
/// signed rectangle areas, which is what makes it the ground-truth oracle.
struct SegmentProfile {
    struct Segment {
        double duration_s = 0.0;
        double amps = 0.0;
    };

    std::vector<Segment> segments;
    double total_duration_s = 0.0;

    static SegmentProfile from_segments(std::vector<Segment> segments);
};

void validate(const SegmentProfile& profile);

/// Parameters for the random profile generator.
struct ProfileSpec {
    std::size_t segment_count = 1;
    double amp_min = 0.0;
    double amp_max = 0.0;
    double dur_min = 0.0;
    double dur_max = 0.0;
    /// When > 0, segment durations are snapped to multiples of this value
    /// (minimum one multiple), producing sampling-aligned profiles with no
    /// integration error.
    double align_delta = 0.0;
};

SegmentProfile generate_profile(const ProfileSpec& spec, Philox& rng);
SegmentProfile generate_profile(const ProfileSpec& spec, std::uint64_t seed);

/// Uniformly sampled current. samples[j] is the reading that closes step
/// j+1, taken at believed time (j+1)*delta (right-endpoint convention).
struct SampledCurrent {
    double delta = 0.0;
    std::vector<double> samples;
};

/// Exact signed Coulombs (A*s) of the profile over [0, up_to].
double exact_coulombs(const SegmentProfile& profile, double up_to_s);

/// Exact efficiency-weighted SOC change over [0, up_to], with the
/// charge/discharge efficiency selected per segment sign.
double exact_soc_delta(const SegmentProfile& profile, const BatteryTruth& truth, double up_to_s);

/// Ground-truth SOC from rectangle geometry, evaluated on the sample grid.
SocTrace true_soc_trace(const SegmentProfile& profile, const BatteryTruth& truth, double s0,
                        double delta);

/// Downsample the profile at believed period `delta`. A counter whose
/// oscillator is off by clock_error = rho ticks at true period
/// delta / (1 + rho), so sample k reads the amplitude at true time
/// k*delta/(1+rho). clock_error = 0 is plain right-endpoint downsampling.
SampledCurrent sample(const SegmentProfile& profile, double delta, double clock_error = 0.0);

/// Load statistics feeding the integration-error model.
struct LoadStats {
    struct HistBin {
        double lo = 0.0;
        double hi = 0.0;
        std::uint64_t count = 0;
    };

    double sigma_l = 0.0;        // sample s.d. of the current, A
    double rho_i_coeff = 0.0;    // sigma_i / c_batt, 1/h
    double rho_int_coeff = 0.0;  // sigma_l / c_batt, 1/h
    std::vector<HistBin> diff_histogram;  // first differences i(k) - i(k-1)
};

/// sigma_i (the current-sensor noise s.d.) is not derivable from a log;
/// pass it when known so rho_i_coeff can be reported alongside.
LoadStats stats(const SampledCurrent& sc, double c_batt, double sigma_i = 0.0);

/// CSV ingestion. Current logs use header `t_s,i_a` with strictly
/// increasing, uniformly spaced timestamps (1e-6 relative tolerance);
/// segment profiles use header `duration_s,amps`. LF and CRLF both accepted.
SampledCurrent load_csv(const std::string& path);
SegmentProfile load_profile_csv(const std::string& path);

void write_profile_csv(const SegmentProfile& profile, std::ostream& out);

} // namespace ccsoc
