#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ccsoc/errors.hpp"
#include "ccsoc/model.hpp"
#include "ccsoc/profiles.hpp"

namespace ccsoc {

/// Scalar SOC tracker state. The running decomposition feeds the
/// SOC-proportional process-noise terms.
struct FilterState {
    double s_hat = 0.0;  // SOC mean, fraction
    double p = 0.0;      // SOC error variance, fraction^2
    std::uint64_t k = 0;
    double s_cc_running = 0.0;
    double s_cc_c_running = 0.0;
    double s_cc_d_running = 0.0;
};

/// Minimal voltage channel: polynomial OCV plus a static linear
/// voltage-drop regressor. Enough of a measurement model to exercise
/// process-noise sizing; relaxation dynamics are out of scope.
struct MeasurementModel {
    std::vector<double> ocv_coeffs;  // V(s) = sum_j ocv_coeffs[j] * s^j
    std::vector<double> b;           // voltage-drop parameters
    double sigma_z = 0.0;            // voltage-noise s.d., V

    double ocv(double soc) const;
    double ocv_slope(double soc) const;
};

/// Checks sigma_z >= 0 and that the OCV polynomial is strictly increasing
/// on [0, 1] (evaluated on a 1001-point grid).
void validate(const MeasurementModel& model);

struct TrackerOptions {
    /// SOC-proportional terms enter p as the increment of their cumulative
    /// variance, floored at zero (default). The alternative evaluates the
    /// combined variance formula literally at n = 1 for each step.
    bool incremental_q = true;
    bool efficiency_squared = false;
    enum class QMode { Derived, Constant } q_mode = QMode::Derived;
    double q_constant = 0.0;
};

/// Prediction: Coulomb-counting mean update plus the per-step process-noise
/// variance derived from the combined error model.
FilterState process_step(const FilterState& state, double z_i, const BeliefParams& belief,
                         const NoiseSpec& spec, const TrackerOptions& options = {});

/// Scalar EKF measurement update, linearized at the prior mean.
/// Throws when the innovation variance is exactly zero.
FilterState measurement_step(const FilterState& state, double z_v,
                             std::span<const double> regressor, const MeasurementModel& model);

struct TrackResult {
    SocTrace truth;           // geometric ground truth
    SocTrace open_loop;       // Coulomb counting on the measured current
    SocTrace estimate;        // filtered s_hat
    std::vector<double> p;    // variance trace, one entry per step
    std::vector<double> z_v;  // synthetic voltage measurements
    double rmse = 0.0;        // estimate vs truth
    double rmse_open_loop = 0.0;
};

/// Closed-loop run: corrupt the simulation with the combined injector,
/// synthesize voltages z_v = ocv(s_true) + b . [i_true] + noise, and track.
TrackResult track(const SegmentProfile& profile, const BatteryTruth& truth,
                  const BeliefParams& belief, const NoiseSpec& spec,
                  const MeasurementModel& model, std::uint64_t seed, double s0 = 0.0,
                  const TrackerOptions& options = {});

/// CSV columns: k,t_s,s_true,s_cc_open_loop,s_hat,p,z_v (k = 0 row carries
/// the initial state; z_v is empty there).
void write_track_csv(const TrackResult& result, std::ostream& out);

} // namespace ccsoc
