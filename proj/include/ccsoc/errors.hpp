#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccsoc/model.hpp"
#include "ccsoc/profiles.hpp"

#include "json.hpp"

namespace ccsoc {

enum class ErrorSource { Current, Integration, Capacity, Efficiency, Timing, Combined };

const char* to_string(ErrorSource source);
ErrorSource error_source_from_string(const std::string& name);

/// Time-cumulative errors grow without bound as samples accumulate;
/// SOC-proportional errors track the accumulated SOC and peak within one
/// charge/discharge cycle.
enum class ErrorClass { TimeCumulative, SocProportional };

ErrorClass classify(ErrorSource source);

/// Standard deviations and coefficients of the five error sources.
/// All fields default to zero (no error); seed drives every stochastic draw.
struct NoiseSpec {
    double sigma_i = 0.0;      // current-noise s.d., A
    double kappa = 0.0;        // integration-error constant
    double sigma_l = 0.0;      // load-current s.d., A
    double sigma_batt = 0.0;   // capacity-uncertainty s.d., Ah
    double sigma_eta_c = 0.0;  // charging-efficiency coefficient s.d.
    double sigma_eta_d = 0.0;  // discharging-efficiency coefficient s.d.
    double sigma_delta = 0.0;  // timing-coefficient s.d. (stochastic mode)
    std::optional<double> rho_delta_fixed;  // deterministic timing mode
    std::uint64_t seed = 0;
};

/// Throws if any s.d. is negative/non-finite or if both timing modes are set.
void validate(const NoiseSpec& spec);

NoiseSpec noise_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NoiseSpec& spec);

/// SOC-error s.d. due to current measurement noise after n_c charging and
/// n_d discharging samples, as a SOC fraction:
///   (delta * sigma_i / (3600 * c_batt)) * sqrt(eta_c*n_c + eta_d*n_d).
/// The efficiency enters to the first power as published; set
/// efficiency_squared for the dimensionally-motivated squared variant.
double predict_sigma_current(double delta_s, double sigma_i, double c_batt, double eta_c,
                             double eta_d, std::uint64_t n_c, std::uint64_t n_d,
                             bool efficiency_squared = false);

/// SOC-error s.d. due to the rectangle-rule integration deficit:
///   (kappa * delta * sigma_l / (3600 * c_batt)) * sqrt(eta_c*n_c + eta_d*n_d).
double predict_sigma_integration(double delta_s, double kappa, double sigma_l, double c_batt,
                                 double eta_c, double eta_d, std::uint64_t n_c, std::uint64_t n_d,
                                 bool efficiency_squared = false);

/// SOC-error s.d. due to capacity uncertainty: rho_c * |s_cc|.
double predict_sigma_capacity(double rho_c, double s_cc);

/// SOC-error s.d. due to efficiency uncertainty:
///   sqrt(sigma_eta_c^2 * s_cc_c^2 + sigma_eta_d^2 * s_cc_d^2).
double predict_sigma_efficiency(double sigma_eta_c, double sigma_eta_d, double s_cc_c,
                                double s_cc_d);

/// Stochastic timing mode: sigma_delta * |s_cc|.
double predict_sigma_timing(double sigma_delta, double s_cc);

/// Deterministic timing mode: the bias rho_delta * s_cc.
double predict_timing_bias(double rho_delta, double s_cc);

/// Timing coefficient of an oscillator off by drift_s over period_s,
/// e.g. three minutes in thirty days -> 6.9444e-5.
double rho_delta_from_drift(double drift_s, double period_s);

/// Per-source and combined s.d. at one instant. Combined variance is the
/// plain sum of the five variances (independent-sources combination).
struct BudgetEntry {
    double sigma_current = 0.0;
    double sigma_integration = 0.0;
    double sigma_capacity = 0.0;
    double sigma_efficiency = 0.0;
    double sigma_timing = 0.0;
    double combined = 0.0;
};

BudgetEntry predict_combined(const NoiseSpec& spec, const BeliefParams& belief,
                             const CcDecomposition& decomp, bool efficiency_squared = false);

/// Per-source s.d. series over a current sequence, one entry per sample.
struct ErrorBudget {
    std::vector<double> sigma_current;
    std::vector<double> sigma_integration;
    std::vector<double> sigma_capacity;
    std::vector<double> sigma_efficiency;
    std::vector<double> sigma_timing;
    std::vector<double> combined;
};

ErrorBudget predict_budget(std::span<const double> currents, const NoiseSpec& spec,
                           const BeliefParams& belief, bool efficiency_squared = false);

/// 1/2/3-sigma confidence bands (percent SOC) of the capacity-uncertainty
/// error around a computed SOC, e.g. rho_c = 0.1, soc = 0.4 -> [36, 44],
/// [32, 48], [28, 52].
struct ConfidenceBands {
    double lo[3];
    double hi[3];
};

ConfidenceBands capacity_confidence_bands(double rho_c, double soc);

/// Everything one corrupted run is made of: the current sequence the
/// counter sees and the (possibly drawn) parameters it counts with. Drawn
/// efficiencies may land above 1; they model parameter uncertainty and are
/// deliberately not clamped.
struct InjectionRealization {
    SampledCurrent measured;
    double c_used = 0.0;
    double eta_c_used = 1.0;
    double eta_d_used = 1.0;
    double delta_used = 0.0;
};

InjectionRealization realize_injection(ErrorSource source, const SegmentProfile& profile,
                                       const BatteryTruth& truth,
                                       const BeliefParams& belief_template, const NoiseSpec& spec,
                                       std::uint64_t run_index);

/// Run one corrupted Coulomb-counting simulation with exactly one error
/// mechanism active (or all, for Combined):
///   - Current:     z_i(k) = i(k) + n_i(k), per-sample Gaussian noise.
///   - Integration: the counter integrates the downsampled rectangle
///                  current while truth stays geometric; the deficit IS the
///                  error, nothing synthetic is added.
///   - Capacity:    c_batt drawn once per run from N(c_true, sigma_batt^2).
///   - Efficiency:  belief efficiencies scaled once per run by
///                  (1 + rho), rho ~ N(0, sigma_eta^2).
///   - Timing:      belief delta mis-set to delta_true * (1 + rho_delta).
/// Parameter draws happen once per run and are held constant, matching how
/// parameter uncertainty (not per-sample noise) behaves.
/// Deterministic given (spec.seed, run_index).
SocTrace inject(ErrorSource source, const SegmentProfile& profile, const BatteryTruth& truth,
                const BeliefParams& belief_template, const NoiseSpec& spec,
                std::uint64_t run_index, double s0 = 0.0);

} // namespace ccsoc
