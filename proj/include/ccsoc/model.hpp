#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace ccsoc {

constexpr double kSecondsPerHour = 3600.0;
constexpr double kSecondsPerDay = 86400.0;
constexpr double kSecondsPerYear = 365.0 * kSecondsPerDay;

/// Ground-truth battery parameters used by the simulation oracle.
struct BatteryTruth {
    double c_true = 0.0;      // capacity, Ah
    double eta_c_true = 1.0;  // charging efficiency
    double eta_d_true = 1.0;  // discharging efficiency
    double delta_true = 0.0;  // true sample period, s
};

/// Parameters the Coulomb counter believes in; may differ from truth.
struct BeliefParams {
    double c_batt = 0.0;  // assumed capacity, Ah
    double eta_c = 1.0;   // assumed charging efficiency
    double eta_d = 1.0;   // assumed discharging efficiency
    double delta = 0.0;   // assumed sample period, s
};

void validate(const BatteryTruth& truth);
void validate(const BeliefParams& belief);

/// Positivity/finiteness only. Beliefs drawn around the truth (capacity or
/// efficiency perturbations) may land above eta = 1 and still have to flow
/// through the counter unclamped.
void validate_positive(const BeliefParams& belief);

/// SOC time series. values[j] is the SOC after consuming sample j+1, i.e.
/// s(k) for k = 1..n; s(0) is stored separately. Values are deliberately
/// not clamped to [0, 1]: the error analysis needs the raw accumulation.
struct SocTrace {
    double s0 = 0.0;
    double delta = 0.0;
    std::vector<double> values;

    std::size_t steps() const { return values.size(); }
    double at(std::size_t k) const { return k == 0 ? s0 : values[k - 1]; }
    double final_soc() const { return values.empty() ? s0 : values.back(); }
};

/// Charge/discharge split of the accumulated SOC. s_cc is defined as
/// s_cc_c + s_cc_d so the identity holds exactly in floating point.
struct CcDecomposition {
    double s_cc = 0.0;    // total change in SOC
    double s_cc_c = 0.0;  // charging part, >= 0
    double s_cc_d = 0.0;  // discharging part, <= 0
    std::uint64_t n_c = 0;
    std::uint64_t n_d = 0;
};

/// Neumaier compensated accumulator. Year-long traces reach 3e8 steps;
/// naive summation error would drown the SOC error being studied.
class NeumaierSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// One discrete Coulomb-counting update:
/// s_prev + eta * delta * i / (3600 * c_batt), eta chosen by sign of i.
/// Zero current contributes nothing and counts as neither charge nor
/// discharge.
double cc_step(double s_prev, double i_amps, const BeliefParams& belief);

/// Repeated cc_step over a current sequence, with compensated accumulation.
SocTrace cc_trace(std::span<const double> currents, double s0, const BeliefParams& belief);

/// Streaming charge/discharge decomposition of a current sequence.
class DecompAccumulator {
public:
    explicit DecompAccumulator(const BeliefParams& belief);
    void add(double i_amps);
    CcDecomposition current() const;

private:
    double scale_c_ = 0.0;  // eta_c * delta / (3600 * c_batt)
    double scale_d_ = 0.0;
    NeumaierSum sum_c_;
    NeumaierSum sum_d_;
    std::uint64_t n_c_ = 0;
    std::uint64_t n_d_ = 0;
};

CcDecomposition decompose(std::span<const double> currents, const BeliefParams& belief);

} // namespace ccsoc
