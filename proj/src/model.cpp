#include "ccsoc/model.hpp"

#include <stdexcept>
#include <string>

namespace ccsoc {

namespace {

void require_finite(double x, const char* name) {
    if (!std::isfinite(x)) {
        throw std::invalid_argument(std::string(name) + " must be finite");
    }
}

} // namespace

void validate(const BatteryTruth& truth) {
    require_finite(truth.c_true, "c_true");
    require_finite(truth.eta_c_true, "eta_c_true");
    require_finite(truth.eta_d_true, "eta_d_true");
    require_finite(truth.delta_true, "delta_true");
    if (truth.c_true <= 0.0) throw std::invalid_argument("c_true must be > 0");
    if (truth.eta_c_true <= 0.0 || truth.eta_c_true > 1.0)
        throw std::invalid_argument("eta_c_true must be in (0, 1]");
    if (truth.eta_d_true <= 0.0 || truth.eta_d_true > 1.0)
        throw std::invalid_argument("eta_d_true must be in (0, 1]");
    if (truth.delta_true <= 0.0) throw std::invalid_argument("delta_true must be > 0");
}

void validate(const BeliefParams& belief) {
    validate_positive(belief);
    if (belief.eta_c > 1.0) throw std::invalid_argument("eta_c must be in (0, 1]");
    if (belief.eta_d > 1.0) throw std::invalid_argument("eta_d must be in (0, 1]");
}

void validate_positive(const BeliefParams& belief) {
    require_finite(belief.c_batt, "c_batt");
    require_finite(belief.eta_c, "eta_c");
    require_finite(belief.eta_d, "eta_d");
    require_finite(belief.delta, "delta");
    if (belief.c_batt <= 0.0) throw std::invalid_argument("c_batt must be > 0");
    if (belief.eta_c <= 0.0) throw std::invalid_argument("eta_c must be > 0");
    if (belief.eta_d <= 0.0) throw std::invalid_argument("eta_d must be > 0");
    if (belief.delta <= 0.0) throw std::invalid_argument("delta must be > 0");
}

double cc_step(double s_prev, double i_amps, const BeliefParams& belief) {
    validate(belief);
    require_finite(s_prev, "s_prev");
    require_finite(i_amps, "current");
    const double eta = i_amps > 0.0 ? belief.eta_c : belief.eta_d;
    return s_prev + eta * belief.delta * i_amps / (kSecondsPerHour * belief.c_batt);
}

SocTrace cc_trace(std::span<const double> currents, double s0, const BeliefParams& belief) {
    validate(belief);
    require_finite(s0, "s0");

    SocTrace trace;
    trace.s0 = s0;
    trace.delta = belief.delta;
    trace.values.reserve(currents.size());

    const double scale_c = belief.eta_c * belief.delta / (kSecondsPerHour * belief.c_batt);
    const double scale_d = belief.eta_d * belief.delta / (kSecondsPerHour * belief.c_batt);

    NeumaierSum acc;
    for (double i : currents) {
        require_finite(i, "current");
        acc.add(i > 0.0 ? scale_c * i : scale_d * i);
        trace.values.push_back(s0 + acc.value());
    }
    return trace;
}

DecompAccumulator::DecompAccumulator(const BeliefParams& belief) {
    validate(belief);
    scale_c_ = belief.eta_c * belief.delta / (kSecondsPerHour * belief.c_batt);
    scale_d_ = belief.eta_d * belief.delta / (kSecondsPerHour * belief.c_batt);
}

void DecompAccumulator::add(double i_amps) {
    require_finite(i_amps, "current");
    if (i_amps > 0.0) {
        sum_c_.add(scale_c_ * i_amps);
        ++n_c_;
    } else if (i_amps < 0.0) {
        sum_d_.add(scale_d_ * i_amps);
        ++n_d_;
    }
}

CcDecomposition DecompAccumulator::current() const {
    CcDecomposition d;
    d.s_cc_c = sum_c_.value();
    d.s_cc_d = sum_d_.value();
    d.s_cc = d.s_cc_c + d.s_cc_d;
    d.n_c = n_c_;
    d.n_d = n_d_;
    return d;
}

CcDecomposition decompose(std::span<const double> currents, const BeliefParams& belief) {
    DecompAccumulator acc(belief);
    for (double i : currents) {
        acc.add(i);
    }
    return acc.current();
}

} // namespace ccsoc
