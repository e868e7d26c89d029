#include "ccsoc/tracker.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "ccsoc/util.hpp"

namespace ccsoc {

double MeasurementModel::ocv(double soc) const {
    double v = 0.0;
    for (std::size_t j = ocv_coeffs.size(); j-- > 0;) {
        v = v * soc + ocv_coeffs[j];
    }
    return v;
}

double MeasurementModel::ocv_slope(double soc) const {
    double dv = 0.0;
    for (std::size_t j = ocv_coeffs.size(); j-- > 1;) {
        dv = dv * soc + ocv_coeffs[j] * static_cast<double>(j);
    }
    return dv;
}

void validate(const MeasurementModel& model) {
    if (!(model.sigma_z >= 0.0) || !std::isfinite(model.sigma_z)) {
        throw std::invalid_argument("sigma_z must be finite and >= 0");
    }
    if (model.ocv_coeffs.empty()) {
        throw std::invalid_argument("ocv polynomial needs at least one coefficient");
    }
    double prev = model.ocv(0.0);
    for (int g = 1; g <= 1000; ++g) {
        const double v = model.ocv(static_cast<double>(g) / 1000.0);
        if (!(v > prev)) {
            throw std::invalid_argument("ocv polynomial must be strictly increasing on [0, 1]");
        }
        prev = v;
    }
}

namespace {

double step_efficiency_weight(double z, const BeliefParams& belief, bool squared) {
    if (z > 0.0) return squared ? belief.eta_c * belief.eta_c : belief.eta_c;
    if (z < 0.0) return squared ? belief.eta_d * belief.eta_d : belief.eta_d;
    return 0.0;
}

} // namespace

FilterState process_step(const FilterState& state, double z_i, const BeliefParams& belief,
                         const NoiseSpec& spec, const TrackerOptions& options) {
    validate_positive(belief);
    validate(spec);
    if (!std::isfinite(z_i) || !std::isfinite(state.s_hat) || !std::isfinite(state.p)) {
        throw std::invalid_argument("non-finite filter input");
    }

    FilterState next = state;
    next.k = state.k + 1;

    const double eta = z_i > 0.0 ? belief.eta_c : belief.eta_d;
    const double ds = eta * belief.delta * z_i / (kSecondsPerHour * belief.c_batt);
    next.s_hat += ds;
    if (z_i > 0.0) {
        next.s_cc_c_running += ds;
    } else if (z_i < 0.0) {
        next.s_cc_d_running += ds;
    }
    next.s_cc_running = next.s_cc_c_running + next.s_cc_d_running;

    double q = 0.0;
    if (options.q_mode == TrackerOptions::QMode::Constant) {
        q = options.q_constant;
    } else {
        const double per_sample = belief.delta / (kSecondsPerHour * belief.c_batt);
        const double w = step_efficiency_weight(z_i, belief, options.efficiency_squared);
        q += per_sample * per_sample * spec.sigma_i * spec.sigma_i * w;
        q += per_sample * per_sample * spec.kappa * spec.kappa * spec.sigma_l * spec.sigma_l * w;

        const double rho_c = spec.sigma_batt / belief.c_batt;
        if (options.incremental_q) {
            // Increment of the cumulative variance, floored at zero so p
            // stays monotone under prediction even when s_cc re-crosses a
            // previous level.
            const double d_cc = std::max(0.0, next.s_cc_running * next.s_cc_running -
                                                  state.s_cc_running * state.s_cc_running);
            const double d_c = std::max(0.0, next.s_cc_c_running * next.s_cc_c_running -
                                                 state.s_cc_c_running * state.s_cc_c_running);
            const double d_d = std::max(0.0, next.s_cc_d_running * next.s_cc_d_running -
                                                 state.s_cc_d_running * state.s_cc_d_running);
            q += rho_c * rho_c * d_cc;
            q += spec.sigma_eta_c * spec.sigma_eta_c * d_c;
            q += spec.sigma_eta_d * spec.sigma_eta_d * d_d;
            q += spec.sigma_delta * spec.sigma_delta * d_cc;
        } else {
            // The combined-variance formula evaluated literally at n = 1.
            const double ds_c = z_i > 0.0 ? ds : 0.0;
            const double ds_d = z_i < 0.0 ? ds : 0.0;
            q += rho_c * rho_c * ds * ds;
            q += spec.sigma_eta_c * spec.sigma_eta_c * ds_c * ds_c;
            q += spec.sigma_eta_d * spec.sigma_eta_d * ds_d * ds_d;
            q += spec.sigma_delta * spec.sigma_delta * ds * ds;
        }
    }
    next.p = state.p + q;
    return next;
}

FilterState measurement_step(const FilterState& state, double z_v,
                             std::span<const double> regressor, const MeasurementModel& model) {
    if (!std::isfinite(z_v)) {
        throw std::invalid_argument("non-finite voltage measurement");
    }
    if (regressor.size() != model.b.size()) {
        throw std::invalid_argument("regressor length does not match parameter vector");
    }

    const double h = model.ocv_slope(state.s_hat);
    double drop = 0.0;
    for (std::size_t j = 0; j < regressor.size(); ++j) {
        drop += regressor[j] * model.b[j];
    }
    const double innovation = z_v - model.ocv(state.s_hat) - drop;

    const double s = h * h * state.p + model.sigma_z * model.sigma_z;
    if (s == 0.0) {
        throw std::runtime_error("degenerate measurement update: zero innovation variance");
    }
    const double gain = state.p * h / s;

    FilterState next = state;
    next.s_hat = state.s_hat + gain * innovation;
    // (1 - gain*h) * p computed as sigma_z^2 * p / s, which cannot go
    // negative in floating point.
    next.p = state.p * (model.sigma_z * model.sigma_z / s);
    return next;
}

TrackResult track(const SegmentProfile& profile, const BatteryTruth& truth,
                  const BeliefParams& belief, const NoiseSpec& spec,
                  const MeasurementModel& model, std::uint64_t seed, double s0,
                  const TrackerOptions& options) {
    validate(truth);
    validate(belief);
    validate(spec);
    validate(model);
    if (model.b.size() > 1) {
        throw std::invalid_argument("the synthetic voltage channel supports at most one "
                                    "voltage-drop parameter (regressor = current)");
    }

    NoiseSpec run_spec = spec;
    run_spec.seed = seed;

    TrackResult result;
    result.truth = true_soc_trace(profile, truth, s0, truth.delta_true);

    const SampledCurrent clean = sample(profile, truth.delta_true);
    const InjectionRealization real =
        realize_injection(ErrorSource::Combined, profile, truth, belief, run_spec, 0);
    const std::size_t n = real.measured.samples.size();

    // The tracker's process model runs with the drawn (wrong) parameters:
    // that is exactly the uncertainty the process noise is sized for.
    const BeliefParams run_belief{real.c_used, real.eta_c_used, real.eta_d_used, real.delta_used};

    Philox voltage_rng(seed, mc_stream(0, RngPurpose::VoltageNoise));

    result.open_loop.s0 = s0;
    result.open_loop.delta = truth.delta_true;
    result.open_loop.values.reserve(n);
    result.estimate.s0 = s0;
    result.estimate.delta = truth.delta_true;
    result.estimate.values.reserve(n);
    result.p.reserve(n);
    result.z_v.reserve(n);

    FilterState state;
    state.s_hat = s0;

    const double scale_c = real.eta_c_used * real.delta_used / (kSecondsPerHour * real.c_used);
    const double scale_d = real.eta_d_used * real.delta_used / (kSecondsPerHour * real.c_used);
    NeumaierSum open_acc;

    NeumaierSum est_err_sq;
    NeumaierSum open_err_sq;

    for (std::size_t k = 0; k < n; ++k) {
        const double z_i = real.measured.samples[k];
        const double i_true = clean.samples[k];
        const double s_true = result.truth.values[k];

        open_acc.add(z_i > 0.0 ? scale_c * z_i : scale_d * z_i);
        const double open_soc = s0 + open_acc.value();
        result.open_loop.values.push_back(open_soc);

        state = process_step(state, z_i, run_belief, run_spec, options);

        const double drop = model.b.empty() ? 0.0 : model.b[0] * i_true;
        const double z_v = model.ocv(s_true) + drop + model.sigma_z * voltage_rng.gaussian();
        result.z_v.push_back(z_v);

        const double regressor[1] = {z_i};
        state = measurement_step(
            state, z_v, std::span<const double>(regressor, model.b.size()), model);

        result.estimate.values.push_back(state.s_hat);
        result.p.push_back(state.p);

        const double est_err = state.s_hat - s_true;
        const double open_err = open_soc - s_true;
        est_err_sq.add(est_err * est_err);
        open_err_sq.add(open_err * open_err);
    }

    if (n > 0) {
        result.rmse = std::sqrt(est_err_sq.value() / static_cast<double>(n));
        result.rmse_open_loop = std::sqrt(open_err_sq.value() / static_cast<double>(n));
    }
    return result;
}

void write_track_csv(const TrackResult& result, std::ostream& out) {
    out << "k,t_s,s_true,s_cc_open_loop,s_hat,p,z_v\n";
    out << "0,0," << format_double(result.truth.s0) << ',' << format_double(result.open_loop.s0)
        << ',' << format_double(result.estimate.s0) << ",0,\n";
    for (std::size_t k = 1; k <= result.estimate.values.size(); ++k) {
        out << k << ',' << format_double(static_cast<double>(k) * result.truth.delta) << ','
            << format_double(result.truth.values[k - 1]) << ','
            << format_double(result.open_loop.values[k - 1]) << ','
            << format_double(result.estimate.values[k - 1]) << ','
            << format_double(result.p[k - 1]) << ',' << format_double(result.z_v[k - 1]) << '\n';
    }
}

} // namespace ccsoc
