#include "xbn/kalman.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xbn/error.hpp"

namespace xbn {

void KalmanConfig::validate() const {
    if (!(q > 0.0) || !std::isfinite(q)) throw Error(ErrorCode::InvalidConfig, "q must be > 0");
    if (!(r >= 0.0) || !std::isfinite(r)) throw Error(ErrorCode::InvalidConfig, "r must be >= 0");
    if (!(p0 > 0.0) || !std::isfinite(p0)) throw Error(ErrorCode::InvalidConfig, "p0 must be > 0");
    if (gain_interval < 1) throw Error(ErrorCode::InvalidConfig, "gain_interval must be >= 1");
}

MomentStats KalmanState::as_stats() const {
    MomentStats s;
    s.mean = mean_est;
    s.std = std_est;
    s.count = 0;
    return s;
}

namespace {

double gain_for(double p_pred, double r, std::size_t batch_size) {
    const double meas = r / static_cast<double>(batch_size);
    return p_pred / (p_pred + meas);
}

}  // namespace

KalmanState kalman_init(const MomentStats& first_obs, const KalmanConfig& config) {
    config.validate();
    if (first_obs.count < 2) {
        throw Error(ErrorCode::InsufficientSamples, "initial observation needs count >= 2");
    }
    if (first_obs.mean.size() != first_obs.std.size()) {
        throw Error(ErrorCode::DimensionMismatch, "observation mean/std length differ");
    }
    KalmanState state;
    state.mean_est = first_obs.mean;
    state.std_est = first_obs.std;
    for (auto& s : state.std_est) s = std::max(kStdFloor, s);
    state.p = config.p0;
    state.gain = gain_for(config.p0 + config.q, config.r, first_obs.count);
    state.step = 0;
    return state;
}

void apply_innovation(KalmanState& state, const MomentStats& obs, double gain) {
    if (obs.mean.size() != state.mean_est.size() || obs.std.size() != state.std_est.size()) {
        throw Error(ErrorCode::DimensionMismatch, "observation dimension " + std::to_string(obs.mean.size()) +
                                                      " != state dimension " + std::to_string(state.dim()));
    }
    for (std::size_t j = 0; j < state.mean_est.size(); ++j) {
        // est + K (obs - est), written as a convex combination so K = 1 and
        // K = 0 reproduce the observation and the prior exactly.
        state.mean_est[j] = (1.0 - gain) * state.mean_est[j] + gain * obs.mean[j];
        state.std_est[j] = std::max(kStdFloor, (1.0 - gain) * state.std_est[j] + gain * obs.std[j]);
    }
}

KalmanState kalman_step(const KalmanState& state, const MomentStats& obs, std::size_t batch_size,
                        const KalmanConfig& config) {
    config.validate();
    if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");
    KalmanState next = state;
    if (state.step % config.gain_interval == 0) {
        const double p_pred = state.p + config.q;
        next.gain = gain_for(p_pred, config.r, batch_size);
        next.p = (1.0 - next.gain) * p_pred;
    }
    apply_innovation(next, obs, next.gain);
    ++next.step;
    return next;
}

double steady_state_gain(const KalmanConfig& config, std::size_t batch_size) {
    config.validate();
    if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");
    const double r = config.r / static_cast<double>(batch_size);
    if (r == 0.0) return 1.0;
    // At the fixed point the posterior variance p solves p^2 + q p - q r = 0,
    // so p_pred = p + q and K = p_pred / (p_pred + r). Written in terms of
    // lambda = r / q to keep the result scale-free.
    const double lambda = r / config.q;
    const double p_over_q = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * lambda));
    const double pred = p_over_q + 1.0;
    return pred / (pred + lambda);
}

KalmanState ema_step(const KalmanState& state, const MomentStats& obs, double momentum) {
    if (!(momentum >= 0.0 && momentum <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "momentum must lie in [0, 1]");
    }
    KalmanState next = state;
    apply_innovation(next, obs, 1.0 - momentum);
    ++next.step;
    return next;
}

}  // namespace xbn
