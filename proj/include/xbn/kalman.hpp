#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xbn/moments.hpp"

namespace xbn {

/// Noise hyperparameters of the scalar-gain filter. The measurement noise
/// applied at each gain update is r / batch_size.
struct KalmanConfig {
    double q = 1.0;
    double r = 0.01;
    double p0 = 1.0;
    std::uint64_t gain_interval = 100;

    void validate() const;
};

/// Running estimate of the dataset mean and std of the embeddings. A single
/// scalar variance and gain are shared by every dimension and by both
/// statistics.
struct KalmanState {
    std::vector<double> mean_est;
    std::vector<double> std_est;
    double p = 0.0;
    double gain = 0.0;
    std::uint64_t step = 0;

    std::size_t dim() const noexcept { return mean_est.size(); }

    /// Target stats for adapting the memory bank.
    MomentStats as_stats() const;
};

/// Starts the filter at the first observation. The stored gain is what one
/// predict/gain update from p0 would give with measurement noise r / first_obs.count;
/// the first kalman_step recomputes it anyway.
KalmanState kalman_init(const MomentStats& first_obs, const KalmanConfig& config);

/// One filter iteration. Gain and p are recomputed only when
/// state.step % gain_interval == 0; the estimate update runs every call.
KalmanState kalman_step(const KalmanState& state, const MomentStats& obs, std::size_t batch_size,
                        const KalmanConfig& config);

/// Fixed point of p -> (1 - K(p)) (p + q), K(p) = (p + q) / (p + q + r/batch_size).
double steady_state_gain(const KalmanConfig& config, std::size_t batch_size);

/// Exponential moving average of the statistics: the estimate update with a
/// constant gain of (1 - momentum). p and gain are left untouched.
KalmanState ema_step(const KalmanState& state, const MomentStats& obs, double momentum);

/// Shared innovation update: est += gain * (obs - est), std floored.
void apply_innovation(KalmanState& state, const MomentStats& obs, double gain);

}  // namespace xbn
