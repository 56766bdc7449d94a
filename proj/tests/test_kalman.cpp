#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "xbn/error.hpp"
#include "xbn/kalman.hpp"

using namespace xbn;

namespace {

MomentStats obs(std::vector<double> mean, std::vector<double> sd, std::size_t count = 8) {
    MomentStats s;
    s.mean = std::move(mean);
    s.std = std::move(sd);
    s.count = count;
    return s;
}

MomentStats random_obs(std::mt19937_64& rng, std::size_t d) {
    std::normal_distribution<double> n(0, 1);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    MomentStats s;
    for (std::size_t j = 0; j < d; ++j) {
        s.mean.push_back(n(rng));
        s.std.push_back(u(rng));
    }
    s.count = 16;
    return s;
}

}  // namespace

TEST_CASE("kalman_init copies the first observation") {
    const KalmanConfig cfg{1.0, 0.01, 1.0, 100};
    const auto st = kalman_init(obs({0, 0, 0}, {1, 1, 1}), cfg);
    CHECK(st.mean_est == std::vector<double>{0, 0, 0});
    CHECK(st.std_est == std::vector<double>{1, 1, 1});
    CHECK(st.p == 1.0);
    CHECK(st.step == 0);
    CHECK(st.gain > 0.99);
    CHECK(st.gain <= 1.0);
}

TEST_CASE("invalid configs are rejected") {
    for (const KalmanConfig& bad : {KalmanConfig{1, 0.01, 0, 1}, KalmanConfig{1, 0.01, -1, 1},
                                    KalmanConfig{0, 0.01, 1, 1}, KalmanConfig{1, -0.1, 1, 1},
                                    KalmanConfig{1, 0.01, 1, 0}}) {
        try {
            kalman_init(obs({0}, {1}), bad);
            FAIL("expected InvalidConfig");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InvalidConfig);
        }
    }
}

TEST_CASE("zero measurement noise tracks observations exactly") {
    const KalmanConfig cfg{1.0, 0.0, 1.0, 1};
    std::mt19937_64 rng(4);
    auto st = kalman_init(random_obs(rng, 5), cfg);
    for (int k = 0; k < 20; ++k) {
        const auto o = random_obs(rng, 5);
        st = kalman_step(st, o, 16, cfg);
        CHECK(st.gain == 1.0);
        CHECK(st.mean_est == o.mean);
        CHECK(st.std_est == o.std);
    }
}

TEST_CASE("hand trace of the gain recursion") {
    // r' = r / |B| = 1 with |B| = 4
    const KalmanConfig cfg{1.0, 4.0, 1.0, 1};
    auto st = kalman_init(obs({0}, {1}, 4), cfg);
    st = kalman_step(st, obs({1}, {1}), 4, cfg);
    CHECK(std::abs(st.gain - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(st.p - 2.0 / 3.0) < 1e-15);
    st = kalman_step(st, obs({1}, {1}), 4, cfg);
    CHECK(std::abs(st.gain - 5.0 / 8.0) < 1e-15);
    CHECK(std::abs(st.p - 5.0 / 8.0) < 1e-15);
}

TEST_CASE("zero innovation leaves the estimate unchanged") {
    const KalmanConfig cfg{1.0, 0.5, 1.0, 1};
    auto st = kalman_init(obs({0.3, -0.2}, {0.5, 0.7}), cfg);
    const auto before = st;
    st = kalman_step(st, obs({0.3, -0.2}, {0.5, 0.7}), 8, cfg);
    CHECK(st.mean_est == before.mean_est);
    CHECK(st.std_est == before.std_est);
}

TEST_CASE("gain is only recomputed on interval boundaries") {
    const KalmanConfig cfg{1.0, 2.0, 1.0, 3};
    std::mt19937_64 rng(8);
    auto st = kalman_init(random_obs(rng, 2), cfg);
    for (int k = 0; k < 12; ++k) {
        const auto prev = st;
        st = kalman_step(st, random_obs(rng, 2), 4, cfg);
        if (prev.step % 3 != 0) {
            CHECK(st.gain == prev.gain);
            CHECK(st.p == prev.p);
        } else {
            CHECK(st.p != prev.p);
        }
    }
}

TEST_CASE("estimates are convex combinations") {
    const KalmanConfig cfg{1.0, 5.0, 1.0, 1};
    std::mt19937_64 rng(21);
    auto st = kalman_init(random_obs(rng, 6), cfg);
    for (int k = 0; k < 50; ++k) {
        const auto o = random_obs(rng, 6);
        const auto prev = st;
        st = kalman_step(st, o, 16, cfg);
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(st.mean_est[j] >= std::min(prev.mean_est[j], o.mean[j]));
            CHECK(st.mean_est[j] <= std::max(prev.mean_est[j], o.mean[j]));
        }
        CHECK(st.gain >= 0.0);
        CHECK(st.gain <= 1.0);
    }
}

TEST_CASE("gain converges monotonically to the steady state") {
    const KalmanConfig cfg{1.0, 16.0, 1.0, 1};
    const double target = steady_state_gain(cfg, 16);
    auto st = kalman_init(obs({0}, {1}, 16), cfg);
    double last_gap = 1e300;
    for (int k = 0; k < 60; ++k) {
        st = kalman_step(st, obs({0}, {1}), 16, cfg);
        const double gap = std::abs(st.gain - target);
        if (k > 0) CHECK(gap <= last_gap);
        last_gap = gap;
    }
    CHECK(last_gap < 1e-12);
}

TEST_CASE("steady_state_gain matches long fixed-point iteration and is scale free") {
    CHECK(steady_state_gain(KalmanConfig{1.0, 0.0, 1.0, 1}, 8) == 1.0);
    const auto trace = oracle::kalman_trace(1.0, 1.0, 1.0, 10000);
    CHECK(std::abs(steady_state_gain(KalmanConfig{1.0, 1.0, 1.0, 1}, 1) - trace.back().first) < 1e-10);
    for (double r : {0.01, 0.3, 2.0, 50.0}) {
        const double a = steady_state_gain(KalmanConfig{1.0, r, 1.0, 1}, 4);
        const double b = steady_state_gain(KalmanConfig{10.0, 10.0 * r, 1.0, 1}, 4);
        CHECK(std::abs(a - b) < 1e-10);
        CHECK(a > 0.0);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("ema_step is a frozen-gain update") {
    std::mt19937_64 rng(2);
    const auto first = random_obs(rng, 4);
    const KalmanConfig cfg{1.0, 0.01, 1.0, 1};
    auto st = kalman_init(first, cfg);

    const auto o = random_obs(rng, 4);
    const auto same = ema_step(st, o, 0.0);
    CHECK(same.mean_est == o.mean);
    CHECK(same.std_est == o.std);
    const auto frozen = ema_step(st, o, 1.0);
    CHECK(frozen.mean_est == st.mean_est);
    CHECK(frozen.std_est == st.std_est);
    CHECK(frozen.p == st.p);

    // Kalman path with the gain frozen at 1 - 0.7 via an interval it never reaches.
    const KalmanConfig never{1.0, 0.01, 1.0, 1000000};
    auto kal = st;
    kal.gain = 1.0 - 0.7;
    kal.step = 1;
    auto ema = st;
    for (int k = 0; k < 25; ++k) {
        const auto ob = random_obs(rng, 4);
        kal = kalman_step(kal, ob, 16, never);
        ema = ema_step(ema, ob, 0.7);
        CHECK(kal.mean_est == ema.mean_est);
        CHECK(kal.std_est == ema.std_est);
    }
    CHECK_THROWS_AS(ema_step(st, o, 1.5), Error);
    CHECK_THROWS_AS(ema_step(st, obs({0}, {1}), 0.5), Error);
}
