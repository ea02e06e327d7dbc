#include <gtest/gtest.h>

#include <cmath>

#include "sign/error.hpp"
#include "sign/schedule.hpp"

using namespace sign;

namespace {
NoiseSchedule make(double eps, double T, std::size_t N, double rho, ScheduleKind kind = ScheduleKind::identity) {
    NoiseSchedule::Params p;
    p.kind = kind;
    p.eps = eps;
    p.T = T;
    p.N = N;
    p.rho = rho;
    return NoiseSchedule(p);
}
}  // namespace

TEST(Schedule, IdentitySigma) {
    NoiseSchedule s;
    EXPECT_DOUBLE_EQ(s.sigma(0.7), 0.7);
    EXPECT_DOUBLE_EQ(s.sigma_dot(0.7), 1.0);
    EXPECT_DOUBLE_EQ(s.sigma_max(), 1.0);
    EXPECT_DOUBLE_EQ(s.sigma_min(), 0.002);
}

TEST(Schedule, LinearEndpointsAndDerivative) {
    NoiseSchedule::Params p;
    p.kind = ScheduleKind::linear;
    p.sigma_min = 0.01;
    p.sigma_max = 3.0;
    p.eps = 0.1;
    p.T = 2.0;
    NoiseSchedule s(p);
    EXPECT_DOUBLE_EQ(s.sigma(0.1), 0.01);
    EXPECT_DOUBLE_EQ(s.sigma(2.0), 3.0);
    for (double t : {0.3, 1.0, 1.7}) {
        const double fd = (s.sigma(t + 1e-6) - s.sigma(t - 1e-6)) / 2e-6;
        EXPECT_NEAR(s.sigma_dot(t), fd, 1e-7);
    }
}

TEST(Schedule, RhoOneIsUniform) {
    NoiseSchedule s = make(0.1, 1.1, 5, 1.0);
    for (std::size_t i = 0; i <= 5; ++i) EXPECT_NEAR(s.time(i), 0.1 + 0.2 * double(i), 1e-12);
}

TEST(Schedule, SingleInterval) {
    NoiseSchedule s = make(0.01, 1.0, 1, 7.0);
    ASSERT_EQ(s.grid().size(), 2u);
    EXPECT_EQ(s.grid()[0], 0.01);
    EXPECT_EQ(s.grid()[1], 1.0);
}

TEST(Schedule, KarrasGridOrderingAndSpacing) {
    NoiseSchedule s = make(0.01, 1.0, 4, 7.0);
    const auto& g = s.grid();
    ASSERT_EQ(g.size(), 5u);
    EXPECT_EQ(g.front(), 0.01);
    EXPECT_EQ(g.back(), 1.0);
    const double lo = std::pow(0.01, 1 / 7.0), hi = 1.0;
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(g[i], std::pow(lo + i / 4.0 * (hi - lo), 7.0), 1e-14);
    for (std::size_t i = 1; i + 1 < g.size(); ++i) EXPECT_GT(g[i + 1] - g[i], g[i] - g[i - 1]);
}

TEST(Schedule, OutOfRange) {
    NoiseSchedule s;
    EXPECT_THROW(s.sigma(0.001), RangeError);
    EXPECT_THROW(s.sigma(1.5), RangeError);
    EXPECT_THROW(s.time(19), RangeError);
    EXPECT_THROW(make(0.5, 0.4, 4, 7.0), ConfigError);
    EXPECT_THROW(make(0.1, 1.0, 0, 7.0), ConfigError);
}

TEST(Schedule, NoiseZeroSigmaIsIdentity) {
    NoiseSchedule::Params p;
    p.kind = ScheduleKind::linear;
    p.sigma_min = 0.0;
    p.sigma_max = 1.0;
    NoiseSchedule s(p);
    Rng rng(1);
    diff::Tensor x = diff::Tensor::matrix(2, 2, {1, 2, 3, 4});
    EXPECT_EQ(noise(s, x, 0, rng), x);
}

TEST(Schedule, NoiseMoments) {
    NoiseSchedule s = make(0.01, 2.0, 8, 7.0);
    Rng rng(7);
    const std::size_t M = 100000;
    diff::Tensor x({M, 1}, 0.5);
    diff::Tensor y = noise(s, x, 5, rng);
    const double sig = s.sigma_at(5);
    double m = 0, v = 0;
    for (double a : y.values()) m += a;
    m /= M;
    for (double a : y.values()) v += (a - m) * (a - m);
    v /= (M - 1);
    EXPECT_NEAR(m, 0.5, 4 * sig / std::sqrt(double(M)));
    // variance standard error sigma^2 sqrt(2 / M)
    EXPECT_NEAR(v, sig * sig, 3 * sig * sig * std::sqrt(2.0 / M));
}

TEST(Schedule, PerRowNoiseUsesRowLevel) {
    NoiseSchedule s = make(0.01, 1.0, 4, 7.0);
    Rng rng(3);
    const std::size_t M = 20000;
    diff::Tensor x({M, 1}, 0.0);
    std::vector<std::size_t> n(M);
    for (std::size_t i = 0; i < M; ++i) n[i] = i % 2 ? 4 : 0;
    diff::Tensor y = noise(s, x, n, rng);
    double odd = 0, even = 0;
    for (std::size_t i = 0; i < M; ++i) (i % 2 ? odd : even) += y[i] * y[i];
    EXPECT_NEAR(odd / (M / 2), 1.0, 0.05);
    EXPECT_LT(even / (M / 2), 1e-3);
}
