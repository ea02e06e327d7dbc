#include <gtest/gtest.h>

#include <cmath>

#include "sign/error.hpp"
#include "sign/eval.hpp"
#include "sign/pfode.hpp"

using namespace sign;

namespace {

class ConstantScore final : public ScoreSource {
public:
    explicit ConstantScore(std::vector<double> v) : v_(std::move(v)) {}
    std::size_t dim() const override { return v_.size(); }
    Tensor score(const Tensor& x, std::span<const double>) const override {
        Tensor out = Tensor::zeros_like(x);
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < v_.size(); ++c) out(r, c) = v_[c];
        return out;
    }
    using ScoreSource::score;

private:
    std::vector<double> v_;
};

class NanScore final : public ScoreSource {
public:
    std::size_t dim() const override { return 1; }
    Tensor score(const Tensor& x, std::span<const double>) const override { return Tensor(x.shape(), NAN); }
    using ScoreSource::score;
};

NoiseSchedule make(double eps, double T, std::size_t N) {
    NoiseSchedule::Params p;
    p.eps = eps;
    p.T = T;
    p.N = N;
    return NoiseSchedule(p);
}

// closed-form flow of N(mu, s^2 I) under sigma(t) = t
double exact(double xT, double mu, double s, double T, double t) {
    return mu + (xT - mu) * std::sqrt(s * s + t * t) / std::sqrt(s * s + T * T);
}

}  // namespace

TEST(PfOde, ZeroScoreLeavesStateUnchanged) {
    ZeroScore zero(2);
    NoiseSchedule s;
    Tensor x = Tensor::matrix(2, 2, {1, 2, -3, 0.5});
    EXPECT_EQ(euler_step(x, 4, zero, s), x);
    EXPECT_EQ(heun_step(x, 0, zero, s), x);
    Trajectory tr = solve(x, zero, s);
    for (const auto& st : tr.states) EXPECT_EQ(st, x);
}

TEST(PfOde, HandEulerStep) {
    // t from 1 to 0.5, sigma = t, sigma' = 1, s = (1, 0): x + (-0.5)(-1 * 1 * s)
    ConstantScore src({1, 0});
    NoiseSchedule s = make(0.5, 1.0, 1);
    Tensor x = Tensor::matrix(1, 2, {0, 0});
    Tensor y = euler_step(x, 0, src, s);
    EXPECT_DOUBLE_EQ(y[0], 0.5);
    EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(PfOde, FlowTargetIsOneEulerStep) {
    GaussianMixture gm = GaussianMixture::parse("0.5:1,1:0.2;0.5:-1,-1:0.2");
    AnalyticScore src(gm);
    NoiseSchedule s;
    Rng rng(1);
    Tensor x = gaussian({6, 2}, rng);
    EXPECT_EQ(flow_target(x, 7, src, s), euler_step(x, 6, src, s));
    std::vector<std::size_t> n = {1, 2, 3, 18, 5, 9};
    Tensor per = flow_target(x, n, src, s);
    for (std::size_t r = 0; r < 6; ++r) {
        Tensor one = Tensor::matrix(1, 2, {x(r, 0), x(r, 1)});
        Tensor want = euler_step(one, n[r] - 1, src, s);
        EXPECT_EQ(per(r, 0), want[0]);
        EXPECT_EQ(per(r, 1), want[1]);
    }
    EXPECT_THROW(flow_target(x, 0, src, s), RangeError);
}

TEST(PfOde, FlowTargetMovesTowardUnimodalMean) {
    GaussianMixture gm({1.0}, Tensor::matrix(1, 2, {0.5, 0.5}), {0.3});
    AnalyticScore src(gm);
    NoiseSchedule s;
    Rng rng(2);
    Tensor x = gaussian({50, 2}, rng);
    Tensor y = flow_target(x, 10, src, s);
    for (std::size_t r = 0; r < 50; ++r) {
        const double a = std::hypot(x(r, 0) - 0.5, x(r, 1) - 0.5), b = std::hypot(y(r, 0) - 0.5, y(r, 1) - 0.5);
        EXPECT_LT(b, a);
    }
}

TEST(PfOde, SolveShapes) {
    ZeroScore zero(3);
    NoiseSchedule s = make(0.01, 1.0, 1);
    Tensor x({4, 3}, 1.0);
    Trajectory tr = solve(x, zero, s);
    ASSERT_EQ(tr.states.size(), 2u);
    EXPECT_EQ(tr.indices, (std::vector<std::size_t>{1, 0}));
    EXPECT_EQ(solve_endpoint(x, zero, s), tr.endpoint());
}

TEST(PfOde, SolveMatchesClosedForm) {
    const double mu = 0.3, sd = 0.5;
    GaussianMixture gm({1.0}, Tensor::matrix(1, 1, {mu}), {sd});
    AnalyticScore src(gm);
    NoiseSchedule s = make(0.002, 1.0, 64);
    Tensor x = Tensor::matrix(3, 1, {-1, 0.2, 2.5});
    Tensor end = solve_endpoint(x, src, s, Stepper::heun);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(end[r], exact(x[r], mu, sd, 1.0, 0.002), 1e-3);
    Tensor fine = integrate(x, 1.0, 0.002, 4000, src, s);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(fine[r], exact(x[r], mu, sd, 1.0, 0.002), 1e-6);
}

TEST(PfOde, ConvergenceOrder) {
    const double mu = 0.0, sd = 0.5, T = 1.0;
    GaussianMixture gm({1.0}, Tensor::matrix(1, 1, {mu}), {sd});
    AnalyticScore src(gm);
    Rng rng(5);
    Tensor x = gaussian({256, 1}, rng, T);
    std::vector<double> Ns, eu, he;
    for (std::size_t N : {8, 16, 32, 64}) {
        NoiseSchedule s = make(0.002, T, N);
        Tensor a = solve_endpoint(x, src, s, Stepper::euler), b = solve_endpoint(x, src, s, Stepper::heun);
        double ea = 0, eb = 0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double want = exact(x[r], mu, sd, T, 0.002);
            ea += std::abs(a[r] - want);
            eb += std::abs(b[r] - want);
        }
        Ns.push_back(double(N));
        eu.push_back(ea / x.rows());
        he.push_back(eb / x.rows());
    }
    const double se = loglog_slope(Ns, eu), sh = loglog_slope(Ns, he);
    EXPECT_GE(se, -1.2);
    EXPECT_LE(se, -0.8);
    EXPECT_LE(sh, -1.6);
}

TEST(PfOde, EndpointNearNarrowMean) {
    const double mu = 0.7, eps = 0.002;
    GaussianMixture gm({1.0}, Tensor::matrix(1, 1, {mu}), {1e-4});
    AnalyticScore src(gm);
    NoiseSchedule s = make(eps, 1.0, 18);
    Rng rng(8);
    Tensor x = gaussian({1000, 1}, rng, 1.0);
    Tensor end = solve_endpoint(x, src, s);
    std::size_t inside = 0;
    for (double v : end.values()) inside += std::abs(v - mu) <= 3 * eps;
    EXPECT_GE(inside, 990u);
}

TEST(PfOde, ReferenceSolveHitsGridTimes) {
    const double mu = 0.1, sd = 0.4;
    GaussianMixture gm({1.0}, Tensor::matrix(1, 1, {mu}), {sd});
    AnalyticScore src(gm);
    NoiseSchedule s = make(0.002, 2.0, 8);
    Tensor x = Tensor::matrix(2, 1, {-3, 1});
    Trajectory tr = reference_solve(x, src, s, 200);
    ASSERT_EQ(tr.states.size(), 9u);
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
        const double t = s.time(tr.indices[k]);
        for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(tr.states[k][r], exact(x[r], mu, sd, 2.0, t), 1e-6);
    }
}

TEST(PfOde, NonFiniteScoreReportsIndex) {
    NanScore bad;
    NoiseSchedule s;
    Tensor x({1, 1}, 0.0);
    try {
        solve(x, bad, s);
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.index, s.steps());
    }
}
