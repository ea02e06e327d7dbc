#include <gtest/gtest.h>

#include <cmath>

#include "sign/error.hpp"
#include "sign/score.hpp"

using namespace sign;

namespace {

// log sum_k w_k N(x; mu_k, (s_k^2 + sigma^2) I), computed directly
double log_density(const GaussianMixture& gm, std::span<const double> x, double sigma) {
    const double pi = std::acos(-1.0);
    const std::size_t d = gm.dim();
    double p = 0;
    for (std::size_t k = 0; k < gm.components(); ++k) {
        const double v = gm.stds()[k] * gm.stds()[k] + sigma * sigma;
        double q = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double r = x[j] - gm.means()(k, j);
            q += r * r;
        }
        p += gm.weights()[k] * std::exp(-0.5 * q / v) / std::pow(2 * pi * v, 0.5 * double(d));
    }
    return std::log(p);
}

GaussianMixture two_blobs() { return GaussianMixture::parse("0.3:1,0.5:0.4;0.7:-1,-0.5:0.6"); }

}  // namespace

TEST(MixtureScore, AtMeanIsZero) {
    GaussianMixture gm({1.0}, Tensor::matrix(1, 2, {0.5, -2}), {0.3});
    const std::vector<double> x = {0.5, -2};
    for (double v : mixture_score(gm, x, 0.2)) EXPECT_EQ(v, 0.0);
}

TEST(MixtureScore, StandardNormalAtUnitPoint) {
    GaussianMixture gm({1.0}, Tensor::matrix(1, 2, {0, 0}), {1.0});
    const std::vector<double> x = {1, 0};
    auto s = mixture_score(gm, x, 0.0);
    EXPECT_DOUBLE_EQ(s[0], -1.0);
    EXPECT_DOUBLE_EQ(s[1], 0.0);
}

TEST(MixtureScore, SymmetricMixtureAntisymmetricScore) {
    GaussianMixture gm = GaussianMixture::parse("0.5:1,1:0.2;0.5:-1,-1:0.2");
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        std::vector<double> x = {rng.normal(), rng.normal()}, mx = {-x[0], -x[1]};
        auto a = mixture_score(gm, x, 0.3), b = mixture_score(gm, mx, 0.3);
        EXPECT_NEAR(a[0], -b[0], 1e-12);
        EXPECT_NEAR(a[1], -b[1], 1e-12);
    }
}

TEST(MixtureScore, MatchesLogDensityDifferences) {
    GaussianMixture gm = two_blobs();
    Rng rng(9);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x = {2 * rng.normal(), 2 * rng.normal()};
        const double sigma = 0.05 + rng.uniform();
        auto s = mixture_score(gm, x, sigma);
        for (std::size_t j = 0; j < 2; ++j) {
            auto a = x, b = x;
            const double h = 1e-5;
            a[j] += h;
            b[j] -= h;
            const double fd = (log_density(gm, a, sigma) - log_density(gm, b, sigma)) / (2 * h);
            EXPECT_LE(std::abs(s[j] - fd), 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(MixtureScore, FarPointsStayFinite) {
    GaussianMixture gm = two_blobs();
    const std::vector<double> x = {300, -400};
    for (double v : mixture_score(gm, x, 0.002)) EXPECT_TRUE(std::isfinite(v));
}

TEST(MixtureScore, ParseAndText) {
    GaussianMixture gm = two_blobs();
    GaussianMixture again = GaussianMixture::parse(gm.to_text());
    EXPECT_EQ(again.weights(), gm.weights());
    EXPECT_EQ(again.means(), gm.means());
    EXPECT_EQ(again.stds(), gm.stds());
    EXPECT_THROW(GaussianMixture::parse("0.5:1,1:0.2;0.2:-1,-1:0.2"), ConfigError);
    EXPECT_THROW(GaussianMixture::parse("1:1,1:-0.2"), ConfigError);
    EXPECT_THROW(GaussianMixture::parse("0.5:1,1:0.2;0.5:-1:0.2"), ConfigError);
}

TEST(MixtureScore, MomentsAndNormalization) {
    GaussianMixture gm = two_blobs();
    auto m = gm.mean();
    EXPECT_NEAR(m[0], 0.3 - 0.7, 1e-15);
    auto v = gm.variance();
    const double ex2 = 0.3 * (1 + 0.16) + 0.7 * (1 + 0.36);
    EXPECT_NEAR(v[0], ex2 - m[0] * m[0], 1e-12);
    const std::vector<double> shift = {m[0], m[1]};
    GaussianMixture n = gm.normalized(shift, 2.0);
    EXPECT_NEAR(n.mean()[0], 0.0, 1e-15);
    EXPECT_NEAR(n.variance()[0], v[0] / 4, 1e-12);
}

TEST(KernelScore, SinglePointEqualsGaussianScore) {
    Tensor data = Tensor::matrix(1, 2, {0.3, -1.2});
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        std::vector<double> x = {rng.normal(), rng.normal()};
        auto k = kernel_score(data, x, 0.7);
        EXPECT_DOUBLE_EQ(k[0], -(x[0] - 0.3) / 0.49);
        EXPECT_DOUBLE_EQ(k[1], -(x[1] + 1.2) / 0.49);
    }
}

TEST(KernelScore, BruteForceSoftmax) {
    Tensor data = Tensor::matrix(3, 1, {-1, 0.5, 2});
    const std::vector<double> x = {0.2};
    const double s = 0.8;
    double wsum = 0, msum = 0;
    for (double xi : {-1.0, 0.5, 2.0}) {
        const double w = std::exp(-(0.2 - xi) * (0.2 - xi) / (2 * s * s));
        wsum += w;
        msum += w * xi;
    }
    EXPECT_NEAR(kernel_score(data, x, s)[0], (msum / wsum - 0.2) / (s * s), 1e-12);
}

TEST(KernelScore, SymmetricData) {
    Tensor data = Tensor::matrix(2, 2, {1, 1, -1, -1});
    const std::vector<double> x = {0, 0};
    for (double v : kernel_score(data, x, 0.5)) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(KernelScore, ApproachesMixtureScoreWithMoreSamples) {
    GaussianMixture gm({1.0}, Tensor::matrix(1, 1, {0.0}), {1.0});
    Rng rng(12);
    Tensor pts({50, 1});
    for (auto& v : pts.values()) v = 1.5 * rng.normal();
    std::vector<double> err;
    for (std::size_t M : {10, 100, 1000, 10000}) {
        double e = 0;
        for (int rep = 0; rep < 8; ++rep) {
            Tensor data = gm.sample(M, rng);
            KernelScore ks(data);
            Tensor s = ks.score(pts, 1.0);
            for (std::size_t i = 0; i < pts.rows(); ++i) {
                const double truth = -pts[i] / 2.0;
                e += (s[i] - truth) * (s[i] - truth);
            }
        }
        err.push_back(e);
    }
    for (std::size_t i = 1; i < err.size(); ++i) EXPECT_LT(err[i], err[i - 1]);
}

TEST(KernelScore, FloorApplies) {
    Tensor data = Tensor::matrix(1, 1, {0.0});
    KernelScore ks(data, 0.5);
    Tensor x = Tensor::matrix(1, 1, {1.0});
    EXPECT_DOUBLE_EQ(ks.score(x, 0.01)[0], -1.0 / 0.25);
}

TEST(DsmValue, TrueScoreHitsFloor) {
    // data N(0, I): E || -(x + s e)/(1 + s^2) + e/s ||^2 = d / (s^2 (1 + s^2))
    GaussianMixture gm({1.0}, Tensor::matrix(1, 2, {0, 0}), {1.0});
    AnalyticScore truth(gm);
    ZeroScore zero(2);
    Rng rng(4);
    Tensor x = gm.sample(200000, rng);
    const double s = 0.5;
    const double want = 2.0 / (s * s * (1 + s * s));
    EXPECT_NEAR(dsm_value(truth, x, s, rng), want, 0.02 * want);
    EXPECT_GT(dsm_value(zero, x, s, rng), want);
}

TEST(ScoreNet, UntrainedFinite) {
    Rng rng(1);
    ScoreNet net = ScoreNet::random(2, {16, 16}, diff::Activation::silu, 1.0, rng);
    Tensor x = Tensor::matrix(2, 2, {0, 0, 50, -30});
    const std::vector<double> sig = {0.002, 10.0};
    EXPECT_TRUE(net.evaluate(x, sig).all_finite());
}

TEST(ScoreNet, DsmGradientMatchesDifferences) {
    Rng rng(6);
    ScoreNet net = ScoreNet::random(2, {8}, diff::Activation::silu, 1.0, rng);
    Tensor x = gaussian({5, 2}, rng), e = gaussian({5, 2}, rng);
    const std::vector<double> sig = {0.1, 0.3, 0.5, 0.8, 1.0};
    auto loss = [&] { return dsm_loss(net, x, sig, e); };
    EXPECT_LE(diff::finite_diff_check(loss, net.mlp(), 1e-5), 1e-5);
}

TEST(LearnedScore, LearnsStandardNormal) {
    GaussianMixture gm({1.0}, Tensor::matrix(1, 2, {0, 0}), {1.0});
    NoiseSchedule sched;
    Rng rng(21);
    ScoreNet net = ScoreNet::random(2, {64, 64}, diff::Activation::silu, 1.0, rng);
    auto learned = train_learned_score(
        net, [&](Rng& r) { return gm.sample(256, r); }, sched, 3000, 2e-3, rng);
    EXPECT_EQ(learned->updates(), 3000u);
    Tensor x = Tensor::matrix(1, 2, {1, 0});
    for (double s : {0.3, 0.5, 1.0}) {
        Tensor got = learned->score(x, s);
        const double want = -1.0 / (1 + s * s);
        EXPECT_NEAR(got[0], want, 0.1 * std::abs(want)) << "sigma " << s;
        EXPECT_NEAR(got[1], 0.0, 0.1 * std::abs(want)) << "sigma " << s;
    }
}

TEST(LearnedScore, ZeroStepsStillEvaluates) {
    NoiseSchedule sched;
    Rng rng(2);
    auto learned = train_learned_score(
        ScoreNet::random(2, {8}, diff::Activation::silu, 1.0, rng), [](Rng& r) { return gaussian({8, 2}, r); },
        sched, 0, 1e-3, rng);
    EXPECT_TRUE(learned->score(gaussian({4, 2}, rng), 0.5).all_finite());
}

TEST(LearnedScore, ReadsBlockedDuringUpdate) {
    Rng rng(2);
    LearnedScore ls(ScoreNet::random(2, {8}, diff::Activation::silu, 1.0, rng), 1e-3);
    ls.begin_update();
    EXPECT_THROW(ls.score(gaussian({1, 2}, rng), 0.5), ContractError);
    ls.end_update();
    EXPECT_NO_THROW(ls.score(gaussian({1, 2}, rng), 0.5));
}
