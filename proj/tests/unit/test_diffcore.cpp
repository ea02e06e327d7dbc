#include <gtest/gtest.h>

#include <cmath>

#include "sign/autodiff.hpp"
#include "sign/error.hpp"
#include "sign/mlp.hpp"
#include "sign/rng.hpp"

using namespace sign;
using namespace sign::diff;

namespace {

Tensor randn(std::size_t r, std::size_t c, Rng& rng) {
    Tensor t({r, c});
    for (auto& v : t.values()) v = rng.normal();
    return t;
}

// plain loops, no Eigen
Tensor naive_forward(const Mlp& net, const Tensor& x) {
    const auto& w = net.arch().widths;
    auto flat = net.flat_parameters();
    std::size_t off = 0;
    Tensor h = x;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        const std::size_t in = w[l], out = w[l + 1];
        Tensor next({x.rows(), out});
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t o = 0; o < out; ++o) {
                double s = flat[off + in * out + o];
                for (std::size_t i = 0; i < in; ++i) s += flat[off + o * in + i] * h(r, i);
                if (l + 2 < w.size()) s = s / (1.0 + std::exp(-s));
                next(r, o) = s;
            }
        off += in * out + out;
        h = next;
    }
    if (net.arch().skip)
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += x[i];
    return h;
}

// central differences of a scalar function of one input tensor
double input_grad_error(const std::function<Var(const Var&)>& f, const Tensor& at) {
    Var p = parameter(at);
    f(p).backward();
    const Tensor g = p.grad();
    double worst = 0;
    for (std::size_t i = 0; i < at.size(); ++i) {
        Tensor a = at, b = at;
        a[i] += 1e-6;
        b[i] -= 1e-6;
        const double num = (f(constant(a)).value().item() - f(constant(b)).value().item()) / 2e-6;
        worst = std::max(worst, std::abs(num - g[i]) / (std::abs(num) + 1e-6));
    }
    return worst;
}

}  // namespace

TEST(Mlp, ZeroWeightsGiveZero) {
    Mlp net(MlpArch{{2, 16, 2}});
    Tensor x = Tensor::matrix(3, 2, {1, 2, -3, 4, 0.5, 0.25});
    const Tensor y = net.forward(x);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, SingleLinearIdentityLayer) {
    Mlp net(MlpArch{{2, 2}});
    net.set_flat_parameters(std::vector<double>{1, 0, 0, 1, 0, 0});
    Tensor x = Tensor::matrix(2, 2, {0.3, -7, 2, 1e3});
    EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, MatchesHandMatmul) {
    Rng rng(3);
    for (bool skip : {false, true}) {
        Mlp net = Mlp::random(MlpArch{{2, 16, 2}, Activation::silu, skip}, rng);
        Tensor x = randn(5, 2, rng);
        Tensor got = net.forward(x), want = naive_forward(net, x);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
        Tensor graph = net.forward(constant(x)).value();
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(graph[i], got[i], 1e-14);
    }
}

TEST(Mlp, SkipIdentityInit) {
    Rng rng(1);
    MlpNet net = MlpNet::random(MlpArch{{3, 8, 8, 3}, Activation::silu, true}, rng, true);
    Tensor x = randn(4, 3, rng);
    EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, ArchDescriptorRoundTrip) {
    MlpArch a{{2, 128, 64, 2}, Activation::tanh, true};
    EXPECT_EQ(MlpArch::parse(a.descriptor()), a);
    EXPECT_EQ(a.parameter_count(), 2u * 128 + 128 + 128 * 64 + 64 + 64 * 2 + 2);
    EXPECT_THROW(MlpArch::parse("mlp widths=2 act=silu skip=0"), FormatError);
}

TEST(Autodiff, SumOfSquares) {
    Var x = parameter(Tensor::matrix(1, 2, {1, 2}));
    sum_rows(mul(x, x)).backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(Autodiff, NonScalarBackwardRejected) {
    Var x = parameter(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    EXPECT_THROW(mul(x, x).backward(), ContractError);
}

TEST(Autodiff, GradientsAccumulateUntilZeroed) {
    Var x = parameter(Tensor::matrix(1, 2, {1, 2}));
    mean(mul(x, x)).backward();
    mean(mul(x, x)).backward();
    EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
    x.zero_grad();
    EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
}

TEST(Autodiff, StopGradient) {
    Tensor v = Tensor::matrix(1, 3, {0.5, -1, 2});
    Var x = parameter(v);
    Var sg = stop_gradient(x);
    EXPECT_EQ(sg.value(), v);
    mean(mul(sg, x)).backward();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], v[i] / 3.0);
    x.zero_grad();
    mean(mul(sg, sg)).backward();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 0.0);
}

TEST(Autodiff, FrozenViewBlocksParameterGradient) {
    Rng rng(5);
    MlpNet net = MlpNet::random(MlpArch{{2, 8, 2}}, rng, false);
    FrozenView frozen(net);
    Var x = parameter(randn(4, 2, rng));
    mean(squared_norm_rows(frozen.forward(x))).backward();
    for (const Var& p : net.parameters())
        for (double g : p.grad().values()) EXPECT_EQ(g, 0.0);
    double mag = 0;
    for (double g : x.grad().values()) mag += std::abs(g);
    EXPECT_GT(mag, 0.0);
}

TEST(Autodiff, EmaRefresh) {
    Rng rng(2);
    MlpNet a = MlpNet::random(MlpArch{{2, 4, 2}}, rng, false);
    MlpNet b = MlpNet::random(MlpArch{{2, 4, 2}}, rng, false);
    FrozenView f(a);
    f.refresh_ema(b, 0.75);
    auto pa = a.flat_parameters(), pb = b.flat_parameters(), pf = f.flat_parameters();
    for (std::size_t i = 0; i < pf.size(); ++i) EXPECT_NEAR(pf[i], 0.75 * pa[i] + 0.25 * pb[i], 1e-15);
    f.refresh_ema(b, 0.0);
    EXPECT_EQ(f.flat_parameters(), pb);
}

TEST(Autodiff, OpGradientsMatchCentralDifferences) {
    Rng rng(8);
    const Tensor x = randn(3, 4, rng);
    const Tensor w = randn(2, 4, rng), b = randn(1, 2, rng), vals = randn(4, 3, rng), e = randn(3, 4, rng);
    const std::vector<double> sig = {0.5, 1.0, 2.0};
    EXPECT_LT(input_grad_error([&](const Var& v) { return mean(affine(v, constant(w), constant(b))); }, x), 1e-6);
    EXPECT_LT(input_grad_error([&](const Var& v) { return mean(affine(constant(x), v, constant(b))); }, w), 1e-6);
    for (auto k : {Nonlinearity::silu, Nonlinearity::tanh})
        EXPECT_LT(input_grad_error([&](const Var& v) { return mean(mul(apply(k, v), v)); }, x), 1e-6);
    Tensor pos = x;
    for (auto& v : pos.values()) v = std::abs(v) + 0.5;
    EXPECT_LT(input_grad_error([&](const Var& v) { return mean(apply(Nonlinearity::sqrt, v)); }, pos), 1e-6);
    const Tensor up = randn(3, 3, rng);
    EXPECT_LT(input_grad_error([&](const Var& v) { return mean(mul(softmax_weighted_sum(v, constant(vals)), constant(up))); }, x), 1e-6);
    EXPECT_LT(input_grad_error([&](const Var& v) { return mean(mul(softmax_weighted_sum(constant(x), v), constant(up))); }, vals), 1e-6);
    EXPECT_LT(input_grad_error([&](const Var& v) { return mean(squared_norm_rows(add_noise(v, sig, e))); }, x), 1e-6);
    EXPECT_LT(input_grad_error([&](const Var& v) { return mean(sub(scale(v, 3.0), add(v, mul(v, v)))); }, x), 1e-6);
}

TEST(Autodiff, AddNoiseFixedDraw) {
    Var x = constant(Tensor::matrix(1, 2, {0, 0}));
    const std::vector<double> sig = {2.0};
    Var y = add_noise(x, sig, Tensor::matrix(1, 2, {1, 0}));
    EXPECT_DOUBLE_EQ(y.value()[0], 2.0);
    EXPECT_DOUBLE_EQ(y.value()[1], 0.0);
}

TEST(Autodiff, NoGradGuard) {
    Var x = parameter(Tensor::matrix(1, 1, {2}));
    {
        NoGradGuard g;
        EXPECT_FALSE(mul(x, x).requires_grad());
    }
    EXPECT_TRUE(mul(x, x).requires_grad());
}

TEST(Adam, ZeroGradientKeepsParametersAndDecaysMoments) {
    Var p = parameter(Tensor::matrix(1, 2, {1, -1}));
    std::vector<Var> ps{p};
    AdamState st = AdamState::for_parameters(ps);
    st.first_moment[0][0] = 0.5;
    st.second_moment[0][0] = 0.25;
    adam_step(ps, st, 0.0);
    EXPECT_DOUBLE_EQ(p.value()[0], 1.0);
    EXPECT_DOUBLE_EQ(st.first_moment[0][0], 0.45);
    EXPECT_DOUBLE_EQ(st.second_moment[0][0], 0.25 * 0.999);
    Var q = parameter(Tensor::matrix(1, 2, {1, -1}));
    std::vector<Var> qs{q};
    AdamState fresh = AdamState::for_parameters(qs);
    adam_step(qs, fresh, 1e-3);
    EXPECT_EQ(q.value()[0], 1.0);
    EXPECT_EQ(q.value()[1], -1.0);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
    Var p = parameter(Tensor::matrix(1, 2, {0, 0}));
    std::vector<Var> ps{p};
    AdamState st = AdamState::for_parameters(ps);
    p.mutable_grad() = Tensor::matrix(1, 2, {0.3, -2});
    adam_step(ps, st, 0.01);
    EXPECT_NEAR(p.value()[0], -0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
    EXPECT_NEAR(p.value()[1], 0.01 * 2 / (2 + 1e-8), 1e-15);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
    Var p = parameter(Tensor::matrix(1, 1, {0}));
    std::vector<Var> ps{p};
    AdamState st = AdamState::for_parameters(ps);
    double prev = 0;
    for (int i = 0; i < 200; ++i) {
        p.mutable_grad() = Tensor::matrix(1, 1, {0.7});
        adam_step(ps, st, 1e-3);
        if (i == 199) EXPECT_NEAR(p.value()[0] - prev, -1e-3, 1e-9);
        prev = p.value()[0];
    }
}

TEST(Adam, NonFiniteGradientDiverges) {
    Var p = parameter(Tensor::matrix(1, 1, {0}));
    std::vector<Var> ps{p};
    AdamState st = AdamState::for_parameters(ps);
    p.mutable_grad() = Tensor::matrix(1, 1, {NAN});
    EXPECT_THROW(adam_step(ps, st, 1e-3), DivergenceError);
}

TEST(FiniteDiff, QuadraticLoss) {
    Mlp net(MlpArch{{1, 1}});
    net.set_flat_parameters(std::vector<double>{0.7, -0.2});
    const Tensor x = Tensor::matrix(3, 1, {1, 2, -1});
    auto loss = [&] { return mean(squared_norm_rows(net.forward(constant(x)))); };
    EXPECT_LE(finite_diff_check(loss, net, 1e-5), 1e-7);
}

TEST(FiniteDiff, SmallMlp) {
    Rng rng(4);
    Mlp net = Mlp::random(MlpArch{{2, 8, 2}}, rng);
    const Tensor x = randn(6, 2, rng);
    auto loss = [&] { return mean(squared_norm_rows(net.forward(constant(x)))); };
    EXPECT_LE(finite_diff_check(loss, net, 1e-5), 1e-5);
}

TEST(Gradients, NormAndClip) {
    Var a = parameter(Tensor::matrix(1, 2, {0, 0}));
    Var b = parameter(Tensor::matrix(1, 1, {0}));
    a.mutable_grad() = Tensor::matrix(1, 2, {3, 0});
    b.mutable_grad() = Tensor::matrix(1, 1, {4});
    std::vector<Var> ps{a, b};
    EXPECT_DOUBLE_EQ(gradient_norm(ps), 5.0);
    EXPECT_DOUBLE_EQ(clip_gradients(ps, 1.0), 5.0);
    EXPECT_NEAR(gradient_norm(ps), 1.0, 1e-15);
    EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

TEST(Mlp, DeterministicInit) {
    Rng a(11), b(11);
    EXPECT_EQ(Mlp::random(MlpArch{{2, 8, 2}}, a).flat_parameters(), Mlp::random(MlpArch{{2, 8, 2}}, b).flat_parameters());
}
