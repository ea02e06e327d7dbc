#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sign/autodiff.hpp"
#include "sign/rng.hpp"

namespace sign::diff {

enum class Activation { silu, tanh };

const char* to_string(Activation a);
Activation parse_activation(const std::string& name);

// Layer widths, hidden activation, and whether the input is added to the
// output (residual skip). The activation is applied between layers, never
// after the last one.
struct MlpArch {
    std::vector<std::size_t> widths;
    Activation activation = Activation::silu;
    bool skip = false;

    std::size_t input_width() const { return widths.front(); }
    std::size_t output_width() const { return widths.back(); }
    std::size_t parameter_count() const;
    // Text descriptor stored in checkpoints, e.g. "mlp widths=2,128,2 act=silu skip=1".
    std::string descriptor() const;
    static MlpArch parse(const std::string& descriptor);
    friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

// Forward pass through weights given as graph values ([W0, b0, W1, b1, ...]).
Var mlp_forward(const MlpArch& arch, std::span<const Var> params, const Var& x);

// Multi-layer perceptron with trainable parameters. Weights are [out, in].
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(MlpArch arch);  // all-zero parameters

    // Uniform(+-1/sqrt(fan_in)) weights and biases. With zero_last the final
    // layer starts at zero, so a skip net starts as the identity map.
    static Mlp random(MlpArch arch, Rng& rng, bool zero_last = false);

    const MlpArch& arch() const { return arch_; }
    std::span<const Var> parameters() const { return params_; }
    std::size_t parameter_count() const { return arch_.parameter_count(); }

    Var forward(const Var& x) const;
    Tensor forward(const Tensor& x) const;  // value only, no recording

    void zero_grad() const;
    // Flat copy of every parameter, declaration order.
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> flat);
    Mlp clone() const;

private:
    MlpArch arch_;
    std::vector<Var> params_;
};

// Generator f: data space -> data space.
class MlpNet : public Mlp {
public:
    MlpNet() = default;
    explicit MlpNet(Mlp mlp);
    static MlpNet random(MlpArch arch, Rng& rng, bool identity_init);
    MlpNet clone() const { return MlpNet(Mlp::clone()); }
    std::size_t dim() const { return arch().input_width(); }
};

// Detached copy of a net's parameters. Inputs still carry gradients through
// it, but nothing ever reaches the parameters it was copied from.
class FrozenView {
public:
    FrozenView() = default;
    explicit FrozenView(const Mlp& source);

    void refresh(const Mlp& source);
    // params <- decay * params + (1 - decay) * source; decay = 0 is a plain copy.
    void refresh_ema(const Mlp& source, double decay);

    Var forward(const Var& x) const;
    Tensor forward(const Tensor& x) const;
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> flat);
    const MlpArch& arch() const { return arch_; }

private:
    MlpArch arch_;
    std::vector<Var> params_;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::uint64_t step = 0;

    static AdamState for_parameters(std::span<const Var> params, AdamConfig config = {});
};

// One Adam update from the gradients currently held by `params`.
// Throws DivergenceError (index = state.step) on a non-finite gradient.
void adam_step(std::span<const Var> params, AdamState& state, double lr);

// Largest |analytic - central difference| / (|central difference| + 1e-12)
// over every parameter entry. `loss` must be deterministic.
double finite_diff_check(const std::function<Var()>& loss, const Mlp& net, double step);

double gradient_norm(std::span<const Var> params);
// Rescales gradients so their joint norm is at most max_norm. Returns the norm before.
double clip_gradients(std::span<const Var> params, double max_norm);

}  // namespace sign::diff
