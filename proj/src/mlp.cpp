#include "sign/mlp.hpp"

#include <cmath>
#include <sstream>

#include "sign/error.hpp"

namespace sign::diff {

const char* to_string(Activation a) {
    switch (a) {
        case Activation::silu: return "silu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

Activation parse_activation(const std::string& name) {
    if (name == "silu") return Activation::silu;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + name + "'");
}

std::size_t MlpArch::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) n += widths[i] * widths[i + 1] + widths[i + 1];
    return n;
}

std::string MlpArch::descriptor() const {
    std::string s = "mlp widths=";
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(widths[i]);
    }
    s += " act=";
    s += to_string(activation);
    s += skip ? " skip=1" : " skip=0";
    return s;
}

MlpArch MlpArch::parse(const std::string& descriptor) {
    std::istringstream in(descriptor);
    std::string word;
    in >> word;
    if (word != "mlp") throw FormatError("bad architecture descriptor '" + descriptor + "'", 0);
    MlpArch arch;
    bool have_widths = false;
    while (in >> word) {
        const auto eq = word.find('=');
        if (eq == std::string::npos) throw FormatError("bad architecture field '" + word + "'", 0);
        const std::string key = word.substr(0, eq);
        const std::string value = word.substr(eq + 1);
        if (key == "widths") {
            std::istringstream ws(value);
            std::string tok;
            while (std::getline(ws, tok, ',')) arch.widths.push_back(std::stoul(tok));
            have_widths = true;
        } else if (key == "act") {
            arch.activation = parse_activation(value);
        } else if (key == "skip") {
            arch.skip = value == "1";
        } else {
            throw FormatError("unknown architecture field '" + key + "'", 0);
        }
    }
    if (!have_widths || arch.widths.size() < 2) {
        throw FormatError("architecture descriptor without widths: '" + descriptor + "'", 0);
    }
    return arch;
}

Var mlp_forward(const MlpArch& arch, std::span<const Var> params, const Var& x) {
    if (x.value().cols() != arch.input_width()) {
        throw DimensionError("net expects input width " + std::to_string(arch.input_width()) +
                             ", got batch " + x.value().shape_string());
    }
    const std::size_t layers = arch.widths.size() - 1;
    const Nonlinearity act =
        arch.activation == Activation::silu ? Nonlinearity::silu : Nonlinearity::tanh;
    Var h = x;
    for (std::size_t l = 0; l < layers; ++l) {
        h = affine(h, params[2 * l], params[2 * l + 1]);
        if (l + 1 < layers) h = apply(act, h);
    }
    if (arch.skip) h = add(x, h);
    return h;
}

Mlp::Mlp(MlpArch arch) : arch_(std::move(arch)) {
    if (arch_.widths.size() < 2) throw ConfigError("an MLP needs at least two widths");
    for (std::size_t w : arch_.widths) {
        if (w == 0) throw ConfigError("MLP widths must be positive");
    }
    if (arch_.skip && arch_.input_width() != arch_.output_width()) {
        throw ConfigError("a skip connection needs equal input and output widths");
    }
    for (std::size_t l = 0; l + 1 < arch_.widths.size(); ++l) {
        params_.push_back(parameter(Tensor({arch_.widths[l + 1], arch_.widths[l]})));
        params_.push_back(parameter(Tensor({arch_.widths[l + 1]})));
    }
}

Mlp Mlp::random(MlpArch arch, Rng& rng, bool zero_last) {
    Mlp net(std::move(arch));
    const std::size_t layers = net.arch_.widths.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const double bound = 1.0 / std::sqrt(double(net.arch_.widths[l]));
        const bool zero = zero_last && l + 1 == layers;
        for (std::size_t p = 0; p < 2; ++p) {
            for (double& v : net.params_[2 * l + p].mutable_value().values()) {
                v = zero ? 0.0 : bound * (2.0 * rng.uniform() - 1.0);
            }
        }
    }
    return net;
}

Var Mlp::forward(const Var& x) const { return mlp_forward(arch_, params_, x); }

Tensor Mlp::forward(const Tensor& x) const {
    NoGradGuard guard;
    return forward(constant(x)).value();
}

void Mlp::zero_grad() const {
    for (const Var& p : params_) p.zero_grad();
}

std::vector<double> Mlp::flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const Var& p : params_) flat.insert(flat.end(), p.value().values().begin(), p.value().values().end());
    return flat;
}

void Mlp::set_flat_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
        throw DimensionError("expected " + std::to_string(parameter_count()) + " parameters, got " +
                             std::to_string(flat.size()));
    }
    std::size_t at = 0;
    for (const Var& p : params_) {
        auto dst = p.mutable_value().values();
        std::copy(flat.begin() + at, flat.begin() + at + dst.size(), dst.begin());
        at += dst.size();
    }
}

Mlp Mlp::clone() const {
    Mlp copy(arch_);
    copy.set_flat_parameters(flat_parameters());
    return copy;
}

MlpNet::MlpNet(Mlp mlp) : Mlp(std::move(mlp)) {
    if (arch().input_width() != arch().output_width()) {
        throw ConfigError("a generator must map the data space to itself (widths " +
                          arch().descriptor() + ")");
    }
}

MlpNet MlpNet::random(MlpArch arch, Rng& rng, bool identity_init) {
    if (identity_init) arch.skip = true;
    return MlpNet(Mlp::random(std::move(arch), rng, identity_init));
}

FrozenView::FrozenView(const Mlp& source) { refresh(source); }

void FrozenView::refresh(const Mlp& source) {
    arch_ = source.arch();
    params_.clear();
    for (const Var& p : source.parameters()) params_.push_back(constant(p.value()));
}

void FrozenView::refresh_ema(const Mlp& source, double decay) {
    if (params_.empty() || !(arch_ == source.arch())) {
        refresh(source);
        return;
    }
    auto src = source.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor next = params_[i].value();
        const Tensor& s = src[i].value();
        for (std::size_t k = 0; k < next.size(); ++k) next[k] = decay * next[k] + (1.0 - decay) * s[k];
        params_[i] = constant(std::move(next));
    }
}

Var FrozenView::forward(const Var& x) const { return mlp_forward(arch_, params_, x); }

Tensor FrozenView::forward(const Tensor& x) const {
    NoGradGuard guard;
    return forward(constant(x)).value();
}

std::vector<double> FrozenView::flat_parameters() const {
    std::vector<double> flat;
    for (const Var& p : params_) flat.insert(flat.end(), p.value().values().begin(), p.value().values().end());
    return flat;
}

void FrozenView::set_flat_parameters(std::span<const double> flat) {
    if (flat.size() != arch_.parameter_count()) {
        throw DimensionError("frozen view: expected " + std::to_string(arch_.parameter_count()) +
                             " parameters, got " + std::to_string(flat.size()));
    }
    std::size_t at = 0;
    for (Var& p : params_) {
        Tensor t = p.value();
        std::copy(flat.begin() + at, flat.begin() + at + t.size(), t.values().begin());
        at += t.size();
        p = constant(std::move(t));
    }
}

AdamState AdamState::for_parameters(std::span<const Var> params, AdamConfig config) {
    AdamState state;
    state.config = config;
    for (const Var& p : params) {
        state.first_moment.push_back(Tensor::zeros_like(p.value()));
        state.second_moment.push_back(Tensor::zeros_like(p.value()));
    }
    return state;
}

void adam_step(std::span<const Var> params, AdamState& state, double lr) {
    if (params.size() != state.first_moment.size()) {
        throw DimensionError("adam state tracks " + std::to_string(state.first_moment.size()) +
                             " tensors, net has " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!state.first_moment[i].same_shape(params[i].value())) {
            throw DimensionError("adam moment shape mismatch at tensor " + std::to_string(i));
        }
        if (!params[i].grad().all_finite()) {
            throw DivergenceError("non-finite gradient at optimizer step " + std::to_string(state.step),
                                  state.step);
        }
    }
    state.step += 1;
    const auto& c = state.config;
    const double t = double(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& value = params[i].mutable_value();
        const Tensor& g = params[i].grad();
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        for (std::size_t k = 0; k < value.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            value[k] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

double finite_diff_check(const std::function<Var()>& loss, const Mlp& net, double step) {
    net.zero_grad();
    loss().backward();
    std::vector<Tensor> analytic;
    for (const Var& p : net.parameters()) analytic.push_back(p.grad());
    net.zero_grad();

    double worst = 0.0;
    NoGradGuard guard;
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& value = params[i].mutable_value();
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double saved = value[k];
            value[k] = saved + step;
            const double up = loss().value().item();
            value[k] = saved - step;
            const double down = loss().value().item();
            value[k] = saved;
            const double central = (up - down) / (2.0 * step);
            const double err = std::abs(analytic[i][k] - central) / (std::abs(central) + 1e-12);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

double gradient_norm(std::span<const Var> params) {
    double s = 0.0;
    for (const Var& p : params) {
        for (double g : p.grad().values()) s += g * g;
    }
    return std::sqrt(s);
}

double clip_gradients(std::span<const Var> params, double max_norm) {
    const double norm = gradient_norm(params);
    if (norm > max_norm && norm > 0.0) {
        const double factor = max_norm / norm;
        for (const Var& p : params) {
            for (double& g : p.mutable_grad().values()) g *= factor;
        }
    }
    return norm;
}

}  // namespace sign::diff
