#include "sign/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <utility>
#include <cmath>
#include <unordered_set>

#include "sign/error.hpp"

namespace sign::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;

thread_local bool g_grad_enabled = true;

constexpr double kSqrtFloor = 1e-12;

ConstMatMap as_matrix(const Tensor& t) { return {t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }
MatMap as_matrix(Tensor& t) { return {t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_string() +
                             " vs " + b.value().shape_string());
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor& Node::parent_grad(std::size_t i) {
    Node& p = *parents[i].node_;
    if (p.grad.size() != p.value.size()) p.grad = Tensor::zeros_like(p.value);
    return p.grad;
}

const Tensor& Var::value() const { return node_->value; }

const Tensor& Var::grad() const {
    if (node_->grad.size() != node_->value.size()) node_->grad = Tensor::zeros_like(node_->value);
    return node_->grad;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

void Var::zero_grad() const {
    if (node_->grad.size() == node_->value.size()) {
        std::fill(node_->grad.values().begin(), node_->grad.values().end(), 0.0);
    }
}

Tensor& Var::mutable_value() const {
    if (!node_->leaf) throw ContractError("mutable_value() on a non-leaf tensor");
    return node_->value;
}

Tensor& Var::mutable_grad() const {
    grad();
    return node_->grad;
}

void Var::backward() const {
    if (!value().is_scalar()) {
        throw ContractError("backward() needs a scalar loss, got shape " + value().shape_string());
    }
    backward(Tensor(value().shape(), 1.0));
}

void Var::backward(const Tensor& seed) const {
    if (!seed.same_shape(value())) {
        throw DimensionError("backward seed shape " + seed.shape_string() + " != value shape " +
                             value().shape_string());
    }
    if (!node_->requires_grad) return;

    // Topological order by iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].node_.get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior buffers restart from zero each pass; leaves accumulate.
    for (Node* n : order) {
        if (!n->leaf) n->grad = Tensor::zeros_like(n->value);
    }
    Tensor& root_grad = node_->grad.size() == node_->value.size()
                            ? node_->grad
                            : (node_->grad = Tensor::zeros_like(node_->value));
    for (std::size_t i = 0; i < seed.size(); ++i) root_grad[i] += seed[i];

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (!(*it)->leaf && (*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

Var parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                     [](const Var& p) { return p.requires_grad(); });
    if (needs) {
        node->requires_grad = true;
        node->leaf = false;
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(node));
}

Var affine(const Var& x, const Var& weight, const Var& bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    const Tensor& bv = bias.value();
    if (wv.shape().size() != 2 || xv.cols() != wv.cols() || bv.size() != wv.rows()) {
        throw DimensionError("affine: input " + xv.shape_string() + " weight " + wv.shape_string() +
                             " bias " + bv.shape_string());
    }
    Tensor out({xv.rows(), wv.rows()});
    auto y = as_matrix(out);
    y.noalias() = as_matrix(xv) * as_matrix(wv).transpose();
    y.rowwise() += ConstVecMap(bv.data(), Eigen::Index(bv.size()));
    return make_node(std::move(out), {x, weight, bias}, [](Node& n) {
        auto dy = as_matrix(std::as_const(n.grad));
        if (n.parent_requires_grad(0)) {
            as_matrix(n.parent_grad(0)).noalias() += dy * as_matrix(n.parent_value(1));
        }
        if (n.parent_requires_grad(1)) {
            as_matrix(n.parent_grad(1)).noalias() += dy.transpose() * as_matrix(n.parent_value(0));
        }
        if (n.parent_requires_grad(2)) {
            Tensor& db = n.parent_grad(2);
            VecMap(db.data(), Eigen::Index(db.size())) += dy.colwise().sum();
        }
    });
}

Var apply(Nonlinearity kind, const Var& x) {
    const Tensor& xv = x.value();
    Tensor out = Tensor::zeros_like(xv);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        switch (kind) {
            case Nonlinearity::silu: out[i] = v * sigmoid(v); break;
            case Nonlinearity::tanh: out[i] = std::tanh(v); break;
            case Nonlinearity::sqrt: out[i] = std::sqrt(std::max(v, 0.0) + kSqrtFloor); break;
        }
    }
    return make_node(std::move(out), {x}, [kind](Node& n) {
        if (!n.parent_requires_grad(0)) return;
        const Tensor& xv = n.parent_value(0);
        Tensor& dx = n.parent_grad(0);
        for (std::size_t i = 0; i < xv.size(); ++i) {
            double d = 0.0;
            switch (kind) {
                case Nonlinearity::silu: {
                    const double s = sigmoid(xv[i]);
                    d = s * (1.0 + xv[i] * (1.0 - s));
                    break;
                }
                case Nonlinearity::tanh: d = 1.0 - n.value[i] * n.value[i]; break;
                case Nonlinearity::sqrt: d = xv[i] > 0.0 ? 0.5 / n.value[i] : 0.0; break;
            }
            dx[i] += d * n.grad[i];
        }
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!n.parent_requires_grad(p)) continue;
            Tensor& g = n.parent_grad(p);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (n.parent_requires_grad(0)) {
            Tensor& g = n.parent_grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (n.parent_requires_grad(1)) {
            Tensor& g = n.parent_grad(1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!n.parent_requires_grad(p)) continue;
            const Tensor& other = n.parent_value(1 - p);
            Tensor& g = n.parent_grad(p);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * other[i];
        }
    });
}

Var scale(const Var& a, double factor) {
    Tensor out = a.value();
    for (double& v : out.values()) v *= factor;
    return make_node(std::move(out), {a}, [factor](Node& n) {
        Tensor& g = n.parent_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * n.grad[i];
    });
}

Var squared_norm_rows(const Var& x) {
    const Tensor& xv = x.value();
    const std::size_t d = xv.cols();
    Tensor out({xv.rows()});
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += xv(r, c) * xv(r, c);
        out[r] = s;
    }
    return make_node(std::move(out), {x}, [](Node& n) {
        const Tensor& xv = n.parent_value(0);
        Tensor& g = n.parent_grad(0);
        const std::size_t d = xv.cols();
        for (std::size_t r = 0; r < xv.rows(); ++r) {
            for (std::size_t c = 0; c < d; ++c) g(r, c) += 2.0 * xv(r, c) * n.grad[r];
        }
    });
}

Var sum_rows(const Var& x) {
    const Tensor& xv = x.value();
    const std::size_t d = xv.cols();
    Tensor out({xv.rows()});
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += xv(r, c);
        out[r] = s;
    }
    return make_node(std::move(out), {x}, [](Node& n) {
        Tensor& g = n.parent_grad(0);
        const std::size_t d = g.cols();
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < d; ++c) g(r, c) += n.grad[r];
        }
    });
}

Var mean(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.size() == 0) throw DimensionError("mean of an empty tensor");
    double s = 0.0;
    for (double v : xv.values()) s += v;
    return make_node(Tensor::scalar(s / double(xv.size())), {x}, [](Node& n) {
        Tensor& g = n.parent_grad(0);
        const double share = n.grad[0] / double(g.size());
        for (double& v : g.values()) v += share;
    });
}

Var softmax_weighted_sum(const Var& logits, const Var& values) {
    const Tensor& lv = logits.value();
    const Tensor& vv = values.value();
    if (lv.cols() != vv.rows()) {
        throw DimensionError("softmax_weighted_sum: logits " + lv.shape_string() + " values " +
                             vv.shape_string());
    }
    const std::size_t batch = lv.rows();
    const std::size_t k = lv.cols();
    const std::size_t d = vv.cols();
    Tensor weights({batch, k});
    for (std::size_t b = 0; b < batch; ++b) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) hi = std::max(hi, lv(b, j));
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += (weights(b, j) = std::exp(lv(b, j) - hi));
        for (std::size_t j = 0; j < k; ++j) weights(b, j) /= z;
    }
    Tensor out({batch, d});
    as_matrix(out).noalias() = as_matrix(weights) * as_matrix(vv);
    return make_node(std::move(out), {logits, values}, [weights = std::move(weights)](Node& n) {
        const Tensor& vv = n.parent_value(1);
        const auto dy = as_matrix(std::as_const(n.grad));
        if (n.parent_requires_grad(1)) {
            as_matrix(n.parent_grad(1)).noalias() += as_matrix(weights).transpose() * dy;
        }
        if (n.parent_requires_grad(0)) {
            // d logit_bk = p_bk * (dy_b . v_k - dy_b . out_b)
            RowMat proj = dy * as_matrix(vv).transpose();
            Tensor& g = n.parent_grad(0);
            for (std::size_t b = 0; b < weights.rows(); ++b) {
                double centre = 0.0;
                for (std::size_t j = 0; j < weights.cols(); ++j) centre += weights(b, j) * proj(b, j);
                for (std::size_t j = 0; j < weights.cols(); ++j) {
                    g(b, j) += weights(b, j) * (proj(b, j) - centre);
                }
            }
        }
    });
}

Var add_noise(const Var& x, std::span<const double> sigma, const Tensor& noise) {
    const Tensor& xv = x.value();
    if (!noise.same_shape(xv) || sigma.size() != xv.rows()) {
        throw DimensionError("add_noise: input " + xv.shape_string() + " noise " + noise.shape_string());
    }
    Tensor out = xv;
    const std::size_t d = xv.cols();
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        for (std::size_t c = 0; c < d; ++c) out(r, c) += sigma[r] * noise(r, c);
    }
    return make_node(std::move(out), {x}, [](Node& n) {
        Tensor& g = n.parent_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Var stop_gradient(const Var& x) { return constant(x.value()); }

}  // namespace sign::diff
