#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sign/tensor.hpp"

namespace sign::diff {

struct Node;

// Differentiable handle: a value plus, when it requires gradients, the record
// of how it was computed. Leaves created with parameter() accumulate
// gradients across backward passes until zero_grad().
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    // Accumulated gradient; a zero tensor of the value's shape if none yet.
    const Tensor& grad() const;
    bool requires_grad() const;
    bool defined() const { return node_ != nullptr; }

    void zero_grad() const;
    // Reverse pass from a scalar. Throws ContractError for non-scalars.
    void backward() const;
    // Reverse pass seeded with an explicit upstream gradient of the value's shape.
    void backward(const Tensor& seed) const;

    // In-place access for optimizers; only valid on leaves.
    Tensor& mutable_value() const;
    Tensor& mutable_grad() const;

private:
    friend Var make_node(Tensor, std::vector<Var>, std::function<void(Node&)>);
    friend Var parameter(Tensor);
    friend Var constant(Tensor);
    friend struct Node;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool leaf = true;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    // Gradient buffer of a parent, allocated on first use.
    Tensor& parent_grad(std::size_t i);
    const Tensor& parent_value(std::size_t i) const { return parents[i].value(); }
    bool parent_requires_grad(std::size_t i) const { return parents[i].requires_grad(); }
};

Var parameter(Tensor value);
Var constant(Tensor value);

// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};
bool grad_enabled();

enum class Nonlinearity { silu, tanh, sqrt };

// x[B,in] * W[out,in]^T + b[out]
Var affine(const Var& x, const Var& weight, const Var& bias);
Var apply(Nonlinearity kind, const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
// Per-row squared Euclidean norm: [B,d] -> [B].
Var squared_norm_rows(const Var& x);
// Per-row sum: [B,d] -> [B].
Var sum_rows(const Var& x);
// Mean of all elements -> scalar.
Var mean(const Var& x);
// out[b] = sum_k softmax(logits[b,:])_k * values[k,:]; logits [B,K], values [K,d].
Var softmax_weighted_sum(const Var& logits, const Var& values);
// x + sigma[b] * noise[b,:]; the noise and sigmas are constants of the graph.
Var add_noise(const Var& x, std::span<const double> sigma, const Tensor& noise);
Var stop_gradient(const Var& x);

}  // namespace sign::diff
