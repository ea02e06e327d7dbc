#pragma once

#include <cstddef>
#include <vector>

#include "sign/mlp.hpp"
#include "sign/rng.hpp"
#include "sign/tensor.hpp"

namespace sign {

using diff::MlpNet;
using diff::Tensor;

// Strictly decreasing positive injection noise levels sigma_1 > ... > sigma_N.
class EditSchedule {
public:
    explicit EditSchedule(std::vector<double> sigmas);
    // `steps` levels decaying geometrically from hi to lo (both included).
    static EditSchedule geometric(std::size_t steps, double hi, double lo);

    const std::vector<double>& sigmas() const { return sigmas_; }
    std::size_t size() const { return sigmas_.size(); }

private:
    std::vector<double> sigmas_;
};

// f(z).
Tensor sample_single(const MlpNet& net, const Tensor& z);

struct RecursiveSample {
    Tensor x;
    // Applications of f until the row's sup-norm change fell below tol
    // (max_iters when it never did); `iterations` is the largest of them.
    std::vector<std::size_t> row_iterations;
    std::size_t iterations = 0;
};

// x <- f(x) repeated per row until ||x_{k+1} - x_k||_inf < tol or max_iters.
RecursiveSample sample_recursive(const MlpNet& net, const Tensor& z, std::size_t max_iters, double tol);

// Values in [0, 1], one row per sample or a single row shared by all samples.
// 1 marks coordinates the net regenerates, 0 coordinates kept from the input.
class Mask {
public:
    explicit Mask(Tensor weights);
    static Mask ones(std::size_t dim);
    static Mask zeros(std::size_t dim);
    // Alternating cell x cell squares over a height x width image; cells whose
    // (row + col) parity is odd are masked.
    static Mask checkerboard(std::size_t height, std::size_t width, std::size_t cell);

    const Tensor& weights() const { return w_; }
    double at(std::size_t row, std::size_t col) const;
    std::size_t dim() const { return w_.cols(); }
    // m * a + (1 - m) * b per coordinate; binary entries copy exactly.
    Tensor blend(const Tensor& a, const Tensor& b) const;

private:
    Tensor w_;
};

// x <- f(x')*M + x'*(1-M); then for each sigma_i: x <- f(x + sigma_i e)*M + x*(1-M).
Tensor sample_multistep_edit(const MlpNet& net, const Tensor& x_in, const Mask& mask, const EditSchedule& edit,
                             Rng& rng);

}  // namespace sign
