#include "sign/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "sign/error.hpp"
#include "sign/schedule.hpp"

namespace sign {

EditSchedule::EditSchedule(std::vector<double> sigmas) : sigmas_(std::move(sigmas)) {
    if (sigmas_.empty()) throw ConfigError("edit schedule needs at least one level");
    for (std::size_t i = 0; i < sigmas_.size(); ++i) {
        if (!(sigmas_[i] > 0.0) || !std::isfinite(sigmas_[i])) {
            throw ConfigError("edit schedule levels must be positive");
        }
        if (i > 0 && !(sigmas_[i] < sigmas_[i - 1])) {
            throw ConfigError("edit schedule levels must be strictly decreasing");
        }
    }
}

EditSchedule EditSchedule::geometric(std::size_t steps, double hi, double lo) {
    if (steps == 0) throw ConfigError("edit schedule needs at least one level");
    if (!(hi > 0.0) || !(lo > 0.0)) throw ConfigError("edit schedule levels must be positive");
    if (steps == 1) return EditSchedule({hi});
    std::vector<double> s(steps);
    const double ratio = std::log(lo / hi) / static_cast<double>(steps - 1);
    for (std::size_t i = 0; i < steps; ++i) s[i] = hi * std::exp(ratio * static_cast<double>(i));
    s.back() = lo;
    return EditSchedule(std::move(s));
}

Tensor sample_single(const MlpNet& net, const Tensor& z) { return net.forward(z); }

RecursiveSample sample_recursive(const MlpNet& net, const Tensor& z, std::size_t max_iters, double tol) {
    if (max_iters == 0) throw ConfigError("recursive sampling needs max_iters >= 1");
    if (!(tol > 0.0)) throw ConfigError("recursive sampling needs tol > 0");
    const std::size_t B = z.rows();
    const std::size_t d = z.cols();
    RecursiveSample out;
    out.x = z;
    out.row_iterations.assign(B, 0);
    std::vector<std::size_t> active(B);
    for (std::size_t r = 0; r < B; ++r) active[r] = r;
    for (std::size_t it = 1; it <= max_iters && !active.empty(); ++it) {
        const Tensor cur = diff::gather_rows(out.x, active);
        const Tensor next = net.forward(cur);
        std::vector<std::size_t> still;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const std::size_t r = active[k];
            double change = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                change = std::max(change, std::abs(next(k, c) - cur(k, c)));
                out.x(r, c) = next(k, c);
            }
            out.row_iterations[r] = it;
            if (!(change < tol)) still.push_back(r);
        }
        active = std::move(still);
    }
    for (std::size_t n : out.row_iterations) out.iterations = std::max(out.iterations, n);
    return out;
}

Mask::Mask(Tensor weights) : w_(std::move(weights)) {
    if (w_.shape().size() == 1) w_ = Tensor({1, w_.size()}, std::vector<double>(w_.values().begin(), w_.values().end()));
    for (double v : w_.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw DataError("mask values must lie in [0, 1]");
    }
}

Mask Mask::ones(std::size_t dim) { return Mask(Tensor({1, dim}, 1.0)); }

Mask Mask::zeros(std::size_t dim) { return Mask(Tensor({1, dim}, 0.0)); }

Mask Mask::checkerboard(std::size_t height, std::size_t width, std::size_t cell) {
    if (cell == 0) throw ConfigError("checkerboard cell size must be at least 1");
    Tensor w({1, height * width});
    for (std::size_t i = 0; i < height; ++i) {
        for (std::size_t j = 0; j < width; ++j) w(0, i * width + j) = ((i / cell + j / cell) % 2 == 1) ? 1.0 : 0.0;
    }
    return Mask(std::move(w));
}

double Mask::at(std::size_t row, std::size_t col) const { return w_.rows() == 1 ? w_(0, col) : w_(row, col); }

Tensor Mask::blend(const Tensor& a, const Tensor& b) const {
    if (!a.same_shape(b) || a.cols() != w_.cols() || (w_.rows() != 1 && w_.rows() != a.rows())) {
        throw DimensionError("mask shape does not match the samples");
    }
    Tensor out = b;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            const double m = at(r, c);
            if (m == 0.0) continue;
            out(r, c) = m == 1.0 ? a(r, c) : m * a(r, c) + (1.0 - m) * b(r, c);
        }
    }
    return out;
}

Tensor sample_multistep_edit(const MlpNet& net, const Tensor& x_in, const Mask& mask, const EditSchedule& edit,
                             Rng& rng) {
    Tensor x = mask.blend(net.forward(x_in), x_in);
    for (double s : edit.sigmas()) {
        Tensor noisy = gaussian({x.rows(), x.cols()}, rng, s);
        for (std::size_t i = 0; i < x.size(); ++i) noisy[i] += x[i];
        x = mask.blend(net.forward(noisy), x);
    }
    return x;
}

}  // namespace sign
