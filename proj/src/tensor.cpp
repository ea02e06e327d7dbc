#include "sign/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "sign/error.hpp"

namespace sign::diff {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (data_.size() != product(shape_)) {
        throw DimensionError("tensor of shape " + shape_string() + " given " +
                             std::to_string(data_.size()) + " values");
    }
}

std::size_t Tensor::cols() const {
    if (shape_.size() <= 1) return shape_.empty() ? 1 : 1;
    std::size_t c = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
    return c;
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw DimensionError("item() on tensor of shape " + shape_string());
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> index) {
    const std::size_t d = src.cols();
    Tensor out({index.size(), d});
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= src.rows()) throw RangeError("gather_rows: row index out of range");
        auto from = src.row(index[i]);
        std::copy(from.begin(), from.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace sign::diff
