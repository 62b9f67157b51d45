#include "scenetok/tensor.hpp"

#include <cmath>
#include <sstream>

namespace scenetok {

std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    for (std::size_t d : shape_) {
        if (d == 0) throw TensorError("tensor dimension must be positive, got shape " + shape_to_string(shape_));
    }
    data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t d : shape_) {
        if (d == 0) throw TensorError("tensor dimension must be positive, got shape " + shape_to_string(shape_));
    }
    if (data_.size() != shape_size(shape_)) {
        throw TensorError("data length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_to_string(shape_));
    }
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
        throw TensorError("index rank " + std::to_string(idx.size()) + " does not match tensor rank " +
                          std::to_string(shape_.size()));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= shape_[axis]) {
            throw TensorError("index " + std::to_string(i) + " out of bounds for axis " + std::to_string(axis) +
                              " of shape " + shape_to_string(shape_));
        }
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Tensor::require_finite(const char* who) const {
    if (!all_finite()) {
        throw TensorError(std::string(who) + ": tensor contains non-finite entries");
    }
}

}  // namespace scenetok
