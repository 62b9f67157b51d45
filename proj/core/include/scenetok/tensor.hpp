#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace scenetok {

/// Thrown when an operation would produce or accept malformed data
/// (shape mismatch, non-finite entries, bad arguments).
class TensorError : public std::runtime_error {
public:
    explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);

/// Dense row-major array of doubles. Value type: copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);                      // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    template <typename... Ix>
    double& at(Ix... ix) {
        return data_[offset({static_cast<std::size_t>(ix)...})];
    }
    template <typename... Ix>
    double at(Ix... ix) const {
        return data_[offset({static_cast<std::size_t>(ix)...})];
    }

    std::size_t offset(std::initializer_list<std::size_t> idx) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    /// Throws TensorError naming `who` if any entry is NaN or Inf.
    void require_finite(const char* who) const;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_size(const Shape& s);

}  // namespace scenetok
