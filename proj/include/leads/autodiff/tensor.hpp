#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace leads::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float64 array with an optional gradient buffer.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Value of a one-element tensor.
    double item() const;

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool on) { requires_grad_ = on; }

    bool has_grad() const { return grad_.has_value(); }
    std::span<double> grad();
    std::span<const double> grad() const;
    // Allocates a zeroed gradient when none exists, otherwise zeroes it.
    void zero_grad();
    void clear_grad() { grad_.reset(); }

    // Same data, different shape of equal size.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double> data_;
    bool requires_grad_ = false;
    std::optional<std::vector<double>> grad_;
};

} // namespace leads::ad
