#include "leads/autodiff/tensor.hpp"

#include "leads/error.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace leads::ad {

std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_str(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            s += ", ";
        }
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad)
{
    if (shape_size(shape_) != data_.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape_) + " does not hold " +
                             std::to_string(data_.size()) + " values");
    }
    for (auto d : shape_) {
        if (d == 0) {
            throw DimensionError("tensor: zero-length axis in shape " + shape_str(shape_));
        }
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad)
{
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
{
    return Tensor({rows, cols}, std::move(data));
}

double Tensor::item() const
{
    if (data_.size() != 1) {
        throw ContractError("item: tensor of shape " + shape_str(shape_) + " is not a scalar");
    }
    return data_[0];
}

std::span<double> Tensor::grad()
{
    if (!grad_) {
        throw ContractError("grad: tensor has no gradient");
    }
    return *grad_;
}

std::span<const double> Tensor::grad() const
{
    if (!grad_) {
        throw ContractError("grad: tensor has no gradient");
    }
    return *grad_;
}

void Tensor::zero_grad()
{
    if (grad_) {
        std::fill(grad_->begin(), grad_->end(), 0.0);
    } else {
        grad_.emplace(data_.size(), 0.0);
    }
}

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_size(shape) != data_.size()) {
        throw DimensionError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    Tensor t(std::move(shape), data_, requires_grad_);
    return t;
}

bool Tensor::all_finite() const
{
    for (double x : data_) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

} // namespace leads::ad
