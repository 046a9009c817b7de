#pragma once

// Reverse-mode autodiff over dense tensors. A Tape is an append-only list of
// nodes; every op appends one node whose inputs already exist, so the node
// order is a topological order and backward() is a single reverse sweep.

#include "leads/autodiff/tensor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace leads::ad {

struct PowerIterState;
class Tape;

enum class OpKind : std::uint8_t {
    Constant,
    Param,
    MatMul,
    Affine,
    Add,
    Sub,
    Mul,
    Scale,
    AddScaled,
    Swish,
    Conv2d,
    Sum,
    Mean,
    SumSq,
    WeightedRowSumSq,
    SpectralNorm,
    Reshape,
};

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    Tape* tape() const { return tape_; }
    std::uint32_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }

private:
    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var constant(Tensor value);
    // Leaf bound to an external parameter. If the parameter requires a
    // gradient, backward() overwrites its grad buffer with d(loss)/d(parameter).
    Var param(Tensor& parameter);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse.
    void backward(Var loss);

    const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
    // Gradient of the last backward() w.r.t. v (zeros if v was not reached).
    std::vector<double> grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

    struct Node {
        OpKind op = OpKind::Constant;
        std::array<std::uint32_t, 3> in{};
        std::uint8_t n_in = 0;
        bool needs_grad = false;
        double scalar = 0.0;
        Tensor value;
        std::vector<double> grad;
        std::vector<double> aux;
        std::vector<double> aux2;
        Tensor* external = nullptr;
    };

    // Appends a node; used by the op builders.
    Var push(Node node);
    Node& node(std::uint32_t id) { return nodes_[id]; }
    const Node& node(std::uint32_t id) const { return nodes_[id]; }

private:
    void backprop_node(std::uint32_t id);
    std::vector<double>& grad_buffer(std::uint32_t id);

    std::vector<Node> nodes_;
};

// ---- op builders ---------------------------------------------------------

// [M, K] x [K, N] -> [M, N]
Var matmul(Var a, Var b);
// x [B, in] * w [in, out] + bias [out] -> [B, out]
Var affine(Var x, Var w, Var bias);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
// elementwise product
Var mul(Var a, Var b);
Var operator*(double c, Var a);
// x + c * y
Var add_scaled(Var x, double c, Var y);
// x * sigmoid(x)
Var swish(Var x);
// Circular-padded, stride-1 cross-correlation.
// x [C_in, H, W] or [B, C_in, H, W]; kernel [C_out, C_in, k, k] (k odd);
// bias [C_out]. Output keeps the spatial size.
Var conv2d_circular(Var x, Var kernel, Var bias);
Var sum(Var x);
Var mean(Var x);
// sum of squares of all entries
Var sumsq(Var x);
// sum_b weights[b] * ||row_b(y)||^2, rows taken along the leading axis
Var weighted_row_sumsq(Var y, std::vector<double> weights);
// Largest singular value of a matrix view of w (leading axis = rows), by
// power iteration with a persistent left vector. The singular vectors are
// treated as constants, so the gradient is u v^T.
Var spectral_norm(Var w, PowerIterState& state, int iters);
Var reshape(Var x, Shape shape);

double swish_value(double x);

} // namespace leads::ad
