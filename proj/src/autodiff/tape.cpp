#include "leads/autodiff/tape.hpp"

#include "leads/autodiff/spectral_norm.hpp"
#include "leads/error.hpp"
#include "leads/simd/kernels.hpp"

#include <cmath>
#include <cstring>

namespace leads::ad {

namespace {

const simd::KernelTable& K() { return simd::active(); }

Tape& same_tape(Var a, Var b, const char* op)
{
    if (!a.valid() || !b.valid()) {
        throw ContractError(std::string(op) + ": invalid variable");
    }
    if (a.tape() != b.tape()) {
        throw ContractError(std::string(op) + ": operands live on different tapes");
    }
    return *a.tape();
}

Tape& tape_of(Var a, const char* op)
{
    if (!a.valid()) {
        throw ContractError(std::string(op) + ": invalid variable");
    }
    return *a.tape();
}

void require_same_size(Var a, Var b, const char* op)
{
    if (a.size() != b.size()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

Tape::Node make_node(OpKind op, std::initializer_list<Var> inputs, Tensor value)
{
    Tape::Node n;
    n.op = op;
    for (Var v : inputs) {
        n.in[n.n_in++] = v.id();
    }
    n.value = std::move(value);
    return n;
}

double sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct ConvGeom {
    std::size_t batch, cin, cout, h, w, k, pad;
    bool batched;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& kernel, const Tensor& bias)
{
    ConvGeom g{};
    if (x.rank() == 3) {
        g.batch = 1;
        g.batched = false;
        g.cin = x.dim(0);
        g.h = x.dim(1);
        g.w = x.dim(2);
    } else if (x.rank() == 4) {
        g.batch = x.dim(0);
        g.batched = true;
        g.cin = x.dim(1);
        g.h = x.dim(2);
        g.w = x.dim(3);
    } else {
        throw DimensionError("conv2d: input must be [C, H, W] or [B, C, H, W], got " + shape_str(x.shape()));
    }
    if (kernel.rank() != 4 || kernel.dim(1) != g.cin || kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0) {
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                             shape_str(x.shape()));
    }
    g.cout = kernel.dim(0);
    g.k = kernel.dim(2);
    g.pad = g.k / 2;
    if (bias.size() != g.cout) {
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " for " + std::to_string(g.cout) +
                             " output channels");
    }
    return g;
}

// Column shift with wraparound: returns s in [0, w) such that
// dst[x] = src[(x + s) mod w].
std::size_t wrap(long offset, std::size_t n)
{
    const long m = static_cast<long>(n);
    return static_cast<std::size_t>(((offset % m) + m) % m);
}

// col[(c, i, j)] = plane c shifted by (i - pad, j - pad) with periodic wrap.
void im2col_periodic(const double* x, const ConvGeom& g, double* col)
{
    const std::size_t hw = g.h * g.w;
    for (std::size_t c = 0; c < g.cin; ++c) {
        const double* plane = x + c * hw;
        for (std::size_t i = 0; i < g.k; ++i) {
            for (std::size_t j = 0; j < g.k; ++j) {
                double* dst = col + ((c * g.k + i) * g.k + j) * hw;
                const std::size_t s = wrap(static_cast<long>(j) - static_cast<long>(g.pad), g.w);
                for (std::size_t y = 0; y < g.h; ++y) {
                    const std::size_t src_row = wrap(static_cast<long>(y + i) - static_cast<long>(g.pad), g.h);
                    const double* src = plane + src_row * g.w;
                    double* d = dst + y * g.w;
                    std::memcpy(d, src + s, (g.w - s) * sizeof(double));
                    std::memcpy(d + (g.w - s), src, s * sizeof(double));
                }
            }
        }
    }
}

// Adjoint of im2col_periodic: dx += scatter(dcol).
void col2im_periodic_acc(const double* dcol, const ConvGeom& g, double* dx)
{
    const std::size_t hw = g.h * g.w;
    for (std::size_t c = 0; c < g.cin; ++c) {
        double* plane = dx + c * hw;
        for (std::size_t i = 0; i < g.k; ++i) {
            for (std::size_t j = 0; j < g.k; ++j) {
                const double* src_col = dcol + ((c * g.k + i) * g.k + j) * hw;
                const std::size_t s = wrap(static_cast<long>(j) - static_cast<long>(g.pad), g.w);
                for (std::size_t y = 0; y < g.h; ++y) {
                    const std::size_t row = wrap(static_cast<long>(y + i) - static_cast<long>(g.pad), g.h);
                    double* d = plane + row * g.w;
                    const double* sc = src_col + y * g.w;
                    K().axpy(g.w - s, 1.0, sc, d + s);
                    K().axpy(s, 1.0, sc + (g.w - s), d);
                }
            }
        }
    }
}

} // namespace

const Tensor& Var::value() const
{
    if (tape_ == nullptr) {
        throw ContractError("value: invalid variable");
    }
    return tape_->value(*this);
}

double swish_value(double x) { return x * sigmoid(x); }

Var Tape::push(Node node)
{
    if (node.op != OpKind::Param && node.op != OpKind::Constant) {
        for (std::uint8_t i = 0; i < node.n_in; ++i) {
            node.needs_grad = node.needs_grad || nodes_[node.in[i]].needs_grad;
        }
    }
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value)
{
    Node n;
    n.op = OpKind::Constant;
    n.value = std::move(value);
    n.value.clear_grad();
    n.value.set_requires_grad(false);
    return push(std::move(n));
}

Var Tape::param(Tensor& parameter)
{
    Node n;
    n.op = OpKind::Param;
    n.value = Tensor(parameter.shape(), std::vector<double>(parameter.data().begin(), parameter.data().end()));
    n.external = &parameter;
    n.needs_grad = parameter.requires_grad();
    return push(std::move(n));
}

std::vector<double>& Tape::grad_buffer(std::uint32_t id)
{
    Node& n = nodes_[id];
    if (n.grad.empty()) {
        n.grad.assign(n.value.size(), 0.0);
    }
    return n.grad;
}

std::vector<double> Tape::grad(Var v) const
{
    const Node& n = nodes_.at(v.id());
    if (n.grad.empty()) {
        return std::vector<double>(n.value.size(), 0.0);
    }
    return n.grad;
}

void Tape::backward(Var loss)
{
    if (loss.tape() != this) {
        throw ContractError("backward: loss is not recorded on this tape");
    }
    if (value(loss).size() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " + shape_str(value(loss).shape()));
    }
    for (auto& n : nodes_) {
        n.grad.clear();
        if (n.op == OpKind::Param && n.external != nullptr && n.external->requires_grad()) {
            n.external->zero_grad();
        }
    }
    grad_buffer(loss.id())[0] = 1.0;
    for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
        if (nodes_[id].needs_grad && !nodes_[id].grad.empty()) {
            backprop_node(id);
        }
    }
}

void Tape::backprop_node(std::uint32_t id)
{
    // Reference into nodes_ is stable here: backward never appends.
    Node& n = nodes_[id];
    const std::vector<double>& g = n.grad;
    auto needs = [&](int k) { return nodes_[n.in[k]].needs_grad; };
    auto in_value = [&](int k) -> const Tensor& { return nodes_[n.in[k]].value; };

    switch (n.op) {
    case OpKind::Constant:
        break;
    case OpKind::Param: {
        Tensor* p = n.external;
        if (p != nullptr && p->requires_grad()) {
            if (!p->has_grad()) {
                p->zero_grad();
            }
            auto pg = p->grad();
            K().axpy(pg.size(), 1.0, g.data(), pg.data());
        }
        break;
    }
    case OpKind::MatMul:
    case OpKind::Affine: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        const std::size_t M = a.dim(0), Kd = a.dim(1), N = b.dim(1);
        if (needs(0)) {
            K().gemm_nt(M, N, Kd, g.data(), b.data().data(), grad_buffer(n.in[0]).data());
        }
        if (needs(1)) {
            K().gemm_tn(M, Kd, N, a.data().data(), g.data(), grad_buffer(n.in[1]).data());
        }
        if (n.op == OpKind::Affine && needs(2)) {
            auto& gbias = grad_buffer(n.in[2]);
            for (std::size_t i = 0; i < M; ++i) {
                K().axpy(N, 1.0, g.data() + i * N, gbias.data());
            }
        }
        break;
    }
    case OpKind::Add:
    case OpKind::Sub: {
        if (needs(0)) {
            K().axpy(g.size(), 1.0, g.data(), grad_buffer(n.in[0]).data());
        }
        if (needs(1)) {
            K().axpy(g.size(), n.op == OpKind::Add ? 1.0 : -1.0, g.data(), grad_buffer(n.in[1]).data());
        }
        break;
    }
    case OpKind::Mul: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        if (needs(0)) {
            K().mul_acc(g.size(), g.data(), b.data().data(), grad_buffer(n.in[0]).data());
        }
        if (needs(1)) {
            K().mul_acc(g.size(), g.data(), a.data().data(), grad_buffer(n.in[1]).data());
        }
        break;
    }
    case OpKind::Scale: {
        if (needs(0)) {
            K().axpy(g.size(), n.scalar, g.data(), grad_buffer(n.in[0]).data());
        }
        break;
    }
    case OpKind::AddScaled: {
        if (needs(0)) {
            K().axpy(g.size(), 1.0, g.data(), grad_buffer(n.in[0]).data());
        }
        if (needs(1)) {
            K().axpy(g.size(), n.scalar, g.data(), grad_buffer(n.in[1]).data());
        }
        break;
    }
    case OpKind::Swish: {
        if (needs(0)) {
            // aux holds d swish / dx at the forward input
            K().mul_acc(g.size(), g.data(), n.aux.data(), grad_buffer(n.in[0]).data());
        }
        break;
    }
    case OpKind::Conv2d: {
        const Tensor& x = in_value(0);
        const Tensor& kernel = in_value(1);
        const ConvGeom geo = conv_geometry(x, kernel, in_value(2));
        const std::size_t hw = geo.h * geo.w;
        const std::size_t q_count = geo.cin * geo.k * geo.k;
        std::vector<double> col(q_count * hw);
        std::vector<double> dcol;
        if (needs(0)) {
            dcol.resize(q_count * hw);
        }
        for (std::size_t b = 0; b < geo.batch; ++b) {
            const double* xb = x.data().data() + b * geo.cin * hw;
            const double* gb = g.data() + b * geo.cout * hw;
            if (needs(1)) {
                im2col_periodic(xb, geo, col.data());
                K().gemm_nt(geo.cout, hw, q_count, gb, col.data(), grad_buffer(n.in[1]).data());
            }
            if (needs(2)) {
                auto& gbias = grad_buffer(n.in[2]);
                for (std::size_t o = 0; o < geo.cout; ++o) {
                    double s = 0.0;
                    for (std::size_t p = 0; p < hw; ++p) {
                        s += gb[o * hw + p];
                    }
                    gbias[o] += s;
                }
            }
            if (needs(0)) {
                std::fill(dcol.begin(), dcol.end(), 0.0);
                K().gemm_tn(geo.cout, q_count, hw, kernel.data().data(), gb, dcol.data());
                auto& gx = grad_buffer(n.in[0]);
                col2im_periodic_acc(dcol.data(), geo, gx.data() + b * geo.cin * hw);
            }
        }
        break;
    }
    case OpKind::Sum:
    case OpKind::Mean: {
        if (needs(0)) {
            auto& gx = grad_buffer(n.in[0]);
            const double s = n.op == OpKind::Sum ? g[0] : g[0] / static_cast<double>(gx.size());
            for (auto& e : gx) {
                e += s;
            }
        }
        break;
    }
    case OpKind::SumSq: {
        if (needs(0)) {
            const Tensor& x = in_value(0);
            K().axpy(x.size(), 2.0 * g[0], x.data().data(), grad_buffer(n.in[0]).data());
        }
        break;
    }
    case OpKind::WeightedRowSumSq: {
        if (needs(0)) {
            const Tensor& y = in_value(0);
            const std::size_t rows = n.aux.size();
            const std::size_t cols = y.size() / rows;
            auto& gy = grad_buffer(n.in[0]);
            for (std::size_t r = 0; r < rows; ++r) {
                K().axpy(cols, 2.0 * g[0] * n.aux[r], y.data().data() + r * cols, gy.data() + r * cols);
            }
        }
        break;
    }
    case OpKind::SpectralNorm: {
        if (needs(0)) {
            const std::size_t rows = n.aux.size();
            const std::size_t cols = n.aux2.size();
            auto& gw = grad_buffer(n.in[0]);
            for (std::size_t r = 0; r < rows; ++r) {
                K().axpy(cols, g[0] * n.aux[r], n.aux2.data(), gw.data() + r * cols);
            }
        }
        break;
    }
    case OpKind::Reshape: {
        if (needs(0)) {
            K().axpy(g.size(), 1.0, g.data(), grad_buffer(n.in[0]).data());
        }
        break;
    }
    }
}

// ---- forward builders ----------------------------------------------------

Var matmul(Var a, Var b)
{
    Tape& t = same_tape(a, b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
        throw DimensionError("matmul: shape mismatch " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
    }
    const std::size_t M = A.dim(0), Kd = A.dim(1), N = B.dim(1);
    Tensor out = Tensor::zeros({M, N});
    K().gemm_nn(M, Kd, N, A.data().data(), B.data().data(), out.data().data());
    return t.push(make_node(OpKind::MatMul, {a, b}, std::move(out)));
}

Var affine(Var x, Var w, Var bias)
{
    Tape& t = same_tape(x, w, "affine");
    same_tape(x, bias, "affine");
    const Tensor& X = x.value();
    const Tensor& W = w.value();
    const Tensor& B = bias.value();
    if (X.rank() != 2 || W.rank() != 2 || X.dim(1) != W.dim(0) || B.size() != W.dim(1)) {
        throw DimensionError("affine: shape mismatch x " + shape_str(X.shape()) + ", w " + shape_str(W.shape()) +
                             ", bias " + shape_str(B.shape()));
    }
    const std::size_t M = X.dim(0), Kd = X.dim(1), N = W.dim(1);
    Tensor out = Tensor::zeros({M, N});
    for (std::size_t i = 0; i < M; ++i) {
        std::copy(B.data().begin(), B.data().end(), out.data().data() + i * N);
    }
    K().gemm_nn(M, Kd, N, X.data().data(), W.data().data(), out.data().data());
    return t.push(make_node(OpKind::Affine, {x, w, bias}, std::move(out)));
}

Var operator+(Var a, Var b)
{
    Tape& t = same_tape(a, b, "add");
    require_same_size(a, b, "add");
    Tensor out = a.value();
    K().axpy(out.size(), 1.0, b.value().data().data(), out.data().data());
    return t.push(make_node(OpKind::Add, {a, b}, std::move(out)));
}

Var operator-(Var a, Var b)
{
    Tape& t = same_tape(a, b, "sub");
    require_same_size(a, b, "sub");
    Tensor out = a.value();
    K().axpy(out.size(), -1.0, b.value().data().data(), out.data().data());
    return t.push(make_node(OpKind::Sub, {a, b}, std::move(out)));
}

Var mul(Var a, Var b)
{
    Tape& t = same_tape(a, b, "mul");
    require_same_size(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    K().mul_acc(out.size(), a.value().data().data(), b.value().data().data(), out.data().data());
    return t.push(make_node(OpKind::Mul, {a, b}, std::move(out)));
}

Var operator*(double c, Var a)
{
    Tape& t = tape_of(a, "scale");
    Tensor out = Tensor::zeros(a.shape());
    K().axpy(out.size(), c, a.value().data().data(), out.data().data());
    auto n = make_node(OpKind::Scale, {a}, std::move(out));
    n.scalar = c;
    return t.push(std::move(n));
}

Var add_scaled(Var x, double c, Var y)
{
    Tape& t = same_tape(x, y, "add_scaled");
    require_same_size(x, y, "add_scaled");
    Tensor out = x.value();
    K().axpy(out.size(), c, y.value().data().data(), out.data().data());
    auto n = make_node(OpKind::AddScaled, {x, y}, std::move(out));
    n.scalar = c;
    return t.push(std::move(n));
}

Var swish(Var x)
{
    Tape& t = tape_of(x, "swish");
    const Tensor& X = x.value();
    Tensor out = Tensor::zeros(X.shape());
    std::vector<double> deriv(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double s = sigmoid(X[i]);
        out[i] = X[i] * s;
        deriv[i] = s * (1.0 + X[i] * (1.0 - s));
    }
    auto n = make_node(OpKind::Swish, {x}, std::move(out));
    n.aux = std::move(deriv);
    return t.push(std::move(n));
}

Var conv2d_circular(Var x, Var kernel, Var bias)
{
    Tape& t = same_tape(x, kernel, "conv2d");
    same_tape(x, bias, "conv2d");
    const Tensor& X = x.value();
    const Tensor& Kt = kernel.value();
    const ConvGeom geo = conv_geometry(X, Kt, bias.value());
    const std::size_t hw = geo.h * geo.w;
    const std::size_t q_count = geo.cin * geo.k * geo.k;

    Shape out_shape = geo.batched ? Shape{geo.batch, geo.cout, geo.h, geo.w} : Shape{geo.cout, geo.h, geo.w};
    Tensor out = Tensor::zeros(out_shape);
    std::vector<double> col(q_count * hw);
    for (std::size_t b = 0; b < geo.batch; ++b) {
        im2col_periodic(X.data().data() + b * geo.cin * hw, geo, col.data());
        double* ob = out.data().data() + b * geo.cout * hw;
        for (std::size_t o = 0; o < geo.cout; ++o) {
            double* plane = ob + o * hw;
            std::fill(plane, plane + hw, bias.value()[o]);
        }
        K().gemm_nn(geo.cout, q_count, hw, Kt.data().data(), col.data(), ob);
    }
    return t.push(make_node(OpKind::Conv2d, {x, kernel, bias}, std::move(out)));
}

Var sum(Var x)
{
    Tape& t = tape_of(x, "sum");
    double s = 0.0;
    for (double e : x.value().data()) {
        s += e;
    }
    return t.push(make_node(OpKind::Sum, {x}, Tensor::scalar(s)));
}

Var mean(Var x)
{
    Tape& t = tape_of(x, "mean");
    double s = 0.0;
    for (double e : x.value().data()) {
        s += e;
    }
    return t.push(make_node(OpKind::Mean, {x}, Tensor::scalar(s / static_cast<double>(x.size()))));
}

Var sumsq(Var x)
{
    Tape& t = tape_of(x, "sumsq");
    const double s = K().sumsq(x.size(), x.value().data().data());
    return t.push(make_node(OpKind::SumSq, {x}, Tensor::scalar(s)));
}

Var weighted_row_sumsq(Var y, std::vector<double> weights)
{
    Tape& t = tape_of(y, "weighted_row_sumsq");
    const Tensor& Y = y.value();
    if (weights.empty() || Y.size() % weights.size() != 0 || Y.dim(0) != weights.size()) {
        throw DimensionError("weighted_row_sumsq: " + std::to_string(weights.size()) + " weights for shape " +
                             shape_str(Y.shape()));
    }
    const std::size_t cols = Y.size() / weights.size();
    double s = 0.0;
    for (std::size_t r = 0; r < weights.size(); ++r) {
        s += weights[r] * K().sumsq(cols, Y.data().data() + r * cols);
    }
    auto n = make_node(OpKind::WeightedRowSumSq, {y}, Tensor::scalar(s));
    n.aux = std::move(weights);
    return t.push(std::move(n));
}

Var spectral_norm(Var w, PowerIterState& state, int iters)
{
    Tape& t = tape_of(w, "spectral_norm");
    PowerIterResult r = power_iterate(w.value(), state, iters);
    auto n = make_node(OpKind::SpectralNorm, {w}, Tensor::scalar(r.sigma));
    n.aux = std::move(r.u);
    n.aux2 = std::move(r.v);
    return t.push(std::move(n));
}

Var reshape(Var x, Shape shape)
{
    Tape& t = tape_of(x, "reshape");
    return t.push(make_node(OpKind::Reshape, {x}, x.value().reshaped(std::move(shape))));
}

} // namespace leads::ad
