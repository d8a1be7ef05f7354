#include "plab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_set>

#include "plab/error.hpp"

namespace plab {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

template <std::floating_point Real>
std::span<Real> GradInputs<Real>::grad(std::size_t i) {
    auto& in = *node_.inputs[i];
    if (in.grad.empty()) in.grad.assign(in.data.size(), Real{0});
    return in.grad;
}

namespace {

void check_shape(const Shape& shape, std::size_t n) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (auto d : shape) {
        if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_str(shape));
    }
    if (shape_numel(shape) != n) {
        throw DimensionError("shape " + shape_str(shape) + " does not hold " + std::to_string(n) +
                             " values");
    }
}

template <typename Real>
void require_matrix(const Tensor<Real>& t, std::string_view op) {
    if (t.dim() != 2) {
        throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
    }
}

enum class Broadcast { kSame, kRows };

template <typename Real>
Broadcast broadcast_kind(const Tensor<Real>& a, const Tensor<Real>& b, std::string_view op) {
    if (a.shape() == b.shape()) return Broadcast::kSame;
    if (a.dim() == 2 && b.dim() == 1 && b.shape()[0] == a.shape()[1]) return Broadcast::kRows;
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

template <std::floating_point Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data, bool requires_grad) {
    check_shape(shape, data.size());
    node_ = std::make_shared<detail::Node<Real>>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape) {
    return full(std::move(shape), Real{0});
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::ones(Shape shape) {
    return full(std::move(shape), Real{1});
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<Real>(n, value));
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
    return Tensor({1}, {value});
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::vector(std::vector<Real> values) {
    const auto n = values.size();
    return Tensor({n}, std::move(values));
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::matrix(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Real> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(values));
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::matrix(std::size_t rows, std::size_t cols, std::vector<Real> values) {
    return Tensor({rows, cols}, std::move(values));
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::from_op(std::string_view op, Shape shape, std::vector<Real> data,
                                   const std::vector<Tensor>& inputs, BackwardFn<Real> backward) {
    check_shape(shape, data.size());
    auto node = std::make_shared<detail::Node<Real>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
        node->requires_grad = true;
        node->backward = std::move(backward);
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.node_);
    }
    return Tensor(std::move(node));
}

template <std::floating_point Real>
const detail::Node<Real>& Tensor<Real>::node() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return *node_;
}

template <std::floating_point Real>
const Shape& Tensor<Real>::shape() const {
    return node().shape;
}

template <std::floating_point Real>
std::size_t Tensor<Real>::numel() const {
    return node().data.size();
}

template <std::floating_point Real>
std::size_t Tensor<Real>::rows() const {
    return dim() == 2 ? shape()[0] : 1;
}

template <std::floating_point Real>
std::size_t Tensor<Real>::cols() const {
    return shape().back();
}

template <std::floating_point Real>
std::span<const Real> Tensor<Real>::data() const {
    return node().data;
}

template <std::floating_point Real>
std::span<Real> Tensor<Real>::mutable_data() {
    if (!is_leaf()) throw ContractError("only leaf tensors may be written in place");
    return node_->data;
}

template <std::floating_point Real>
Real Tensor<Real>::item() const {
    if (numel() != 1) {
        throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return node().data[0];
}

template <std::floating_point Real>
bool Tensor<Real>::requires_grad() const {
    return node().requires_grad;
}

template <std::floating_point Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool value) {
    if (!is_leaf()) throw ContractError("requires_grad can only be set on leaves");
    node_->requires_grad = value;
    if (!value) node_->grad.clear();
    return *this;
}

template <std::floating_point Real>
bool Tensor<Real>::has_grad() const {
    return !node().grad.empty();
}

template <std::floating_point Real>
std::span<const Real> Tensor<Real>::grad() const {
    return node().grad;
}

template <std::floating_point Real>
void Tensor<Real>::zero_grad() {
    if (node().requires_grad) node_->grad.assign(node_->data.size(), Real{0});
}

template <std::floating_point Real>
void Tensor<Real>::clear_grad() {
    node();
    node_->grad.clear();
}

template <std::floating_point Real>
bool Tensor<Real>::is_leaf() const {
    return !node().backward;
}

template <std::floating_point Real>
std::string_view Tensor<Real>::op() const {
    return node().op;
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::clone() const {
    return Tensor(shape(), node().data);
}

template <std::floating_point Real>
Tensor<Real> Tensor<Real>::clone_with_grad(bool requires_grad) const {
    return Tensor(shape(), node().data, requires_grad);
}

template <std::floating_point Real>
void Tensor<Real>::backward() const {
    const auto& root = node();
    if (root.data.size() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " + shape_str(root.shape));
    }
    if (!root.requires_grad) return;

    // Iterative post-order DFS over nodes that take part in differentiation.
    using NodePtr = detail::Node<Real>*;
    std::vector<NodePtr> order;
    std::unordered_set<NodePtr> visited;
    std::vector<std::pair<NodePtr, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            NodePtr child = n->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    auto& seed = node_->grad;
    if (seed.empty()) seed.assign(1, Real{0});
    seed[0] += Real{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodePtr n = *it;
        if (!n->backward || n->grad.empty()) continue;
        GradInputs<Real> inputs(*n);
        n->backward(n->data, n->grad, inputs);
    }
    // The graph is single-use: drop the recorded edges.
    for (NodePtr n : order) {
        if (n->backward) {
            n->backward = nullptr;
            n->inputs.clear();
            n->requires_grad = false;
            n->grad.clear();
        }
    }
}

// ---------------------------------------------------------------------------
// Primitives

template <std::floating_point Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    std::vector<Real> out(m * n, Real{0});
    const auto A = a.data();
    const auto B = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        Real* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Real aip = A[i * k + p];
            if (aip == Real{0}) continue;
            const Real* brow = B.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
    return Tensor<Real>::from_op(
        "matmul", {m, n}, std::move(out), {a, b},
        [m, k, n](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            const auto A = in.value(0);
            const auto B = in.value(1);
            if (in.needs_grad(0)) {
                auto dA = in.grad(0);  // dA = dC B^T
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        Real acc = 0;
                        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
                        dA[i * k + p] += acc;
                    }
                }
            }
            if (in.needs_grad(1)) {
                auto dB = in.grad(1);  // dB = A^T dC
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const Real aip = A[i * k + p];
                        if (aip == Real{0}) continue;
                        for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * g[i * n + j];
                    }
                }
            }
        });
}

template <std::floating_point Real>
Tensor<Real> ew_mul(const Tensor<Real>& a, const Tensor<Real>& b) {
    broadcast_kind(a, b, "ew_mul");
    const std::size_t n = a.numel();
    const std::size_t width = b.numel();
    const auto A = a.data();
    const auto B = b.data();
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = A[i] * B[i % width];
    return Tensor<Real>::from_op(
        "ew_mul", a.shape(), std::move(out), {a, b},
        [n, width](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            const auto A = in.value(0);
            const auto B = in.value(1);
            if (in.needs_grad(0)) {
                auto dA = in.grad(0);
                for (std::size_t i = 0; i < n; ++i) dA[i] += g[i] * B[i % width];
            }
            if (in.needs_grad(1)) {
                auto dB = in.grad(1);
                for (std::size_t i = 0; i < n; ++i) dB[i % width] += g[i] * A[i];
            }
        });
}

template <std::floating_point Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    broadcast_kind(a, b, "add");
    const std::size_t n = a.numel();
    const std::size_t width = b.numel();
    const auto A = a.data();
    const auto B = b.data();
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = A[i] + B[i % width];
    return Tensor<Real>::from_op(
        "add", a.shape(), std::move(out), {a, b},
        [n, width](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            if (in.needs_grad(0)) {
                auto dA = in.grad(0);
                for (std::size_t i = 0; i < n; ++i) dA[i] += g[i];
            }
            if (in.needs_grad(1)) {
                auto dB = in.grad(1);
                for (std::size_t i = 0; i < n; ++i) dB[i % width] += g[i];
            }
        });
}

template <std::floating_point Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("sub: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::size_t n = a.numel();
    const auto A = a.data();
    const auto B = b.data();
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = A[i] - B[i];
    return Tensor<Real>::from_op(
        "sub", a.shape(), std::move(out), {a, b},
        [n](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            if (in.needs_grad(0)) {
                auto dA = in.grad(0);
                for (std::size_t i = 0; i < n; ++i) dA[i] += g[i];
            }
            if (in.needs_grad(1)) {
                auto dB = in.grad(1);
                for (std::size_t i = 0; i < n; ++i) dB[i] -= g[i];
            }
        });
}

template <std::floating_point Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
    const auto A = a.data();
    std::vector<Real> out(A.begin(), A.end());
    for (auto& v : out) v *= factor;
    return Tensor<Real>::from_op(
        "scale", a.shape(), std::move(out), {a},
        [factor](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            auto dA = in.grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) dA[i] += factor * g[i];
        });
}

namespace {

template <typename Real>
Real ipow(Real base, int exp) {
    Real result = 1;
    while (exp > 0) {
        if (exp & 1) result *= base;
        base *= base;
        exp >>= 1;
    }
    return result;
}

}  // namespace

template <std::floating_point Real>
Tensor<Real> pow_int(const Tensor<Real>& a, int degree) {
    if (degree < 0) {
        throw UnsupportedDegreeError("degree must be a non-negative integer, got " +
                                     std::to_string(degree));
    }
    const auto A = a.data();
    std::vector<Real> out(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = ipow(A[i], degree);
    return Tensor<Real>::from_op(
        "pow_int", a.shape(), std::move(out), {a},
        [degree](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            if (degree == 0) return;
            const auto A = in.value(0);
            auto dA = in.grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                dA[i] += g[i] * static_cast<Real>(degree) * ipow(A[i], degree - 1);
            }
        });
}

template <std::floating_point Real>
Tensor<Real> gelu(const Tensor<Real>& a) {
    // Exact form x * Phi(x).
    const auto A = a.data();
    std::vector<Real> out(A.size());
    const Real inv_sqrt2 = static_cast<Real>(1.0 / std::numbers::sqrt2);
    for (std::size_t i = 0; i < A.size(); ++i) {
        out[i] = Real{0.5} * A[i] * (Real{1} + std::erf(A[i] * inv_sqrt2));
    }
    return Tensor<Real>::from_op(
        "gelu", a.shape(), std::move(out), {a},
        [inv_sqrt2](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            const auto A = in.value(0);
            auto dA = in.grad(0);
            const Real inv_sqrt_2pi = static_cast<Real>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const Real x = A[i];
                const Real cdf = Real{0.5} * (Real{1} + std::erf(x * inv_sqrt2));
                const Real pdf = inv_sqrt_2pi * std::exp(Real{-0.5} * x * x);
                dA[i] += g[i] * (cdf + x * pdf);
            }
        });
}

template <std::floating_point Real>
Tensor<Real> softmax_rows(const Tensor<Real>& a) {
    require_matrix(a, "softmax_rows");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    const auto A = a.data();
    std::vector<Real> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const Real* row = A.data() + i * c;
        const Real mx = *std::max_element(row, row + c);
        Real total = 0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(row[j] - mx);
            total += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
    }
    return Tensor<Real>::from_op(
        "softmax_rows", a.shape(), std::move(out), {a},
        [r, c](std::span<const Real> y, std::span<const Real> g, GradInputs<Real>& in) {
            auto dA = in.grad(0);
            for (std::size_t i = 0; i < r; ++i) {
                Real dot = 0;
                for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    dA[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                }
            }
        });
}

template <std::floating_point Real>
Tensor<Real> sum(const Tensor<Real>& a) {
    const auto A = a.data();
    const Real total = std::accumulate(A.begin(), A.end(), Real{0});
    return Tensor<Real>::from_op(
        "sum", {1}, {total}, {a},
        [](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            auto dA = in.grad(0);
            for (auto& v : dA) v += g[0];
        });
}

template <std::floating_point Real>
Tensor<Real> mean(const Tensor<Real>& a) {
    const auto A = a.data();
    const Real n = static_cast<Real>(A.size());
    const Real total = std::accumulate(A.begin(), A.end(), Real{0});
    return Tensor<Real>::from_op(
        "mean", {1}, {total / n}, {a},
        [n](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            auto dA = in.grad(0);
            for (auto& v : dA) v += g[0] / n;
        });
}

template <std::floating_point Real>
Tensor<Real> mean_rows(const Tensor<Real>& a) {
    require_matrix(a, "mean_rows");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    const auto A = a.data();
    std::vector<Real> out(c, Real{0});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j] += A[i * c + j];
    }
    for (auto& v : out) v /= static_cast<Real>(r);
    return Tensor<Real>::from_op(
        "mean_rows", {1, c}, std::move(out), {a},
        [r, c](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            auto dA = in.grad(0);
            const Real inv = Real{1} / static_cast<Real>(r);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) dA[i * c + j] += g[j] * inv;
            }
        });
}

template <std::floating_point Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
    require_matrix(a, "transpose");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    const auto A = a.data();
    std::vector<Real> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
    }
    return Tensor<Real>::from_op(
        "transpose", {c, r}, std::move(out), {a},
        [r, c](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            auto dA = in.grad(0);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) dA[i * c + j] += g[j * r + i];
            }
        });
}

template <std::floating_point Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows of zero tensors");
    const std::size_t c = parts.front().cols();
    std::size_t total_rows = 0;
    std::vector<Real> out;
    for (const auto& p : parts) {
        require_matrix(p, "concat_rows");
        if (p.cols() != c) {
            throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) +
                                 " vs " + shape_str(p.shape()));
        }
        total_rows += p.rows();
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return Tensor<Real>::from_op(
        "concat_rows", {total_rows, c}, std::move(out), parts,
        [](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < in.size(); ++k) {
                const std::size_t n = in.value(k).size();
                if (in.needs_grad(k)) {
                    auto d = in.grad(k);
                    for (std::size_t i = 0; i < n; ++i) d[i] += g[offset + i];
                }
                offset += n;
            }
        });
}

template <std::floating_point Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols of zero tensors");
    const std::size_t r = parts.front().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.rows() != r) {
            throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) +
                                 " vs " + shape_str(p.shape()));
        }
        widths.push_back(p.cols());
        total += p.cols();
    }
    std::vector<Real> out(r * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto src = parts[k].data();
        for (std::size_t i = 0; i < r; ++i) {
            std::copy_n(src.data() + i * widths[k], widths[k], out.data() + i * total + offset);
        }
        offset += widths[k];
    }
    return Tensor<Real>::from_op(
        "concat_cols", {r, total}, std::move(out), parts,
        [r, total, widths](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < in.size(); ++k) {
                if (in.needs_grad(k)) {
                    auto d = in.grad(k);
                    for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < widths[k]; ++j) {
                            d[i * widths[k] + j] += g[i * total + offset + j];
                        }
                    }
                }
                offset += widths[k];
            }
        });
}

template <std::floating_point Real>
Tensor<Real> slice_cols(const Tensor<Real>& a, std::size_t begin, std::size_t end) {
    require_matrix(a, "slice_cols");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (begin >= end || end > c) {
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                             std::to_string(end) + ") invalid for " + shape_str(a.shape()));
    }
    const std::size_t w = end - begin;
    const auto A = a.data();
    std::vector<Real> out(r * w);
    for (std::size_t i = 0; i < r; ++i) std::copy_n(A.data() + i * c + begin, w, out.data() + i * w);
    return Tensor<Real>::from_op(
        "slice_cols", {r, w}, std::move(out), {a},
        [r, c, w, begin](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            auto dA = in.grad(0);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < w; ++j) dA[i * c + begin + j] += g[i * w + j];
            }
        });
}

template <std::floating_point Real>
Tensor<Real> gather_rows(const Tensor<Real>& table, std::span<const std::size_t> ids) {
    require_matrix(table, "gather_rows");
    if (ids.empty()) throw DimensionError("gather_rows with no ids");
    const std::size_t vocab = table.shape()[0], c = table.shape()[1];
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    const auto T = table.data();
    std::vector<Real> out(idx.size() * c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= vocab) {
            throw DimensionError("gather_rows: id " + std::to_string(idx[i]) + " out of range for " +
                                 shape_str(table.shape()));
        }
        std::copy_n(T.data() + idx[i] * c, c, out.data() + i * c);
    }
    const std::size_t n = idx.size();
    return Tensor<Real>::from_op(
        "gather_rows", {n, c}, std::move(out), {table},
        [idx = std::move(idx), c](std::span<const Real>, std::span<const Real> g,
                                  GradInputs<Real>& in) {
            auto dT = in.grad(0);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                for (std::size_t j = 0; j < c; ++j) dT[idx[i] * c + j] += g[i * c + j];
            }
        });
}

template <std::floating_point Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    const auto A = a.data();
    return Tensor<Real>::from_op(
        "reshape", std::move(shape), std::vector<Real>(A.begin(), A.end()), {a},
        [](std::span<const Real>, std::span<const Real> g, GradInputs<Real>& in) {
            auto dA = in.grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) dA[i] += g[i];
        });
}

template <std::floating_point Real>
Tensor<Real> dropout(const Tensor<Real>& a, Real rate, std::mt19937_64& rng) {
    if (rate < Real{0} || rate >= Real{1}) {
        throw DomainError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (rate == Real{0}) return a;
    std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
    const Real factor = Real{1} / (Real{1} - rate);
    std::vector<Real> mask(a.numel());
    for (auto& m : mask) m = keep(rng) ? factor : Real{0};
    const auto A = a.data();
    std::vector<Real> out(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * mask[i];
    return Tensor<Real>::from_op(
        "dropout", a.shape(), std::move(out), {a},
        [mask = std::move(mask)](std::span<const Real>, std::span<const Real> g,
                                 GradInputs<Real>& in) {
            auto dA = in.grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) dA[i] += g[i] * mask[i];
        });
}

template <std::floating_point Real>
Tensor<Real> finite_diff_grad(const std::function<Real()>& f, Parameter<Real>& p, Real h) {
    if (!(h > Real{0})) throw DomainError("finite-difference step must be positive");
    auto values = p.tensor.mutable_data();
    std::vector<Real> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Real saved = values[i];
        values[i] = saved + h;
        const long double plus = f();
        values[i] = saved - h;
        const long double minus = f();
        values[i] = saved;
        out[i] = static_cast<Real>((plus - minus) / (2.0L * static_cast<long double>(h)));
    }
    return Tensor<Real>(p.tensor.shape(), std::move(out));
}

double grad_relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("grad_relative_error: length mismatch");
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    if (denom < 1e-12) return std::sqrt(diff);
    return std::sqrt(diff) / denom;
}

#define PLAB_INSTANTIATE_TENSOR(Real)                                                           \
    template class GradInputs<Real>;                                                            \
    template class Tensor<Real>;                                                                \
    template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                     \
    template Tensor<Real> ew_mul(const Tensor<Real>&, const Tensor<Real>&);                     \
    template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                        \
    template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                        \
    template Tensor<Real> scale(const Tensor<Real>&, Real);                                     \
    template Tensor<Real> pow_int(const Tensor<Real>&, int);                                    \
    template Tensor<Real> gelu(const Tensor<Real>&);                                            \
    template Tensor<Real> softmax_rows(const Tensor<Real>&);                                    \
    template Tensor<Real> sum(const Tensor<Real>&);                                             \
    template Tensor<Real> mean(const Tensor<Real>&);                                            \
    template Tensor<Real> mean_rows(const Tensor<Real>&);                                       \
    template Tensor<Real> transpose(const Tensor<Real>&);                                       \
    template Tensor<Real> concat_rows(const std::vector<Tensor<Real>>&);                        \
    template Tensor<Real> concat_cols(const std::vector<Tensor<Real>>&);                        \
    template Tensor<Real> slice_cols(const Tensor<Real>&, std::size_t, std::size_t);            \
    template Tensor<Real> gather_rows(const Tensor<Real>&, std::span<const std::size_t>);       \
    template Tensor<Real> reshape(const Tensor<Real>&, Shape);                                  \
    template Tensor<Real> dropout(const Tensor<Real>&, Real, std::mt19937_64&);                 \
    template Tensor<Real> finite_diff_grad(const std::function<Real()>&, Parameter<Real>&, Real);

PLAB_INSTANTIATE_TENSOR(float)
PLAB_INSTANTIATE_TENSOR(double)

}  // namespace plab
