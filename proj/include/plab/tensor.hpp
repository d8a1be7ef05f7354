#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace plab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <std::floating_point Real>
class Tensor;

template <std::floating_point Real>
class GradInputs;

/// Local gradient rule of a primitive: receives the op's output value and the
/// upstream gradient, and accumulates into the gradients of its inputs.
template <std::floating_point Real>
using BackwardFn = std::function<void(std::span<const Real> out_value,
                                      std::span<const Real> out_grad, GradInputs<Real>& inputs)>;

namespace detail {

template <std::floating_point Real>
struct Node {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // empty means "no gradient"
    bool requires_grad = false;
    std::string_view op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn<Real> backward;
};

}  // namespace detail

/// View over the inputs of a node while its gradient rule runs.
template <std::floating_point Real>
class GradInputs {
   public:
    explicit GradInputs(detail::Node<Real>& node) : node_(node) {}

    std::size_t size() const { return node_.inputs.size(); }
    bool needs_grad(std::size_t i) const { return node_.inputs[i]->requires_grad; }
    std::span<const Real> value(std::size_t i) const { return node_.inputs[i]->data; }
    const Shape& shape(std::size_t i) const { return node_.inputs[i]->shape; }

    // Gradient buffer of input i, zero-initialised on first access.
    std::span<Real> grad(std::size_t i);

   private:
    detail::Node<Real>& node_;
};

/// Dense row-major tensor with reverse-mode differentiation.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Use clone() for an independent copy. Graphs are recorded as operations are
/// applied and released by backward().
template <std::floating_point Real>
class Tensor {
   public:
    using value_type = Real;

    Tensor() = default;
    Tensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

    static Tensor zeros(Shape shape);
    static Tensor ones(Shape shape);
    static Tensor full(Shape shape, Real value);
    static Tensor scalar(Real value);
    static Tensor vector(std::vector<Real> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<Real> values);

    /// Extension point for primitives defined outside the core.
    static Tensor from_op(std::string_view op, Shape shape, std::vector<Real> data,
                          const std::vector<Tensor>& inputs, BackwardFn<Real> backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const Real> data() const;
    /// Writable storage; only leaves may be written.
    std::span<Real> mutable_data();
    Real item() const;
    Real operator[](std::size_t i) const { return data()[i]; }
    Real operator()(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    bool has_grad() const;
    std::span<const Real> grad() const;
    void zero_grad();
    void clear_grad();

    bool is_leaf() const;
    std::string_view op() const;

    /// Independent leaf with a copy of the values (no grad, no graph).
    Tensor clone() const;
    Tensor clone_with_grad(bool requires_grad) const;

    /// Seeds d(self)/d(self) = 1 and propagates to every leaf requiring grad.
    void backward() const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

   private:
    explicit Tensor(std::shared_ptr<detail::Node<Real>> node) : node_(std::move(node)) {}
    const detail::Node<Real>& node() const;

    std::shared_ptr<detail::Node<Real>> node_;
};

/// A named tensor owned by a model or adapter.
template <std::floating_point Real>
struct Parameter {
    std::string name;
    Tensor<Real> tensor;
    bool trainable = false;
    // Weight decay pulls the value toward this target.
    Real decay_target = 0;
};

// Primitives. All 2-D ops take row-major [rows x cols] tensors.

template <std::floating_point Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

/// Elementwise product; b may also be a vector of length a.cols() applied to every row.
template <std::floating_point Real>
Tensor<Real> ew_mul(const Tensor<Real>& a, const Tensor<Real>& b);

/// Elementwise sum with the same row-broadcast rule as ew_mul.
template <std::floating_point Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);

template <std::floating_point Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);

template <std::floating_point Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);

template <std::floating_point Real>
Tensor<Real> pow_int(const Tensor<Real>& a, int degree);

template <std::floating_point Real>
Tensor<Real> gelu(const Tensor<Real>& a);

template <std::floating_point Real>
Tensor<Real> softmax_rows(const Tensor<Real>& a);

template <std::floating_point Real>
Tensor<Real> sum(const Tensor<Real>& a);

template <std::floating_point Real>
Tensor<Real> mean(const Tensor<Real>& a);

/// Column means of a matrix: [rows x cols] -> [1 x cols].
template <std::floating_point Real>
Tensor<Real> mean_rows(const Tensor<Real>& a);

template <std::floating_point Real>
Tensor<Real> transpose(const Tensor<Real>& a);

template <std::floating_point Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts);

template <std::floating_point Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts);

template <std::floating_point Real>
Tensor<Real> slice_cols(const Tensor<Real>& a, std::size_t begin, std::size_t end);

/// Row lookup: out[i] = table[ids[i]].
template <std::floating_point Real>
Tensor<Real> gather_rows(const Tensor<Real>& table, std::span<const std::size_t> ids);

template <std::floating_point Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape);

/// Inverted dropout; identity when rate == 0.
template <std::floating_point Real>
Tensor<Real> dropout(const Tensor<Real>& a, Real rate, std::mt19937_64& rng);

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate of p.
/// The parameter is restored after each probe.
template <std::floating_point Real>
Tensor<Real> finite_diff_grad(const std::function<Real()>& f, Parameter<Real>& p, Real h);

/// ||a - b|| / max(||a||, ||b||); absolute difference when both norms are below 1e-12.
double grad_relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace plab
