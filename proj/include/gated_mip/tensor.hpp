#pragma once

// Dense float64 tensors with a dynamic reverse-mode tape.
//
// Every op returns a fresh Tensor. When gradient recording is enabled and at
// least one operand requires a gradient, the result keeps references to its
// operands and a closure that pushes its gradient back into them. The graph
// lives exactly as long as the Tensor handles that reference it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gmip {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void ensure_grad();
};

} // namespace detail

/// Row-major [rows x cols] table of indices into some pool. Used to address
/// (anchor, candidate) pairs without materializing the full grid.
struct PairIndex {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> index;

    std::size_t at(std::size_t r, std::size_t c) const { return index[r * cols + c]; }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(m_node); }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return data().size(); }

    std::span<const double> data() const;
    /// Direct write access. Intended for leaves (parameters, inputs); writing
    /// into an interior node invalidates the recorded graph.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    void set_requires_grad(bool value);
    bool has_grad() const;
    /// Gradient buffer; all-zero view of the right size when none was accumulated.
    std::vector<double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// Reverse sweep from this (single-element) tensor. Gradients accumulate
    /// into every reachable leaf that requires them.
    void backward() const;

    /// Same values, no history, no gradient.
    Tensor detach() const;
    /// Deep copy of values into a new leaf.
    Tensor clone(bool requires_grad = false) const;

    const std::shared_ptr<detail::Node>& node() const { return m_node; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : m_node(std::move(node)) {}
    friend Tensor make_result(Shape, std::vector<double>, std::vector<const Tensor*>,
                              std::function<void(detail::Node&)>);

    std::shared_ptr<detail::Node> m_node;
};

/// Disables gradient recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool m_previous;
};

bool grad_enabled() noexcept;

// Linear algebra -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise. Binary ops take equal shapes, or one operand with a single
// element which is broadcast.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double factor);
Tensor shift(const Tensor& t, double offset);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor sqrt(const Tensor& t);
Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);
/// max(t, floor); zero gradient where the floor is active.
Tensor clamp_min(const Tensor& t, double floor);
/// Inverted dropout: zeroes with probability `rate`, scales survivors by 1/(1-rate).
Tensor dropout(const Tensor& t, double rate, std::mt19937_64& rng);

// Reductions. `axis` is removed from the result shape.

Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
Tensor sum(const Tensor& t, std::size_t axis);
Tensor mean(const Tensor& t, std::size_t axis);

// Row-structured ops on [B x D] matrices.

/// Each row divided by max(||row||, epsilon).
Tensor l2_normalize(const Tensor& t, double epsilon = 1e-12);
/// x[i, :] + v
Tensor add_rowvec(const Tensor& x, const Tensor& v);
/// x[i, :] * v (elementwise)
Tensor mul_rowvec(const Tensor& x, const Tensor& v);
/// x[i, :] * v[i]
Tensor scale_rows(const Tensor& x, const Tensor& v);
/// a[i] * b[j]  -> [len(a) x len(b)]
Tensor outer(const Tensor& a, const Tensor& b);
/// sum_j x[i, j] * y[i, j] -> [B]
Tensor row_dot(const Tensor& x, const Tensor& y);

/// out[r, c] = v[idx(r, c)] for a rank-1 (or [N x 1]) tensor v.
Tensor gather(const Tensor& v, const PairIndex& idx);
/// out[r, c] = <x[r, :], y[idx(r, c), :]>
Tensor gathered_dot(const Tensor& x, const Tensor& y, const PairIndex& idx);

/// Columns of equal-length rank-1 tensors (or equal-shape tensors, flattened)
/// stacked into [n x k].
Tensor stack_columns(const std::vector<Tensor>& columns);
/// Column j of [n x k] as a rank-1 tensor of length n.
Tensor column(const Tensor& t, std::size_t j);
Tensor softmax_rows(const Tensor& t);

/// Element at a flat position, as a rank-0 tensor.
Tensor take(const Tensor& t, std::size_t flat_index);
Tensor reshape(const Tensor& t, Shape shape);
Tensor transpose(const Tensor& t);

/// Mean over rows of -log softmax(logits[r])[targets[r]].
Tensor log_softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

// Numerical differentiation --------------------------------------------------

/// Max over coordinates of `x` of |analytic - central| / max(|analytic|, |central|, 1e-8).
/// `f` must depend on `x` (a leaf) and return a single-element tensor. The
/// analytic gradient is obtained with one backward pass; `x` is restored.
double gradient_check(const std::function<Tensor()>& f, Tensor& x, double step);
double gradient_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x, double step);

} // namespace gmip
