#include "gated_mip/tensor.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace gmip {

namespace {

thread_local bool t_grad_enabled = true;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

using NodePtr = std::shared_ptr<detail::Node>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                             ", got shape " + shape_to_string(t.shape()));
    }
}

// Accepts rank-1 [n] or column [n x 1].
std::size_t vector_length(const Tensor& t, const char* op) {
    if (t.rank() == 1) return t.dim(0);
    if (t.rank() == 2 && t.dim(1) == 1) return t.dim(0);
    throw DimensionError(std::string(op) + ": expected a vector, got shape " + shape_to_string(t.shape()));
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

void detail::Node::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<const Tensor*> parents,
                   std::function<void(detail::Node&)> backward) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    if (t_grad_enabled) {
        const bool any = std::any_of(parents.begin(), parents.end(),
                                     [](const Tensor* p) { return p->requires_grad(); });
        if (any) {
            node->requires_grad = true;
            for (const Tensor* p : parents) node->parents.push_back(p->node());
            node->backward = std::move(backward);
        }
    }
    return Tensor(std::move(node));
}

// Tensor ---------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_to_string(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return m_node->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) throw IndexError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape()));
    return m_node->shape[axis];
}

std::span<const double> Tensor::data() const { return m_node->data; }
std::span<double> Tensor::mutable_data() { return m_node->data; }

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
    return m_node->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    require_rank(*this, 2, "at");
    if (row >= dim(0) || col >= dim(1)) throw IndexError("at(): index out of range");
    return m_node->data[row * dim(1) + col];
}

bool Tensor::requires_grad() const { return m_node && m_node->requires_grad; }
void Tensor::set_requires_grad(bool value) { m_node->requires_grad = value; }
bool Tensor::has_grad() const { return m_node && !m_node->grad.empty(); }

std::vector<double> Tensor::grad() const {
    if (m_node->grad.empty()) return std::vector<double>(m_node->data.size(), 0.0);
    return m_node->grad;
}

std::span<double> Tensor::mutable_grad() {
    m_node->ensure_grad();
    return m_node->grad;
}

void Tensor::zero_grad() {
    if (!m_node->grad.empty()) std::fill(m_node->grad.begin(), m_node->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (numel() != 1) throw DimensionError("backward() requires a single-element tensor, got " + shape_to_string(shape()));
    if (!requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(m_node.get(), 0);
    visited.insert(m_node.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (detail::Node* node : order) node->ensure_grad();
    m_node->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<detail::Node>();
    node->shape = m_node->shape;
    node->data = m_node->data;
    return Tensor(std::move(node));
}

Tensor Tensor::clone(bool requires_grad) const {
    Tensor out = detach();
    out.set_requires_grad(requires_grad);
    return out;
}

NoGradGuard::NoGradGuard() : m_previous(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = m_previous; }

bool grad_enabled() noexcept { return t_grad_enabled; }

// matmul ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()));
    }
    std::vector<double> out(n * m, 0.0);
    if (n && m && k) {
        MatrixMap(out.data(), n, m).noalias() = ConstMatrixMap(a.data().data(), n, k) * ConstMatrixMap(b.data().data(), k, m);
    }
    return make_result({n, m}, std::move(out), {&a, &b}, [n, k, m](detail::Node& self) {
        ConstMatrixMap g(self.grad.data(), n, m);
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            MatrixMap(pa.grad.data(), n, k).noalias() += g * ConstMatrixMap(pb.data.data(), k, m).transpose();
        }
        if (pb.requires_grad) {
            MatrixMap(pb.grad.data(), k, m).noalias() += ConstMatrixMap(pa.data.data(), n, k).transpose() * g;
        }
    });
}

// Elementwise ----------------------------------------------------------------

namespace {

enum class BinaryOp { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinaryOp op, const char* name) {
    const bool same = a.shape() == b.shape();
    const bool a_scalar = a.numel() == 1 && !same;
    const bool b_scalar = b.numel() == 1 && !same;
    if (!same && !a_scalar && !b_scalar) {
        throw DimensionError(std::string(name) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
    const Shape shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = shape_numel(shape);
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ad[a_scalar ? 0 : i];
        const double y = bd[b_scalar ? 0 : i];
        switch (op) {
        case BinaryOp::add: out[i] = x + y; break;
        case BinaryOp::sub: out[i] = x - y; break;
        case BinaryOp::mul: out[i] = x * y; break;
        case BinaryOp::div: out[i] = x / y; break;
        }
    }
    return make_result(shape, std::move(out), {&a, &b}, [n, a_scalar, b_scalar, op](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < n; ++i) {
            const double g = self.grad[i];
            const double x = pa.data[a_scalar ? 0 : i];
            const double y = pb.data[b_scalar ? 0 : i];
            double ga = 0.0, gb = 0.0;
            switch (op) {
            case BinaryOp::add: ga = g; gb = g; break;
            case BinaryOp::sub: ga = g; gb = -g; break;
            case BinaryOp::mul: ga = g * y; gb = g * x; break;
            case BinaryOp::div: ga = g / y; gb = -g * x / (y * y); break;
            }
            if (pa.requires_grad) pa.grad[a_scalar ? 0 : i] += ga;
            if (pb.requires_grad) pb.grad[b_scalar ? 0 : i] += gb;
        }
    });
}

// Unary op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& t, Fwd fwd, Deriv deriv) {
    const auto in = t.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return make_result(t.shape(), std::move(out), {&t}, [deriv](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.data.size(); ++i) p.grad[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::div, "div"); }

Tensor scale(const Tensor& t, double factor) {
    return unary(t, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor shift(const Tensor& t, double offset) {
    return unary(t, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& t) {
    return unary(t, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& t) {
    return unary(t, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& t) {
    return unary(t, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor relu(const Tensor& t) {
    return unary(t, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& t) {
    return unary(t, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor clamp_min(const Tensor& t, double floor) {
    return unary(t, [floor](double x) { return x > floor ? x : floor; },
                 [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor dropout(const Tensor& t, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw DomainError("dropout rate must lie in [0, 1)");
    if (rate == 0.0) return t;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(t.numel());
    for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
    const auto in = t.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * mask[i];
    return make_result(t.shape(), std::move(out), {&t}, [mask = std::move(mask)](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t i = 0; i < mask.size(); ++i) p.grad[i] += self.grad[i] * mask[i];
    });
}

// Reductions -----------------------------------------------------------------

Tensor sum(const Tensor& t) {
    const auto in = t.data();
    const double total = std::accumulate(in.begin(), in.end(), 0.0);
    return make_result({}, {total}, {&t}, [](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        const double g = self.grad[0];
        for (double& x : p.grad) x += g;
    });
}

Tensor mean(const Tensor& t) {
    if (t.numel() == 0) throw DimensionError("mean of empty tensor");
    return scale(sum(t), 1.0 / static_cast<double>(t.numel()));
}

Tensor sum(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) {
        throw DimensionError("sum: axis " + std::to_string(axis) + " invalid for shape " + shape_to_string(t.shape()));
    }
    const Shape& s = t.shape();
    std::size_t outer_n = 1, inner_n = 1;
    for (std::size_t i = 0; i < axis; ++i) outer_n *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner_n *= s[i];
    const std::size_t axis_n = s[axis];
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != axis) out_shape.push_back(s[i]);
    }
    const auto in = t.data();
    std::vector<double> out(outer_n * inner_n, 0.0);
    for (std::size_t o = 0; o < outer_n; ++o) {
        for (std::size_t a = 0; a < axis_n; ++a) {
            const double* row = in.data() + (o * axis_n + a) * inner_n;
            double* dst = out.data() + o * inner_n;
            for (std::size_t i = 0; i < inner_n; ++i) dst[i] += row[i];
        }
    }
    return make_result(std::move(out_shape), std::move(out), {&t}, [outer_n, axis_n, inner_n](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t o = 0; o < outer_n; ++o) {
            const double* g = self.grad.data() + o * inner_n;
            for (std::size_t a = 0; a < axis_n; ++a) {
                double* dst = p.grad.data() + (o * axis_n + a) * inner_n;
                for (std::size_t i = 0; i < inner_n; ++i) dst[i] += g[i];
            }
        }
    });
}

Tensor mean(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) {
        throw DimensionError("mean: axis " + std::to_string(axis) + " invalid for shape " + shape_to_string(t.shape()));
    }
    if (t.dim(axis) == 0) throw DimensionError("mean over empty axis");
    return scale(sum(t, axis), 1.0 / static_cast<double>(t.dim(axis)));
}

// Row-structured -------------------------------------------------------------

Tensor l2_normalize(const Tensor& t, double epsilon) {
    if (t.rank() != 1 && t.rank() != 2) throw DimensionError("l2_normalize expects rank 1 or 2");
    const std::size_t rows = t.rank() == 1 ? 1 : t.dim(0);
    const std::size_t cols = t.rank() == 1 ? t.dim(0) : t.dim(1);
    const auto in = t.data();
    std::vector<double> out(in.size());
    std::vector<double> denom(rows);
    std::vector<char> clamped(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t c = 0; c < cols; ++c) ss += in[r * cols + c] * in[r * cols + c];
        const double norm = std::sqrt(ss);
        clamped[r] = norm <= epsilon;
        denom[r] = clamped[r] ? epsilon : norm;
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[r * cols + c] / denom[r];
    }
    return make_result(t.shape(), std::move(out), {&t},
                       [rows, cols, denom = std::move(denom), clamped = std::move(clamped)](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = self.grad.data() + r * cols;
            const double* y = self.data.data() + r * cols;
            double* dx = p.grad.data() + r * cols;
            if (clamped[r]) {
                for (std::size_t c = 0; c < cols; ++c) dx[c] += g[c] / denom[r];
                continue;
            }
            // d(x/|x|) = (g - y <g, y>) / |x|
            double gy = 0.0;
            for (std::size_t c = 0; c < cols; ++c) gy += g[c] * y[c];
            for (std::size_t c = 0; c < cols; ++c) dx[c] += (g[c] - y[c] * gy) / denom[r];
        }
    });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    require_rank(x, 2, "add_rowvec");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (v.numel() != cols) throw DimensionError("add_rowvec: vector length does not match columns");
    const auto xd = x.data();
    const auto vd = v.data();
    std::vector<double> out(xd.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xd[r * cols + c] + vd[c];
    }
    return make_result(x.shape(), std::move(out), {&x, &v}, [rows, cols](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& pv = *self.parents[1];
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double g = self.grad[r * cols + c];
                if (px.requires_grad) px.grad[r * cols + c] += g;
                if (pv.requires_grad) pv.grad[c] += g;
            }
        }
    });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
    require_rank(x, 2, "mul_rowvec");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (v.numel() != cols) throw DimensionError("mul_rowvec: vector length does not match columns");
    const auto xd = x.data();
    const auto vd = v.data();
    std::vector<double> out(xd.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xd[r * cols + c] * vd[c];
    }
    return make_result(x.shape(), std::move(out), {&x, &v}, [rows, cols](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& pv = *self.parents[1];
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double g = self.grad[r * cols + c];
                if (px.requires_grad) px.grad[r * cols + c] += g * pv.data[c];
                if (pv.requires_grad) pv.grad[c] += g * px.data[r * cols + c];
            }
        }
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& v) {
    require_rank(x, 2, "scale_rows");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (v.numel() != rows) throw DimensionError("scale_rows: vector length does not match rows");
    const auto xd = x.data();
    const auto vd = v.data();
    std::vector<double> out(xd.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xd[r * cols + c] * vd[r];
    }
    return make_result(x.shape(), std::move(out), {&x, &v}, [rows, cols](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& pv = *self.parents[1];
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                const double g = self.grad[r * cols + c];
                if (px.requires_grad) px.grad[r * cols + c] += g * pv.data[r];
                acc += g * px.data[r * cols + c];
            }
            if (pv.requires_grad) pv.grad[r] += acc;
        }
    });
}

Tensor outer(const Tensor& a, const Tensor& b) {
    const std::size_t rows = a.numel(), cols = b.numel();
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = ad[r] * bd[c];
    }
    return make_result({rows, cols}, std::move(out), {&a, &b}, [rows, cols](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double g = self.grad[r * cols + c];
                if (pa.requires_grad) pa.grad[r] += g * pb.data[c];
                if (pb.requires_grad) pb.grad[c] += g * pa.data[r];
            }
        }
    });
}

Tensor row_dot(const Tensor& x, const Tensor& y) {
    require_rank(x, 2, "row_dot");
    if (x.shape() != y.shape()) throw DimensionError("row_dot: shape mismatch");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    const auto xd = x.data();
    const auto yd = y.data();
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += xd[r * cols + c] * yd[r * cols + c];
        out[r] = acc;
    }
    return make_result({rows}, std::move(out), {&x, &y}, [rows, cols](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& py = *self.parents[1];
        for (std::size_t r = 0; r < rows; ++r) {
            const double g = self.grad[r];
            for (std::size_t c = 0; c < cols; ++c) {
                if (px.requires_grad) px.grad[r * cols + c] += g * py.data[r * cols + c];
                if (py.requires_grad) py.grad[r * cols + c] += g * px.data[r * cols + c];
            }
        }
    });
}

Tensor gather(const Tensor& v, const PairIndex& idx) {
    const std::size_t n = vector_length(v, "gather");
    if (idx.index.size() != idx.rows * idx.cols) throw DimensionError("gather: malformed pair index");
    const auto vd = v.data();
    std::vector<double> out(idx.index.size());
    for (std::size_t i = 0; i < idx.index.size(); ++i) {
        if (idx.index[i] >= n) throw IndexError("gather: index out of range");
        out[i] = vd[idx.index[i]];
    }
    return make_result({idx.rows, idx.cols}, std::move(out), {&v}, [index = idx.index](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t i = 0; i < index.size(); ++i) p.grad[index[i]] += self.grad[i];
    });
}

Tensor gathered_dot(const Tensor& x, const Tensor& y, const PairIndex& idx) {
    require_rank(x, 2, "gathered_dot");
    require_rank(y, 2, "gathered_dot");
    const std::size_t d = x.dim(1);
    if (y.dim(1) != d) throw DimensionError("gathered_dot: row widths differ");
    if (idx.rows != x.dim(0) || idx.index.size() != idx.rows * idx.cols) {
        throw DimensionError("gathered_dot: pair index rows do not match x");
    }
    const std::size_t n = y.dim(0);
    for (std::size_t j : idx.index) {
        if (j >= n) throw IndexError("gathered_dot: index out of range");
    }
    const std::size_t rows = idx.rows, cols = idx.cols;
    // Small pools: one dense product and a gather beats per-pair dot products.
    const bool dense = rows * n <= 4 * rows * cols;
    const auto xd = x.data();
    const auto yd = y.data();
    std::vector<double> out(idx.index.size());
    if (dense && rows && n && d) {
        RowMatrix full = ConstMatrixMap(xd.data(), rows, d) * ConstMatrixMap(yd.data(), n, d).transpose();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = full(r, idx.index[r * cols + c]);
        }
    } else {
        for (std::size_t r = 0; r < rows; ++r) {
            const ConstVectorMap xr(xd.data() + r * d, d);
            for (std::size_t c = 0; c < cols; ++c) {
                out[r * cols + c] = xr.dot(ConstVectorMap(yd.data() + idx.index[r * cols + c] * d, d));
            }
        }
    }
    return make_result({rows, cols}, std::move(out), {&x, &y}, [idx, d, n, dense](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& py = *self.parents[1];
        const std::size_t rows = idx.rows, cols = idx.cols;
        if (dense) {
            RowMatrix g = RowMatrix::Zero(rows, n);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) g(r, idx.index[r * cols + c]) += self.grad[r * cols + c];
            }
            if (px.requires_grad) MatrixMap(px.grad.data(), rows, d).noalias() += g * ConstMatrixMap(py.data.data(), n, d);
            if (py.requires_grad) {
                MatrixMap(py.grad.data(), n, d).noalias() += g.transpose() * ConstMatrixMap(px.data.data(), rows, d);
            }
            return;
        }
        for (std::size_t r = 0; r < rows; ++r) {
            const ConstVectorMap xr(px.data.data() + r * d, d);
            for (std::size_t c = 0; c < cols; ++c) {
                const double g = self.grad[r * cols + c];
                if (g == 0.0) continue;
                const std::size_t j = idx.index[r * cols + c];
                if (px.requires_grad) VectorMap(px.grad.data() + r * d, d) += g * ConstVectorMap(py.data.data() + j * d, d);
                if (py.requires_grad) VectorMap(py.grad.data() + j * d, d) += g * xr;
            }
        }
    });
}

Tensor stack_columns(const std::vector<Tensor>& columns) {
    if (columns.empty()) throw DimensionError("stack_columns: no columns");
    const std::size_t n = columns.front().numel();
    const std::size_t k = columns.size();
    std::vector<double> out(n * k);
    std::vector<const Tensor*> parents;
    for (std::size_t j = 0; j < k; ++j) {
        if (columns[j].numel() != n) throw DimensionError("stack_columns: column lengths differ");
        const auto cd = columns[j].data();
        for (std::size_t i = 0; i < n; ++i) out[i * k + j] = cd[i];
        parents.push_back(&columns[j]);
    }
    return make_result({n, k}, std::move(out), std::move(parents), [n, k](detail::Node& self) {
        for (std::size_t j = 0; j < k; ++j) {
            detail::Node& p = *self.parents[j];
            if (!p.requires_grad) continue;
            for (std::size_t i = 0; i < n; ++i) p.grad[i] += self.grad[i * k + j];
        }
    });
}

Tensor column(const Tensor& t, std::size_t j) {
    require_rank(t, 2, "column");
    const std::size_t n = t.dim(0), k = t.dim(1);
    if (j >= k) throw IndexError("column: index out of range");
    const auto td = t.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = td[i * k + j];
    return make_result({n}, std::move(out), {&t}, [n, k, j](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t i = 0; i < n; ++i) p.grad[i * k + j] += self.grad[i];
    });
}

Tensor softmax_rows(const Tensor& t) {
    require_rank(t, 2, "softmax_rows");
    const std::size_t n = t.dim(0), k = t.dim(1);
    const auto td = t.data();
    std::vector<double> out(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = td.data() + i * k;
        const double mx = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += (out[i * k + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= z;
    }
    return make_result(t.shape(), std::move(out), {&t}, [n, k](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t i = 0; i < n; ++i) {
            const double* y = self.data.data() + i * k;
            const double* g = self.grad.data() + i * k;
            double gy = 0.0;
            for (std::size_t j = 0; j < k; ++j) gy += g[j] * y[j];
            for (std::size_t j = 0; j < k; ++j) p.grad[i * k + j] += y[j] * (g[j] - gy);
        }
    });
}

Tensor take(const Tensor& t, std::size_t flat_index) {
    if (flat_index >= t.numel()) throw IndexError("take: index out of range");
    return make_result({}, {t.data()[flat_index]}, {&t}, [flat_index](detail::Node& self) {
        self.parents[0]->grad[flat_index] += self.grad[0];
    });
}

Tensor reshape(const Tensor& t, Shape shape) {
    if (shape_numel(shape) != t.numel()) {
        throw DimensionError("reshape: " + shape_to_string(t.shape()) + " -> " + shape_to_string(shape));
    }
    const auto td = t.data();
    return make_result(std::move(shape), std::vector<double>(td.begin(), td.end()), {&t}, [](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

Tensor transpose(const Tensor& t) {
    require_rank(t, 2, "transpose");
    const std::size_t rows = t.dim(0), cols = t.dim(1);
    std::vector<double> out(rows * cols);
    if (rows && cols) MatrixMap(out.data(), cols, rows).noalias() = ConstMatrixMap(t.data().data(), rows, cols).transpose();
    return make_result({cols, rows}, std::move(out), {&t}, [rows, cols](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        MatrixMap(p.grad.data(), rows, cols).noalias() += ConstMatrixMap(self.grad.data(), cols, rows).transpose();
    });
}

Tensor log_softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
    require_rank(logits, 2, "log_softmax_cross_entropy");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (targets.size() != rows) throw DimensionError("log_softmax_cross_entropy: one target per row required");
    if (rows == 0) throw DimensionError("log_softmax_cross_entropy: empty batch");
    const auto ld = logits.data();
    std::vector<double> probs(rows * cols);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] >= cols) {
            throw IndexError("log_softmax_cross_entropy: target " + std::to_string(targets[r]) + " outside [0, " +
                             std::to_string(cols) + ")");
        }
        const double* row = ld.data() + r * cols;
        const double mx = *std::max_element(row, row + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
        const double log_z = mx + std::log(z);
        total += log_z - row[targets[r]];
        for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] = std::exp(row[c] - log_z);
    }
    std::vector<std::size_t> target_copy(targets.begin(), targets.end());
    return make_result({}, {total / static_cast<double>(rows)}, {&logits},
                       [rows, cols, probs = std::move(probs), target_copy = std::move(target_copy)](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        const double g = self.grad[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double onehot = c == target_copy[r] ? 1.0 : 0.0;
                p.grad[r * cols + c] += g * (probs[r * cols + c] - onehot);
            }
        }
    });
}

// gradient_check -------------------------------------------------------------

double gradient_check(const std::function<Tensor()>& f, Tensor& x, double step) {
    if (!x.requires_grad()) throw DomainError("gradient_check: x must require a gradient");
    x.zero_grad();
    const Tensor y = f();
    if (!std::isfinite(y.item())) throw NumericError("gradient_check: non-finite function value");
    y.backward();
    const std::vector<double> analytic = x.grad();

    auto values = x.mutable_data();
    double worst = 0.0;
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        values[i] = original + step;
        const double plus = f().item();
        values[i] = original - step;
        const double minus = f().item();
        values[i] = original;
        if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(analytic[i])) {
            throw NumericError("gradient_check: non-finite value at coordinate " + std::to_string(i));
        }
        const double central = (plus - minus) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(central), 1e-8});
        worst = std::max(worst, std::abs(analytic[i] - central) / denom);
    }
    return worst;
}

double gradient_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x, double step) {
    return gradient_check([&]() { return f(x); }, x, step);
}

} // namespace gmip
