#include "dcp/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>

namespace dcp {

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

static void check_finite(const TensorNode& n) {
#ifndef NDEBUG
    for (double v : n.data) {
        if (!std::isfinite(v))
            throw TensorError("non-finite value produced by op '" + std::string(n.op) + "'");
    }
#endif
}

Tensor Tensor::make(Shape shape, std::vector<double> data, bool requires_grad,
                    std::vector<Tensor> parents, BackwardFn backward, const char* op) {
    if (dcp::numel(shape) != static_cast<int64_t>(data.size()))
        throw TensorError("shape " + shape_str(shape) + " does not match data length " +
                          std::to_string(data.size()));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->op = op;
    if (requires_grad) {
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    check_finite(*node);
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

static bool any_requires_grad(const std::vector<Tensor>& ts) {
    for (const auto& t : ts)
        if (t.requires_grad()) return true;
    return false;
}

static Tensor op_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                        BackwardFn backward, const char* op) {
    bool rg = any_requires_grad(parents);
    return Tensor::make(std::move(shape), std::move(data), rg,
                        rg ? std::move(parents) : std::vector<Tensor>{},
                        rg ? std::move(backward) : BackwardFn{}, op);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> d(static_cast<size_t>(dcp::numel(shape)), 0.0);
    return make(std::move(shape), std::move(d), requires_grad, {}, {}, "leaf");
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> d(static_cast<size_t>(dcp::numel(shape)), value);
    return make(std::move(shape), std::move(d), requires_grad, {}, {}, "leaf");
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    return make(std::move(shape), std::move(data), requires_grad, {}, {}, "leaf");
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> d(static_cast<size_t>(dcp::numel(shape)));
    for (double& v : d) v = dist(rng) * stddev;
    return make(std::move(shape), std::move(d), requires_grad, {}, {}, "leaf");
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return dcp::numel(node_->shape); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
    if (numel() != 1) throw TensorError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(int64_t i) const { return node_->data.at(static_cast<size_t>(i)); }

Tensor Tensor::detach() const { return from(node_->shape, node_->data, false); }

// ---------------------------------------------------------------------------
// backward

bool Gradients::has(const Tensor& t) const { return by_node.count(t.node()) > 0; }

const Tensor& Gradients::grad(const Tensor& t) const {
    auto it = by_node.find(t.node());
    if (it == by_node.end()) throw TensorError("no gradient recorded for tensor");
    return it->second;
}

Gradients backward(const Tensor& loss) {
    if (loss.numel() != 1) throw TensorError("backward requires a scalar loss, got " +
                                             shape_str(loss.shape()));
    Gradients out;
    if (!loss.requires_grad()) return out;

    // iterative postorder topological sort
    std::vector<const TensorNode*> order;
    std::unordered_map<const TensorNode*, int> state;  // 0 new, 1 open, 2 done
    std::vector<std::pair<const TensorNode*, size_t>> stack;
    std::unordered_map<const TensorNode*, Tensor> handle;  // keep nodes alive / map back
    stack.push_back({loss.node(), 0});
    handle.emplace(loss.node(), loss);
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx == 0) state[n] = 1;
        if (idx < n->parents.size()) {
            const Tensor& p = n->parents[idx++];
            if (p.requires_grad() && state[p.node()] == 0) {
                handle.emplace(p.node(), p);
                stack.push_back({p.node(), 0});
            }
        } else {
            state[n] = 2;
            order.push_back(n);
            stack.pop_back();
        }
    }

    std::unordered_map<const TensorNode*, Tensor>& grads = out.by_node;
    grads.emplace(loss.node(), Tensor::full({1}, 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const TensorNode* n = *it;
        auto git = grads.find(n);
        if (git == grads.end() || !n->backward) continue;
        std::vector<Tensor> pg = n->backward(git->second);
        assert(pg.size() == n->parents.size());
        for (size_t i = 0; i < pg.size(); ++i) {
            const Tensor& parent = n->parents[i];
            if (!parent.requires_grad() || !pg[i].defined()) continue;
            auto pit = grads.find(parent.node());
            if (pit == grads.end())
                grads.emplace(parent.node(), pg[i]);
            else
                pit->second = add(pit->second, pg[i]);
        }
    }
    // drop gradients of non-leaf intermediates? keep all; callers look up what they need
    return out;
}

// ---------------------------------------------------------------------------
// broadcasting helpers

static Shape broadcast_shape(const Shape& a, const Shape& b) {
    Shape out(std::max(a.size(), b.size()));
    for (size_t i = 0; i < out.size(); ++i) {
        int64_t da = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
        int64_t db = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
        if (da != db && da != 1 && db != 1)
            throw TensorError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// strides of `shape` aligned to broadcast rank, 0 where broadcast
static std::vector<int64_t> aligned_strides(const Shape& shape, const Shape& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    for (size_t i = 0; i < shape.size(); ++i) {
        size_t ri = shape.size() - 1 - i;
        size_t oi = out.size() - 1 - i;
        strides[oi] = (shape[ri] == 1 && out[oi] != 1) ? 0 : s;
        s *= shape[ri];
    }
    return strides;
}

template <typename F>
static std::vector<double> broadcast_apply(const Tensor& a, const Tensor& b, const Shape& out,
                                           F&& f) {
    int64_t n = numel(out);
    std::vector<double> r(static_cast<size_t>(n));
    auto ad = a.data();
    auto bd = b.data();
    if (a.shape() == b.shape()) {
        for (int64_t i = 0; i < n; ++i) r[i] = f(ad[i], bd[i]);
        return r;
    }
    auto sa = aligned_strides(a.shape(), out);
    auto sb = aligned_strides(b.shape(), out);
    std::vector<int64_t> idx(out.size(), 0);
    int64_t ia = 0, ib = 0;
    for (int64_t i = 0; i < n; ++i) {
        r[i] = f(ad[ia], bd[ib]);
        for (int64_t d = static_cast<int64_t>(out.size()) - 1; d >= 0; --d) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
    return r;
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
    if (a.shape() == shape) return a;
    Tensor ones = Tensor::full(shape, 1.0);
    int64_t n = numel(shape);
    std::vector<double> r(static_cast<size_t>(n));
    auto sa = aligned_strides(a.shape(), shape);
    auto ad = a.data();
    std::vector<int64_t> idx(shape.size(), 0);
    int64_t ia = 0;
    for (int64_t i = 0; i < n; ++i) {
        r[i] = ad[ia];
        for (int64_t d = static_cast<int64_t>(shape.size()) - 1; d >= 0; --d) {
            ++idx[d];
            ia += sa[d];
            if (idx[d] < shape[d]) break;
            ia -= sa[d] * shape[d];
            idx[d] = 0;
        }
    }
    Shape in_shape = a.shape();
    return op_result(shape, std::move(r), {a},
                     [in_shape](const Tensor& g) -> std::vector<Tensor> {
                         return {reduce_to(g, in_shape)};
                     },
                     "broadcast_to");
}

Tensor reduce_to(const Tensor& a, const Shape& shape) {
    if (a.shape() == shape) return a;
    int64_t n = a.numel();
    std::vector<double> r(static_cast<size_t>(numel(shape)), 0.0);
    auto st = aligned_strides(shape, a.shape());
    auto ad = a.data();
    std::vector<int64_t> idx(a.shape().size(), 0);
    int64_t io = 0;
    const Shape& as = a.shape();
    for (int64_t i = 0; i < n; ++i) {
        r[io] += ad[i];
        for (int64_t d = static_cast<int64_t>(as.size()) - 1; d >= 0; --d) {
            ++idx[d];
            io += st[d];
            if (idx[d] < as[d]) break;
            io -= st[d] * as[d];
            idx[d] = 0;
        }
    }
    Shape in_shape = a.shape();
    return op_result(shape, std::move(r), {a},
                     [in_shape](const Tensor& g) -> std::vector<Tensor> {
                         return {broadcast_to(g, in_shape)};
                     },
                     "reduce_to");
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    Shape out = broadcast_shape(a.shape(), b.shape());
    auto r = broadcast_apply(a, b, out, [](double x, double y) { return x + y; });
    Shape sa = a.shape(), sb = b.shape();
    return op_result(out, std::move(r), {a, b},
                     [sa, sb](const Tensor& g) -> std::vector<Tensor> {
                         return {reduce_to(g, sa), reduce_to(g, sb)};
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Shape out = broadcast_shape(a.shape(), b.shape());
    auto r = broadcast_apply(a, b, out, [](double x, double y) { return x - y; });
    Shape sa = a.shape(), sb = b.shape();
    return op_result(out, std::move(r), {a, b},
                     [sa, sb](const Tensor& g) -> std::vector<Tensor> {
                         return {reduce_to(g, sa), reduce_to(neg(g), sb)};
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Shape out = broadcast_shape(a.shape(), b.shape());
    auto r = broadcast_apply(a, b, out, [](double x, double y) { return x * y; });
    Shape sa = a.shape(), sb = b.shape();
    return op_result(out, std::move(r), {a, b},
                     [a, b, sa, sb](const Tensor& g) -> std::vector<Tensor> {
                         return {reduce_to(mul(g, b), sa), reduce_to(mul(g, a), sb)};
                     },
                     "mul");
}

Tensor div_(const Tensor& a, const Tensor& b) {
    Shape out = broadcast_shape(a.shape(), b.shape());
    auto r = broadcast_apply(a, b, out, [](double x, double y) { return x / y; });
    Shape sa = a.shape(), sb = b.shape();
    return op_result(out, std::move(r), {a, b},
                     [a, b, sa, sb](const Tensor& g) -> std::vector<Tensor> {
                         Tensor ga = reduce_to(div_(g, b), sa);
                         Tensor gb = reduce_to(neg(div_(mul(g, a), square(b))), sb);
                         return {ga, gb};
                     },
                     "div");
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
    std::vector<double> r(a.data().begin(), a.data().end());
    for (double& v : r) v *= c;
    return op_result(a.shape(), std::move(r), {a},
                     [c](const Tensor& g) -> std::vector<Tensor> { return {scale(g, c)}; },
                     "scale");
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> r(a.data().begin(), a.data().end());
    for (double& v : r) v += c;
    return op_result(a.shape(), std::move(r), {a},
                     [](const Tensor& g) -> std::vector<Tensor> { return {g}; },
                     "add_scalar");
}

// unary with a constant (non-graph) multiplier as local derivative
static Tensor unary_const_deriv(const Tensor& a, std::vector<double> value,
                                std::vector<double> deriv, const char* op) {
    Tensor d = Tensor::from(a.shape(), std::move(deriv));
    return op_result(a.shape(), std::move(value), {a},
                     [d](const Tensor& g) -> std::vector<Tensor> { return {mul(g, d)}; }, op);
}

Tensor abs_(const Tensor& a) {
    size_t n = a.data().size();
    std::vector<double> v(n), d(n);
    auto ad = a.data();
    for (size_t i = 0; i < n; ++i) {
        v[i] = std::abs(ad[i]);
        d[i] = ad[i] > 0 ? 1.0 : (ad[i] < 0 ? -1.0 : 0.0);
    }
    return unary_const_deriv(a, std::move(v), std::move(d), "abs");
}

Tensor square(const Tensor& a) {
    size_t n = a.data().size();
    std::vector<double> v(n);
    auto ad = a.data();
    for (size_t i = 0; i < n; ++i) v[i] = ad[i] * ad[i];
    return op_result(a.shape(), std::move(v), {a},
                     [a](const Tensor& g) -> std::vector<Tensor> {
                         return {mul(g, scale(a, 2.0))};
                     },
                     "square");
}

Tensor sqrt_(const Tensor& a) {
    size_t n = a.data().size();
    std::vector<double> v(n), d(n);
    auto ad = a.data();
    for (size_t i = 0; i < n; ++i) {
        v[i] = std::sqrt(ad[i]);
        d[i] = 0.5 / v[i];
    }
    return unary_const_deriv(a, std::move(v), std::move(d), "sqrt");
}

Tensor rsqrt_(const Tensor& a) {
    size_t n = a.data().size();
    std::vector<double> v(n), d(n);
    auto ad = a.data();
    for (size_t i = 0; i < n; ++i) {
        v[i] = 1.0 / std::sqrt(ad[i]);
        d[i] = -0.5 * v[i] * v[i] * v[i];
    }
    return unary_const_deriv(a, std::move(v), std::move(d), "rsqrt");
}

Tensor leaky_relu(const Tensor& a, double slope) {
    size_t n = a.data().size();
    std::vector<double> v(n), d(n);
    auto ad = a.data();
    for (size_t i = 0; i < n; ++i) {
        bool pos = ad[i] > 0;
        v[i] = pos ? ad[i] : slope * ad[i];
        d[i] = pos ? 1.0 : slope;
    }
    return unary_const_deriv(a, std::move(v), std::move(d), "leaky_relu");
}

Tensor softplus(const Tensor& a) {
    size_t n = a.data().size();
    std::vector<double> v(n), d(n);
    auto ad = a.data();
    for (size_t i = 0; i < n; ++i) {
        double x = ad[i];
        if (x > 30)
            v[i] = x;
        else if (x < -30)
            v[i] = std::exp(x);
        else
            v[i] = std::log1p(std::exp(x));
        d[i] = 1.0 / (1.0 + std::exp(-x));
    }
    return unary_const_deriv(a, std::move(v), std::move(d), "softplus");
}

// ---------------------------------------------------------------------------
// reductions / shape

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Shape in = a.shape();
    return op_result({1}, {s}, {a},
                     [in](const Tensor& g) -> std::vector<Tensor> {
                         return {broadcast_to(g, in)};
                     },
                     "sum_all");
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_axes(const Tensor& a, const std::vector<int64_t>& axes) {
    Shape out = a.shape();
    for (int64_t ax : axes) out.at(static_cast<size_t>(ax)) = 1;
    return reduce_to(a, out);
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.numel())
        throw TensorError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                          " changes element count");
    std::vector<double> r(a.data().begin(), a.data().end());
    Shape in = a.shape();
    return op_result(std::move(shape), std::move(r), {a},
                     [in](const Tensor& g) -> std::vector<Tensor> { return {reshape(g, in)}; },
                     "reshape");
}

Tensor transpose2d(const Tensor& a) {
    if (a.ndim() != 2) throw TensorError("transpose2d expects rank 2, got " + shape_str(a.shape()));
    int64_t m = a.dim(0), n = a.dim(1);
    std::vector<double> r(static_cast<size_t>(m * n));
    auto ad = a.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) r[j * m + i] = ad[i * n + j];
    return op_result({n, m}, std::move(r), {a},
                     [](const Tensor& g) -> std::vector<Tensor> { return {transpose2d(g)}; },
                     "transpose2d");
}

// ---------------------------------------------------------------------------
// matmul / conv

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw TensorError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> r(static_cast<size_t>(m * n), 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (int64_t i = 0; i < m; ++i) {
        double* row = r.data() + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = ad[i * k + p];
            const double* brow = bd + p * n;
            for (int64_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    return op_result({m, n}, std::move(r), {a, b},
                     [a, b](const Tensor& g) -> std::vector<Tensor> {
                         return {matmul(g, transpose2d(b)), matmul(transpose2d(a), g)};
                     },
                     "matmul");
}

Tensor unfold(const Tensor& input, int64_t k, int64_t stride, int64_t pad) {
    if (input.ndim() != 3)
        throw TensorError("unfold expects [C,H,W], got " + shape_str(input.shape()));
    int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    int64_t Ho = (H + 2 * pad - k) / stride + 1;
    int64_t Wo = (W + 2 * pad - k) / stride + 1;
    if (Ho < 1 || Wo < 1)
        throw TensorError("unfold output would be empty for input " + shape_str(input.shape()));
    std::vector<double> r(static_cast<size_t>(C * k * k * Ho * Wo), 0.0);
    auto in = input.data();
    int64_t L = Ho * Wo;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
                int64_t row = (c * k + ky) * k + kx;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    int64_t iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        int64_t ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        r[row * L + oy * Wo + ox] = in[(c * H + iy) * W + ix];
                    }
                }
            }
    Shape in_shape = input.shape();
    return op_result({C * k * k, L}, std::move(r), {input},
                     [in_shape, k, stride, pad](const Tensor& g) -> std::vector<Tensor> {
                         return {fold(g, in_shape, k, stride, pad)};
                     },
                     "unfold");
}

Tensor fold(const Tensor& cols, const Shape& input_shape, int64_t k, int64_t stride, int64_t pad) {
    int64_t C = input_shape.at(0), H = input_shape.at(1), W = input_shape.at(2);
    int64_t Ho = (H + 2 * pad - k) / stride + 1;
    int64_t Wo = (W + 2 * pad - k) / stride + 1;
    int64_t L = Ho * Wo;
    if (cols.ndim() != 2 || cols.dim(0) != C * k * k || cols.dim(1) != L)
        throw TensorError("fold shape mismatch: cols " + shape_str(cols.shape()));
    std::vector<double> r(static_cast<size_t>(C * H * W), 0.0);
    auto cd = cols.data();
    for (int64_t c = 0; c < C; ++c)
        for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
                int64_t row = (c * k + ky) * k + kx;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    int64_t iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        int64_t ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        r[(c * H + iy) * W + ix] += cd[row * L + oy * Wo + ox];
                    }
                }
            }
    Shape in_shape = input_shape;
    return op_result(input_shape, std::move(r), {cols},
                     [in_shape, k, stride, pad](const Tensor& g) -> std::vector<Tensor> {
                         return {unfold(g, k, stride, pad)};
                     },
                     "fold");
}

Tensor conv2d(const Tensor& input, const Tensor& weight, int64_t pad, int64_t stride) {
    if (input.ndim() != 3)
        throw TensorError("conv2d input must be [C_in,H,W], got " + shape_str(input.shape()));
    if (weight.ndim() != 4)
        throw TensorError("conv2d weight must be [C_out,C_in,k,k], got " +
                          shape_str(weight.shape()));
    if (weight.dim(1) != input.dim(0))
        throw TensorError("conv2d channel mismatch: input C_in=" + std::to_string(input.dim(0)) +
                          " vs weight C_in=" + std::to_string(weight.dim(1)));
    if (weight.dim(2) != weight.dim(3))
        throw TensorError("conv2d kernel must be square, got " + shape_str(weight.shape()));
    int64_t k = weight.dim(2);
    int64_t Co = weight.dim(0);
    int64_t Ho = (input.dim(1) + 2 * pad - k) / stride + 1;
    int64_t Wo = (input.dim(2) + 2 * pad - k) / stride + 1;
    Tensor cols = unfold(input, k, stride, pad);
    Tensor wm = reshape(weight, {Co, weight.dim(1) * k * k});
    return reshape(matmul(wm, cols), {Co, Ho, Wo});
}

Tensor modulated_conv2d(const Tensor& input, const Tensor& weight, const Tensor& style,
                        bool demodulate, double eps) {
    if (style.ndim() != 1 || style.dim(0) != weight.dim(1))
        throw TensorError("modulated_conv2d style length " + shape_str(style.shape()) +
                          " does not match weight C_in=" + std::to_string(weight.dim(1)));
    for (double v : style.data())
        if (!std::isfinite(v)) throw TensorError("modulated_conv2d style contains non-finite value");
    Tensor s = reshape(style, {1, style.dim(0), 1, 1});
    Tensor wmod = mul(weight, s);
    if (demodulate) {
        Tensor norm = rsqrt_(add_scalar(sum_axes(square(wmod), {1, 2, 3}), eps));
        wmod = mul(wmod, norm);
    }
    int64_t k = weight.dim(2);
    return conv2d(input, wmod, (k - 1) / 2, 1);
}

Tensor upsample2x(const Tensor& a) {
    if (a.ndim() != 3) throw TensorError("upsample2x expects [C,H,W]");
    int64_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
    std::vector<double> r(static_cast<size_t>(C * 4 * H * W));
    auto ad = a.data();
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                double v = ad[(c * H + y) * W + x];
                int64_t base = (c * 2 * H + 2 * y) * 2 * W + 2 * x;
                r[base] = v;
                r[base + 1] = v;
                r[base + 2 * W] = v;
                r[base + 2 * W + 1] = v;
            }
    return op_result({C, 2 * H, 2 * W}, std::move(r), {a},
                     [](const Tensor& g) -> std::vector<Tensor> { return {sumpool2x(g)}; },
                     "upsample2x");
}

Tensor sumpool2x(const Tensor& a) {
    if (a.ndim() != 3 || a.dim(1) % 2 || a.dim(2) % 2)
        throw TensorError("sumpool2x expects even [C,H,W]");
    int64_t C = a.dim(0), H = a.dim(1) / 2, W = a.dim(2) / 2;
    std::vector<double> r(static_cast<size_t>(C * H * W));
    auto ad = a.data();
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                int64_t base = (c * 2 * H + 2 * y) * 2 * W + 2 * x;
                r[(c * H + y) * W + x] =
                    ad[base] + ad[base + 1] + ad[base + 2 * W] + ad[base + 2 * W + 1];
            }
    return op_result({C, H, W}, std::move(r), {a},
                     [](const Tensor& g) -> std::vector<Tensor> { return {upsample2x(g)}; },
                     "sumpool2x");
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double step) {
    if (step <= 0) throw TensorError("grad_check step must be positive");
    Tensor x = Tensor::from(point.shape(), {point.data().begin(), point.data().end()}, true);
    Tensor y = f(x);
    if (y.numel() != 1) throw TensorError("grad_check function must return a scalar");
    Gradients g = backward(y);
    std::vector<double> autodiff(static_cast<size_t>(x.numel()), 0.0);
    if (g.has(x)) {
        auto gd = g.grad(x).data();
        autodiff.assign(gd.begin(), gd.end());
    }
    double max_rel = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        std::vector<double> dp(point.data().begin(), point.data().end());
        dp[i] += step;
        double yp = f(Tensor::from(point.shape(), dp)).item();
        dp[i] -= 2 * step;
        double ym = f(Tensor::from(point.shape(), dp)).item();
        double fd = (yp - ym) / (2 * step);
        double rel = std::abs(autodiff[i] - fd) / std::max(1e-12, std::abs(fd));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace dcp
