#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace dcp {

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct TensorNode;

// Gradient of a node w.r.t. its parents. Returned tensors are themselves
// graph nodes, so gradients of gradients (e.g. the R1 penalty) work for the
// linear ops and elementwise products used inside the discriminator.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

/// Dense row-major float64 tensor. A Tensor is a cheap handle to a shared
/// node; nodes recording parents form the autodiff graph.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    int64_t dim(size_t i) const { return shape().at(i); }
    size_t ndim() const { return shape().size(); }
    bool requires_grad() const;

    std::span<const double> data() const;
    // Exposed for optimizer updates between training steps; never mutate a
    // tensor that is part of a live graph.
    std::span<double> mutable_data();

    double item() const;
    double at(int64_t flat_index) const;

    /// Same data, detached from the graph (no parents, no grad).
    Tensor detach() const;

    const TensorNode* node() const { return node_.get(); }

    // internal
    static Tensor make(Shape shape, std::vector<double> data, bool requires_grad,
                       std::vector<Tensor> parents, BackwardFn backward, const char* op);
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    BackwardFn backward;
    const char* op = "leaf";
};

/// Result of reverse-mode differentiation: gradient tensors keyed by node.
class Gradients {
public:
    bool has(const Tensor& t) const;
    const Tensor& grad(const Tensor& t) const;
    std::unordered_map<const TensorNode*, Tensor> by_node;
};

/// Reverse-mode backward pass from a scalar loss. Gradients are produced for
/// every requires_grad tensor reachable from the loss.
Gradients backward(const Tensor& loss);

// ---- elementwise / broadcasting ops (numpy-style trailing-dim broadcast) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div_(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor abs_(const Tensor& a);       // d|x|/dx at 0 is taken as 0
Tensor square(const Tensor& a);
Tensor sqrt_(const Tensor& a);
Tensor rsqrt_(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor softplus(const Tensor& a);

// ---- reductions / shape ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_axes(const Tensor& a, const std::vector<int64_t>& axes);  // keepdims
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose2d(const Tensor& a);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor reduce_to(const Tensor& a, const Shape& shape);

// ---- linear algebra / conv ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]

Tensor unfold(const Tensor& input, int64_t k, int64_t stride, int64_t pad);
Tensor fold(const Tensor& cols, const Shape& input_shape, int64_t k, int64_t stride, int64_t pad);

/// Cross-correlation with zero padding, input [C_in,H,W], weight [C_out,C_in,k,k].
Tensor conv2d(const Tensor& input, const Tensor& weight, int64_t pad, int64_t stride = 1);

/// StyleGAN2-style modulated convolution: weight scaled per input channel by
/// `style`, optionally demodulated per output filter, then conv2d with same
/// padding.
Tensor modulated_conv2d(const Tensor& input, const Tensor& weight, const Tensor& style,
                        bool demodulate, double eps = 1e-8);

Tensor upsample2x(const Tensor& a);   // nearest neighbor, [C,H,W] -> [C,2H,2W]
Tensor sumpool2x(const Tensor& a);    // adjoint of upsample2x

/// Max over coordinates of |autodiff - central difference| / max(1e-12, |cd|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double step);

}  // namespace dcp
