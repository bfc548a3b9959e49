// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wifipath {
class Rng;
}

namespace wifipath::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// One value in the computation graph. Leaves are parameters or inputs;
/// interior nodes carry the closure that pushes their gradient to `inputs`.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    bool is_leaf() const noexcept { return !backward; }
    /// Allocates a zero gradient if none exists yet.
    std::vector<double>& ensure_grad();
};

/// Shared handle to a graph node. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    /// Normal(0, stddev) entries.
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
    /// Uniform(lo, hi) entries.
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<double> values() { return node_->value; }
    std::span<const double> values() const { return node_->value; }
    /// Empty until a backward pass reaches this tensor.
    std::span<double> grad() { return node_->grad; }
    std::span<const double> grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }

    double item() const;
    double at(std::size_t flat) const { return node_->value.at(flat); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }
    void zero_grad();

    /// Leaf copy of the current values.
    Tensor detach() const;

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Keeps large freed tensor buffers in the heap instead of returning them to
/// the OS, so per-step graph allocations stop page-faulting. Process-wide and
/// idempotent; a no-op outside glibc.
void retain_freed_memory();

/// While alive, op results on this thread record no graph (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds an op result. When no input requires a gradient the result is a
/// plain leaf and `backward` is dropped.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

/// Nodes reachable from a root, in topological order (inputs before users).
class Graph {
public:
    static Graph trace(const Tensor& root);
    std::span<Node* const> order() const { return order_; }

private:
    std::vector<Node*> order_;
};

/// Seeds d(root)/d(root) = 1 and runs every backward closure in reverse
/// topological order. Leaf gradients accumulate across calls.
void backward(const Tensor& root);

// Primitives. All shapes are row-major.

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
/// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);
/// tanh approximation.
Tensor gelu(const Tensor& x);
/// Along the last axis, max-subtracted.
Tensor softmax(const Tensor& x);
/// Normalizes the last axis with population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// Rows of `table` [v,d] picked by `ids` -> [|ids|, d].
Tensor embedding(const Tensor& table, std::span<const int> ids);
/// Mean over rows of -log softmax(logits)[gold].
Tensor cross_entropy(const Tensor& logits, std::span<const int> gold);
/// As cross_entropy, restricted to rows whose weight is non-zero; the mean is
/// weighted. Gold is only range-checked on counted rows.
Tensor cross_entropy(const Tensor& logits, std::span<const int> gold, std::span<const double> weights);
Tensor reshape(const Tensor& x, Shape shape);
/// [m,n] -> [n,m]
Tensor transpose(const Tensor& x);
/// [a,b,c,d] -> [a,c,b,d]
Tensor swap_axes12(const Tensor& x);
/// Rows of x[n,d] -> [|rows|, d].
Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);
/// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

/// GELU tanh-approximation constant sqrt(2/pi).
inline constexpr double kGeluC = 0.7978845608;

/// Largest elementwise |a - n| / max(|a|, |n|, 1e-8) between reverse-mode
/// gradients and central differences of the scalar `f` w.r.t. `params`.
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps = 1e-5);

namespace kernels {
/// c[m,n] (+)= a[m,k] * b[k,n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
/// c[m,n] += a[k,m]^T * b[k,n]
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                 double* c);
/// out[n,m] = in[m,n]
void transpose(std::size_t m, std::size_t n, const double* in, double* out);
}  // namespace kernels

}  // namespace wifipath::tensor
