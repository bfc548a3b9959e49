// SPDX-License-Identifier: Apache-2.0
#include "wifipath/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

#include "wifipath/errors.hpp"
#include "wifipath/rng.hpp"

namespace wifipath::tensor {

using NodePtr = std::shared_ptr<Node>;

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != value.size()) {
        grad.assign(value.size(), 0.0);
    }
    return grad;
}

// ---------------------------------------------------------------- kernels

namespace kernels {

namespace {

// Register-blocked c[4 x 8] tile over the whole k range.
inline void tile_4x8(std::size_t k, std::size_t n, const double* __restrict a, std::size_t lda,
                     const double* __restrict b, double* __restrict c, bool accumulate) {
#if defined(__AVX2__) && defined(__FMA__)
    __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
    __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
    __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
    __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * n);
        const __m256d b1 = _mm256_loadu_pd(b + p * n + 4);
        __m256d x = _mm256_broadcast_sd(a + p);
        c00 = _mm256_fmadd_pd(x, b0, c00);
        c01 = _mm256_fmadd_pd(x, b1, c01);
        x = _mm256_broadcast_sd(a + lda + p);
        c10 = _mm256_fmadd_pd(x, b0, c10);
        c11 = _mm256_fmadd_pd(x, b1, c11);
        x = _mm256_broadcast_sd(a + 2 * lda + p);
        c20 = _mm256_fmadd_pd(x, b0, c20);
        c21 = _mm256_fmadd_pd(x, b1, c21);
        x = _mm256_broadcast_sd(a + 3 * lda + p);
        c30 = _mm256_fmadd_pd(x, b0, c30);
        c31 = _mm256_fmadd_pd(x, b1, c31);
    }
    const __m256d rows[4][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}};
    for (int r = 0; r < 4; ++r) {
        double* cr = c + static_cast<std::size_t>(r) * n;
        if (accumulate) {
            _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), rows[r][0]));
            _mm256_storeu_pd(cr + 4, _mm256_add_pd(_mm256_loadu_pd(cr + 4), rows[r][1]));
        } else {
            _mm256_storeu_pd(cr, rows[r][0]);
            _mm256_storeu_pd(cr + 4, rows[r][1]);
        }
    }
#else
    double acc[4][8] = {};
    for (std::size_t p = 0; p < k; ++p) {
        for (int r = 0; r < 4; ++r) {
            const double x = a[static_cast<std::size_t>(r) * lda + p];
            for (int j = 0; j < 8; ++j) acc[r][j] += x * b[p * n + static_cast<std::size_t>(j)];
        }
    }
    for (int r = 0; r < 4; ++r) {
        double* cr = c + static_cast<std::size_t>(r) * n;
        for (int j = 0; j < 8; ++j) cr[j] = accumulate ? cr[j] + acc[r][j] : acc[r][j];
    }
#endif
}

// One row of c, columns [j0, j1), plain loops.
inline void row_span(std::size_t k, std::size_t n, const double* __restrict a, const double* __restrict b,
                     double* __restrict c, std::size_t j0, std::size_t j1, bool accumulate) {
    for (std::size_t j = j0; j < j1; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p * n + j];
        c[j] = accumulate ? c[j] + acc : acc;
    }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* __restrict a,
             const double* __restrict b, double* __restrict c, bool accumulate) {
    const std::size_t n8 = n - n % 8;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        for (std::size_t j = 0; j < n8; j += 8) {
            tile_4x8(k, n, a + i * k, k, b + j, c + i * n + j, accumulate);
        }
        for (std::size_t r = 0; r < 4; ++r) {
            row_span(k, n, a + (i + r) * k, b, c + (i + r) * n, n8, n, accumulate);
        }
    }
    for (; i < m; ++i) {
        row_span(k, n, a + i * k, b, c + i * n, 0, n, accumulate);
    }
}

void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const double* __restrict a,
                 const double* __restrict b, double* __restrict c) {
    std::vector<double> at(m * k);
    transpose(k, m, a, at.data());
    gemm_nn(m, k, n, at.data(), b, c, true);
}

void transpose(std::size_t m, std::size_t n, const double* __restrict in, double* __restrict out) {
    constexpr std::size_t kBlock = 32;
    for (std::size_t i0 = 0; i0 < m; i0 += kBlock) {
        for (std::size_t j0 = 0; j0 < n; j0 += kBlock) {
            const std::size_t i1 = std::min(m, i0 + kBlock);
            const std::size_t j1 = std::min(n, j0 + kBlock);
            for (std::size_t i = i0; i < i1; ++i) {
                for (std::size_t j = j0; j < j1; ++j) {
                    out[j * m + i] = in[i * n + j];
                }
            }
        }
    }
}

}  // namespace kernels

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value.assign(tensor::numel(shape), 0.0);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != tensor::numel(shape)) {
        throw Error("tensor of shape " + shape_string(shape) + " cannot hold " +
                    std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    std::vector<double> v(tensor::numel(shape));
    for (auto& x : v) {
        x = stddev * rng.normal();
    }
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
    std::vector<double> v(tensor::numel(shape));
    for (auto& x : v) {
        x = rng.uniform(lo, hi);
    }
    return from(std::move(shape), std::move(v), requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw Error("item() on tensor of shape " + shape_string(shape()));
    }
    return node_->value[0];
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

namespace {
thread_local bool grad_disabled = false;
}

void retain_freed_memory() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        return true;
    }();
    (void)done;
#endif
}

NoGradGuard::NoGradGuard() : previous_(grad_disabled) { grad_disabled = true; }
NoGradGuard::~NoGradGuard() { grad_disabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    const bool needs = !grad_disabled && std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
    if (needs) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& t : inputs) {
            node->inputs.push_back(t.node_ptr());
        }
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

Graph Graph::trace(const Tensor& root) {
    Graph g;
    if (!root.requires_grad()) {
        return g;
    }
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS: (node, next input index).
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(&root.node(), 0);
    seen.insert(&root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* in = node->inputs[next++].get();
            if (in->requires_grad && seen.insert(in).second) {
                stack.emplace_back(in, 0);
            }
        } else {
            g.order_.push_back(node);
            stack.pop_back();
        }
    }
    return g;
}

void backward(const Tensor& root) {
    if (!root.requires_grad()) {
        throw Error("backward on a tensor that does not require grad");
    }
    const Graph g = Graph::trace(root);
    for (Node* n : g.order()) {
        if (n->is_leaf()) {
            n->ensure_grad();
        } else {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    auto& seed = root.node().ensure_grad();
    for (auto& x : seed) {
        x += 1.0;
    }
    const auto order = g.order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (!(*it)->is_leaf()) {
            (*it)->backward(**it);
        }
    }
}

// ---------------------------------------------------------------- primitives

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw Error(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                    shape_string(b.shape()));
    }
}

// Grad buffer of an input, or nullptr when it needs none.
double* grad_of(const NodePtr& n) { return n->requires_grad ? n->ensure_grad().data() : nullptr; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw Error("matmul: shape mismatch " + shape_string(a.shape()) + " x " +
                    shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    kernels::gemm_nn(m, k, n, a.values().data(), b.values().data(), out.data(), false);
    NodePtr an = a.node_ptr(), bn = b.node_ptr();
    return make_result({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](Node& self) {
        const double* dc = self.grad.data();
        if (double* da = grad_of(an)) {
            // dA = dC * B^T
            std::vector<double> bt(k * n);
            kernels::transpose(k, n, bn->value.data(), bt.data());
            kernels::gemm_nn(m, n, k, dc, bt.data(), da, true);
        }
        if (double* db = grad_of(bn)) {
            // dB = A^T * dC
            kernels::gemm_tn_acc(k, m, n, an->value.data(), dc, db);
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] + bv[i];
    }
    NodePtr an = a.node_ptr(), bn = b.node_ptr();
    return make_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        for (const NodePtr& in : {an, bn}) {
            if (double* d = grad_of(in)) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    d[i] += self.grad[i];
                }
            }
        }
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0)) {
        throw Error("add_bias: shape mismatch " + shape_string(x.shape()) + " + " +
                    shape_string(bias.shape()));
    }
    const std::size_t n = bias.dim(0);
    const std::size_t rows = x.numel() / n;
    std::vector<double> out(x.values().begin(), x.values().end());
    const auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double* o = out.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) {
            o[j] += bv[j];
        }
    }
    NodePtr xn = x.node_ptr(), bn = bias.node_ptr();
    return make_result(x.shape(), std::move(out), {x, bias}, [xn, bn, rows, n](Node& self) {
        const double* g = self.grad.data();
        if (double* dx = grad_of(xn)) {
            for (std::size_t i = 0; i < rows * n; ++i) {
                dx[i] += g[i];
            }
        }
        if (double* db = grad_of(bn)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < n; ++j) {
                    db[j] += g[r * n + j];
                }
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] * b.values()[i];
    }
    NodePtr an = a.node_ptr(), bn = b.node_ptr();
    return make_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        const std::size_t n = self.grad.size();
        if (double* da = grad_of(an)) {
            for (std::size_t i = 0; i < n; ++i) da[i] += self.grad[i] * bn->value[i];
        }
        if (double* db = grad_of(bn)) {
            for (std::size_t i = 0; i < n; ++i) db[i] += self.grad[i] * an->value[i];
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (auto& v : out) {
        v *= factor;
    }
    NodePtr xn = x.node_ptr();
    return make_result(x.shape(), std::move(out), {x}, [xn, factor](Node& self) {
        if (double* dx = grad_of(xn)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += factor * self.grad[i];
        }
    });
}

Tensor sum(const Tensor& x) {
    const auto v = x.values();
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    NodePtr xn = x.node_ptr();
    return make_result({}, {total}, {x}, [xn](Node& self) {
        if (double* dx = grad_of(xn)) {
            for (std::size_t i = 0; i < xn->value.size(); ++i) dx[i] += self.grad[0];
        }
    });
}

Tensor gelu(const Tensor& x) {
    constexpr double kCubic = 0.044715;
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kCubic * v * v * v)));
    }
    NodePtr xn = x.node_ptr();
    return make_result(x.shape(), std::move(out), {x}, [xn](Node& self) {
        double* dx = grad_of(xn);
        if (!dx) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double v = xn->value[i];
            const double t = std::tanh(kGeluC * (v + kCubic * v * v * v));
            const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kCubic * v * v);
            dx[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
        }
    });
}

Tensor softmax(const Tensor& x) {
    if (x.rank() < 1 || x.shape().back() < 1) {
        throw Error("softmax: empty last axis");
    }
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * n;
        double* o = out.data() + r * n;
        const double mx = *std::max_element(in, in + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            o[j] /= z;
        }
    }
    NodePtr xn = x.node_ptr();
    return make_result(x.shape(), std::move(out), {x}, [xn, rows, n](Node& self) {
        double* dx = grad_of(xn);
        if (!dx) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * n;
            const double* g = self.grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1 || x.shape().back() < 1 || gain.numel() != x.shape().back() ||
        bias.numel() != x.shape().back()) {
        throw Error("layer_norm: shape mismatch " + shape_string(x.shape()) + " with affine " +
                    shape_string(gain.shape()));
    }
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    std::vector<double> out(x.numel());
    // Saved for backward: normalized values and 1/sigma per row.
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    const auto xv = x.values();
    const auto gv = gain.values();
    const auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += in[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (in[j] - mean) * is;
            (*xhat)[r * n + j] = h;
            out[r * n + j] = gv[j] * h + bv[j];
        }
    }
    NodePtr xn = x.node_ptr(), gn = gain.node_ptr(), bn = bias.node_ptr();
    return make_result(x.shape(), std::move(out), {x, gain, bias},
                       [xn, gn, bn, xhat, inv_std, rows, n](Node& self) {
        double* dx = grad_of(xn);
        double* dg = grad_of(gn);
        double* db = grad_of(bn);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = self.grad.data() + r * n;
            const double* h = xhat->data() + r * n;
            if (dg || db) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (dg) dg[j] += g[j] * h[j];
                    if (db) db[j] += g[j];
                }
            }
            if (dx) {
                double mean_dh = 0.0;
                double mean_dh_h = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dh = g[j] * gn->value[j];
                    mean_dh += dh;
                    mean_dh_h += dh * h[j];
                }
                mean_dh *= inv_n;
                mean_dh_h *= inv_n;
                const double is = (*inv_std)[r];
                for (std::size_t j = 0; j < n; ++j) {
                    const double dh = g[j] * gn->value[j];
                    dx[r * n + j] += is * (dh - mean_dh - h[j] * mean_dh_h);
                }
            }
        }
    });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    if (table.rank() != 2) {
        throw Error("embedding: table must be 2-D, got " + shape_string(table.shape()));
    }
    const std::size_t v = table.dim(0), d = table.dim(1);
    std::vector<double> out(ids.size() * d);
    const auto tv = table.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
            throw Error("embedding: id " + std::to_string(ids[i]) + " out of range for " +
                        std::to_string(v) + " rows");
        }
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
    }
    NodePtr tn = table.node_ptr();
    std::vector<int> saved(ids.begin(), ids.end());
    return make_result({ids.size(), d}, std::move(out), {table},
                       [tn, saved = std::move(saved), d](Node& self) {
        double* dt = grad_of(tn);
        if (!dt) return;
        for (std::size_t i = 0; i < saved.size(); ++i) {
            double* row = dt + static_cast<std::size_t>(saved[i]) * d;
            const double* g = self.grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) row[j] += g[j];
        }
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> gold) {
    std::vector<double> weights(gold.size(), 1.0);
    return cross_entropy(logits, gold, weights);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> gold, std::span<const double> weights) {
    if (logits.rank() != 2 || logits.dim(0) != gold.size() || weights.size() != gold.size()) {
        throw Error("cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                    std::to_string(gold.size()) + " targets");
    }
    const std::size_t b = logits.dim(0), c = logits.dim(1);
    double total_weight = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        if (weights[i] == 0.0) continue;
        if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= c) {
            throw Error("cross_entropy: gold class " + std::to_string(gold[i]) + " out of range [0," +
                        std::to_string(c) + ")");
        }
        total_weight += weights[i];
    }
    if (total_weight <= 0.0) {
        throw Error("cross_entropy: no counted rows");
    }
    auto probs = std::make_shared<std::vector<double>>(b * c, 0.0);
    double loss = 0.0;
    const auto lv = logits.values();
    for (std::size_t i = 0; i < b; ++i) {
        if (weights[i] == 0.0) continue;
        const double* z = lv.data() + i * c;
        double* p = probs->data() + i * c;
        const double mx = *std::max_element(z, z + c);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            p[j] = std::exp(z[j] - mx);
            s += p[j];
        }
        for (std::size_t j = 0; j < c; ++j) p[j] /= s;
        const double lse = mx + std::log(s);
        loss += weights[i] * (lse - z[gold[i]]);
    }
    loss /= total_weight;
    NodePtr ln = logits.node_ptr();
    std::vector<int> g(gold.begin(), gold.end());
    std::vector<double> w(weights.begin(), weights.end());
    return make_result({}, {loss}, {logits},
                       [ln, probs, g = std::move(g), w = std::move(w), b, c, total_weight](Node& self) {
        double* dl = grad_of(ln);
        if (!dl) return;
        const double up = self.grad[0] / total_weight;
        for (std::size_t i = 0; i < b; ++i) {
            if (w[i] == 0.0) continue;
            const double k = up * w[i];
            const double* p = probs->data() + i * c;
            double* d = dl + i * c;
            for (std::size_t j = 0; j < c; ++j) d[j] += k * p[j];
            d[g[i]] -= k;
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (tensor::numel(shape) != x.numel()) {
        throw Error("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    NodePtr xn = x.node_ptr();
    return make_result(std::move(shape), std::move(out), {x}, [xn](Node& self) {
        if (double* dx = grad_of(xn)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
        }
    });
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) {
        throw Error("transpose: expected 2-D, got " + shape_string(x.shape()));
    }
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(m * n);
    kernels::transpose(m, n, x.values().data(), out.data());
    NodePtr xn = x.node_ptr();
    return make_result({n, m}, std::move(out), {x}, [xn, m, n](Node& self) {
        double* dx = grad_of(xn);
        if (!dx) return;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += self.grad[j * m + i];
        }
    });
}

Tensor swap_axes12(const Tensor& x) {
    if (x.rank() != 4) {
        throw Error("swap_axes12: expected 4-D, got " + shape_string(x.shape()));
    }
    const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            for (std::size_t k = 0; k < c; ++k) {
                std::copy_n(xv.data() + ((i * b + j) * c + k) * d, d,
                            out.data() + ((i * c + k) * b + j) * d);
            }
        }
    }
    NodePtr xn = x.node_ptr();
    return make_result({a, c, b, d}, std::move(out), {x}, [xn, a, b, c, d](Node& self) {
        double* dx = grad_of(xn);
        if (!dx) return;
        for (std::size_t i = 0; i < a; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                for (std::size_t k = 0; k < c; ++k) {
                    double* dst = dx + ((i * b + j) * c + k) * d;
                    const double* src = self.grad.data() + ((i * c + k) * b + j) * d;
                    for (std::size_t e = 0; e < d; ++e) dst[e] += src[e];
                }
            }
        }
    });
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
    if (x.rank() != 2) {
        throw Error("select_rows: expected 2-D, got " + shape_string(x.shape()));
    }
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(rows.size() * d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= n) {
            throw Error("select_rows: row " + std::to_string(rows[i]) + " out of range");
        }
        std::copy_n(x.values().data() + rows[i] * d, d, out.data() + i * d);
    }
    NodePtr xn = x.node_ptr();
    std::vector<std::size_t> saved(rows.begin(), rows.end());
    return make_result({rows.size(), d}, std::move(out), {x}, [xn, saved = std::move(saved), d](Node& self) {
        double* dx = grad_of(xn);
        if (!dx) return;
        for (std::size_t i = 0; i < saved.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) dx[saved[i] * d + j] += self.grad[i * d + j];
        }
    });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
    if (p <= 0.0) {
        return x;
    }
    if (p >= 1.0) {
        throw Error("dropout probability must be below 1");
    }
    const double keep = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>(x.numel());
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = rng.uniform() < p ? 0.0 : keep;
        out[i] = x.values()[i] * (*mask)[i];
    }
    NodePtr xn = x.node_ptr();
    return make_result(x.shape(), std::move(out), {x}, [xn, mask](Node& self) {
        if (double* dx = grad_of(xn)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i] * (*mask)[i];
        }
    });
}

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps) {
    for (auto& p : params) {
        p.zero_grad();
    }
    backward(f());
    double worst = 0.0;
    for (auto& p : params) {
        const std::vector<double> analytic(p.grad().begin(), p.grad().end());
        auto values = p.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = f().item();
            values[i] = saved - eps;
            const double down = f().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace wifipath::tensor
