// SPDX-License-Identifier: Apache-2.0
#include "wifipath/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wifipath/errors.hpp"
#include "wifipath/rng.hpp"

namespace wifipath::model {

using tensor::Node;
using tensor::Shape;

namespace {

constexpr double kEmbeddingStd = 0.02;
constexpr double kHeadStd = 0.02;
constexpr double kPositionScale = 0.3;

Linear make_linear(std::size_t d_in, std::size_t d_out, Rng& rng, double stddev) {
    return Linear{Tensor::randn({d_in, d_out}, rng, stddev, true), Tensor::zeros({d_out}, true), std::nullopt};
}

// Fan-in scaled: unit-variance inputs give unit-variance outputs.
Linear make_linear(std::size_t d_in, std::size_t d_out, Rng& rng) {
    return make_linear(d_in, d_out, rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
}

Tensor sinusoid_table(std::size_t rows, std::size_t d, double scale) {
    std::vector<double> v(rows * d);
    for (std::size_t t = 0; t < rows; ++t) {
        for (std::size_t i = 0; i + 1 < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            v[t * d + i] = scale * std::sin(static_cast<double>(t) * freq);
            v[t * d + i + 1] = scale * std::cos(static_cast<double>(t) * freq);
        }
    }
    return Tensor::from({rows, d}, std::move(v), true);
}

LayerNormParams make_norm(std::size_t d) {
    return LayerNormParams{Tensor::from({d}, std::vector<double>(d, 1.0), true), Tensor::zeros({d}, true)};
}

Tensor copy_tensor(const Tensor& t) {
    if (!t.defined()) return t;
    auto out = t.detach();
    out.set_requires_grad(t.requires_grad());
    return out;
}

Linear copy_linear(const Linear& l) {
    Linear out{copy_tensor(l.weight), copy_tensor(l.bias), std::nullopt};
    if (l.adapter) {
        out.adapter = Adapter{copy_tensor(l.adapter->a), copy_tensor(l.adapter->b), l.adapter->rank,
                              l.adapter->alpha};
    }
    return out;
}

LayerNormParams copy_norm(const LayerNormParams& n) {
    return LayerNormParams{copy_tensor(n.gain), copy_tensor(n.bias)};
}

void push_linear(std::vector<NamedTensor>& out, const std::string& name, const Linear& l, TensorSet set) {
    if (set != TensorSet::Adapters) {
        out.push_back({name + ".weight", l.weight});
        out.push_back({name + ".bias", l.bias});
    }
    if (l.adapter && set != TensorSet::Base) {
        out.push_back({name + ".lora_a", l.adapter->a});
        out.push_back({name + ".lora_b", l.adapter->b});
    }
}

void push_norm(std::vector<NamedTensor>& out, const std::string& name, const LayerNormParams& n,
               TensorSet set) {
    if (set == TensorSet::Adapters) return;
    out.push_back({name + ".gain", n.gain});
    out.push_back({name + ".bias", n.bias});
}

void check_batch(const ModelParams& params, const TokenBatch& batch) {
    if (batch.batch == 0 || batch.len == 0) {
        throw Error("empty token batch");
    }
    if (batch.ids.size() != batch.batch * batch.len || batch.mask.size() != batch.ids.size()) {
        throw Error("token batch buffers do not match its shape");
    }
    if (batch.len > params.config.max_len) {
        throw Error("sequence length " + std::to_string(batch.len) + " exceeds max_len " +
                    std::to_string(params.config.max_len));
    }
    for (int id : batch.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= params.config.vocab_size) {
            throw Error("token id " + std::to_string(id) + " outside the vocabulary");
        }
    }
}

Tensor maybe_dropout(const Tensor& x, const ModelParams& params, const ForwardContext& ctx) {
    if (!ctx.training || params.config.dropout <= 0.0) {
        return x;
    }
    if (ctx.rng == nullptr) {
        throw Error("dropout needs a random source");
    }
    return tensor::dropout(x, params.config.dropout, *ctx.rng);
}

// Shared trunk: embeddings, blocks, final norm. Returns [batch*len, d_model].
Tensor trunk(const ModelParams& params, const TokenBatch& batch, bool causal, const ForwardContext& ctx) {
    check_batch(params, batch);
    const auto& cfg = params.config;
    const std::size_t b = batch.batch, t = batch.len, d = cfg.d_model, h = cfg.n_heads;
    const std::size_t dh = d / h;

    // The decoder counts positions from the start. The encoder counts them
    // back from the last real token, so the tail of every prompt lines up.
    std::vector<int> positions(b * t, 0);
    for (std::size_t r = 0; r < b; ++r) {
        std::size_t n = t;
        if (!causal) {
            n = 0;
            for (std::size_t p = 0; p < t; ++p) n += batch.mask[r * t + p] != 0;
        }
        for (std::size_t p = 0; p < n; ++p) {
            positions[r * t + p] = static_cast<int>(causal ? p : n - 1 - p);
        }
    }
    Tensor x = tensor::add(tensor::embedding(params.token_embedding, batch.ids),
                           tensor::embedding(params.position_embedding, positions));
    x = maybe_dropout(x, params, ctx);

    AttentionMask mask{b, t, batch.mask, causal};
    auto heads = [&](const Tensor& y) { return tensor::swap_axes12(tensor::reshape(y, {b, t, h, dh})); };

    for (const auto& blk : params.blocks) {
        const Tensor n1 = tensor::layer_norm(x, blk.ln1.gain, blk.ln1.bias);
        const Tensor q = heads(blk.wq.forward(n1));
        const Tensor k = heads(blk.wk.forward(n1));
        const Tensor v = heads(blk.wv.forward(n1));
        const Tensor att = tensor::reshape(tensor::swap_axes12(attention(q, k, v, mask)), {b * t, d});
        x = tensor::add(x, maybe_dropout(blk.wo.forward(att), params, ctx));

        const Tensor n2 = tensor::layer_norm(x, blk.ln2.gain, blk.ln2.bias);
        const Tensor f = blk.ffn2.forward(tensor::gelu(blk.ffn1.forward(n2)));
        x = tensor::add(x, maybe_dropout(f, params, ctx));
    }
    return tensor::layer_norm(x, params.final_norm.gain, params.final_norm.bias);
}

}  // namespace

std::string_view arch_name(Arch arch) { return arch == Arch::Encoder ? "encoder" : "decoder"; }

Arch parse_arch(std::string_view name) {
    if (name == "encoder") return Arch::Encoder;
    if (name == "decoder") return Arch::Decoder;
    throw Error("unknown architecture \"" + std::string(name) + "\"");
}

void ModelConfig::validate() const {
    if (vocab_size <= static_cast<std::size_t>(tokenizer::kNumSpecials)) {
        throw Error("vocab_size must exceed the special tokens");
    }
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw Error("d_model must be a positive multiple of n_heads");
    }
    if (n_layers == 0 || d_ffn == 0 || max_len == 0) {
        throw Error("n_layers, d_ffn and max_len must be positive");
    }
    if (arch == Arch::Encoder && n_classes != 4) {
        throw Error("the classifier has exactly 4 classes");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw Error("dropout must be in [0, 1)");
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {{"arch", arch_name(arch)}, {"vocab_size", vocab_size}, {"d_model", d_model},
            {"n_heads", n_heads},      {"n_layers", n_layers},     {"d_ffn", d_ffn},
            {"max_len", max_len},      {"n_classes", n_classes},   {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.arch = parse_arch(j.at("arch").get<std::string>());
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.d_ffn = j.at("d_ffn").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.validate();
    return c;
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = tensor::add_bias(tensor::matmul(x, weight), bias);
    if (adapter) {
        const Tensor low = tensor::matmul(x, tensor::transpose(adapter->a));
        const Tensor delta = tensor::matmul(low, tensor::transpose(adapter->b));
        y = tensor::add(y, tensor::scale(delta, adapter->scaling()));
    }
    return y;
}

bool ModelParams::has_adapters() const {
    for (const auto& blk : blocks) {
        for (const Linear* l : {&blk.wq, &blk.wk, &blk.wv, &blk.wo, &blk.ffn1, &blk.ffn2}) {
            if (l->adapter) return true;
        }
    }
    return false;
}

std::vector<NamedTensor> named_tensors(const ModelParams& params, TensorSet set) {
    std::vector<NamedTensor> out;
    if (set != TensorSet::Adapters) {
        out.push_back({"token_embedding", params.token_embedding});
        out.push_back({"position_embedding", params.position_embedding});
    }
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        const auto& blk = params.blocks[i];
        const std::string p = "blocks." + std::to_string(i);
        push_norm(out, p + ".ln1", blk.ln1, set);
        push_linear(out, p + ".attn.wq", blk.wq, set);
        push_linear(out, p + ".attn.wk", blk.wk, set);
        push_linear(out, p + ".attn.wv", blk.wv, set);
        push_linear(out, p + ".attn.wo", blk.wo, set);
        push_norm(out, p + ".ln2", blk.ln2, set);
        push_linear(out, p + ".ffn.w1", blk.ffn1, set);
        push_linear(out, p + ".ffn.w2", blk.ffn2, set);
    }
    push_norm(out, "final_norm", params.final_norm, set);
    if (params.config.arch == Arch::Encoder) {
        push_linear(out, "head", params.head, set);
    }
    return out;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const std::size_t d = config.d_model;
    ModelParams p;
    p.config = config;
    p.token_embedding = Tensor::randn({config.vocab_size, d}, rng, kEmbeddingStd, true);
    p.position_embedding = sinusoid_table(config.max_len, d, kPositionScale);
    for (std::size_t i = 0; i < config.n_layers; ++i) {
        Block blk;
        blk.ln1 = make_norm(d);
        blk.wq = make_linear(d, d, rng);
        blk.wk = make_linear(d, d, rng);
        blk.wv = make_linear(d, d, rng);
        blk.wo = make_linear(d, d, rng);
        blk.ln2 = make_norm(d);
        blk.ffn1 = make_linear(d, config.d_ffn, rng);
        blk.ffn2 = make_linear(config.d_ffn, d, rng);
        p.blocks.push_back(std::move(blk));
    }
    p.final_norm = make_norm(d);
    if (config.arch == Arch::Encoder) {
        p.head = make_linear(d, config.n_classes, rng, kHeadStd);
    }
    return p;
}

ModelParams clone(const ModelParams& params) {
    ModelParams out;
    out.config = params.config;
    out.token_embedding = copy_tensor(params.token_embedding);
    out.position_embedding = copy_tensor(params.position_embedding);
    for (const auto& blk : params.blocks) {
        out.blocks.push_back(Block{copy_norm(blk.ln1), copy_linear(blk.wq), copy_linear(blk.wk),
                                   copy_linear(blk.wv), copy_linear(blk.wo), copy_norm(blk.ln2),
                                   copy_linear(blk.ffn1), copy_linear(blk.ffn2)});
    }
    out.final_norm = copy_norm(params.final_norm);
    if (params.head.weight.defined()) {
        out.head = copy_linear(params.head);
    }
    return out;
}

std::size_t count_parameters(const ModelParams& params, bool trainable_only) {
    std::size_t total = 0;
    for (const auto& nt : named_tensors(params)) {
        if (!trainable_only || nt.tensor.requires_grad()) {
            total += nt.tensor.numel();
        }
    }
    return total;
}

std::uint64_t closed_form_parameter_count(const ModelConfig& c) {
    const std::uint64_t d = c.d_model, f = c.d_ffn;
    std::uint64_t total = c.vocab_size * d + c.max_len * d;
    total += c.n_layers * (4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d);
    total += 2 * d;
    if (c.arch == Arch::Encoder) {
        total += d * c.n_classes + c.n_classes;
    }
    return total;
}

void set_trainable(ModelParams& params, bool trainable) {
    for (auto& nt : named_tensors(params)) {
        nt.tensor.set_requires_grad(trainable);
    }
}

TokenBatch make_batch(std::span<const tokenizer::TokenSeq* const> rows, bool trim) {
    if (rows.empty()) {
        throw Error("empty token batch");
    }
    const std::size_t full = rows.front()->ids.size();
    std::size_t len = 0;
    for (const auto* r : rows) {
        if (r->ids.size() != full || r->attention_mask.size() != full) {
            throw Error("token sequences in a batch must share one padded length");
        }
        len = std::max(len, r->length);
    }
    if (!trim) {
        len = full;
    }
    len = std::max<std::size_t>(len, 1);
    TokenBatch out;
    out.batch = rows.size();
    out.len = len;
    out.ids.reserve(out.batch * len);
    out.mask.reserve(out.batch * len);
    for (const auto* r : rows) {
        out.ids.insert(out.ids.end(), r->ids.begin(), r->ids.begin() + static_cast<std::ptrdiff_t>(len));
        out.mask.insert(out.mask.end(), r->attention_mask.begin(),
                        r->attention_mask.begin() + static_cast<std::ptrdiff_t>(len));
    }
    return out;
}

TokenBatch make_batch(std::span<const tokenizer::TokenSeq> rows, bool trim) {
    std::vector<const tokenizer::TokenSeq*> ptrs;
    ptrs.reserve(rows.size());
    for (const auto& r : rows) ptrs.push_back(&r);
    return make_batch(std::span<const tokenizer::TokenSeq* const>(ptrs), trim);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask) {
    if (q.rank() != 4 || q.shape() != k.shape() || q.shape() != v.shape()) {
        throw Error("attention: shape mismatch q" + tensor::shape_string(q.shape()) + " k" +
                    tensor::shape_string(k.shape()) + " v" + tensor::shape_string(v.shape()));
    }
    const std::size_t b = q.dim(0), h = q.dim(1), t = q.dim(2), dh = q.dim(3);
    if (mask.batch != b || mask.len != t || mask.key_valid.size() != b * t) {
        throw Error("attention: mask does not match [" + std::to_string(b) + "," + std::to_string(t) + "]");
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t tt = t * t, td = t * dh;

    auto probs = std::make_shared<std::vector<double>>(b * h * tt);
    std::vector<double> out(b * h * td);
    std::vector<double> kt(td);
    const double* qv = q.values().data();
    const double* kv = k.values().data();
    const double* vv = v.values().data();
    for (std::size_t bi = 0; bi < b; ++bi) {
        const std::uint8_t* valid = mask.key_valid.data() + bi * t;
        for (std::size_t hi = 0; hi < h; ++hi) {
            const std::size_t slab = bi * h + hi;
            double* p = probs->data() + slab * tt;
            tensor::kernels::transpose(t, dh, kv + slab * td, kt.data());
            tensor::kernels::gemm_nn(t, dh, t, qv + slab * td, kt.data(), p, false);
            for (std::size_t i = 0; i < t; ++i) {
                double* row = p + i * t;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < t; ++j) {
                    row[j] *= s;
                    if (!valid[j] || (mask.causal && j > i)) row[j] += kMaskedScore;
                    mx = std::max(mx, row[j]);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < t; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    z += row[j];
                }
                const double inv = 1.0 / z;
                for (std::size_t j = 0; j < t; ++j) row[j] *= inv;
            }
            tensor::kernels::gemm_nn(t, t, dh, p, vv + slab * td, out.data() + slab * td, false);
        }
    }

    auto qn = q.node_ptr(), kn = k.node_ptr(), vn = v.node_ptr();
    return tensor::make_result(q.shape(), std::move(out), {q, k, v},
                               [qn, kn, vn, probs, b, h, t, dh, s](Node& self) {
        const std::size_t tt = t * t, td = t * dh;
        double* dq = qn->requires_grad ? qn->ensure_grad().data() : nullptr;
        double* dk = kn->requires_grad ? kn->ensure_grad().data() : nullptr;
        double* dv = vn->requires_grad ? vn->ensure_grad().data() : nullptr;
        std::vector<double> vt(td), dp(tt);
        for (std::size_t slab = 0; slab < b * h; ++slab) {
            const double* p = probs->data() + slab * tt;
            const double* dout = self.grad.data() + slab * td;
            if (dv) {
                // dV = P^T dO
                tensor::kernels::gemm_tn_acc(t, t, dh, p, dout, dv + slab * td);
            }
            if (!dq && !dk) continue;
            // dP = dO V^T, then dS = P * (dP - rowsum(dP * P)) * scale.
            tensor::kernels::transpose(t, dh, vn->value.data() + slab * td, vt.data());
            tensor::kernels::gemm_nn(t, dh, t, dout, vt.data(), dp.data(), false);
            for (std::size_t i = 0; i < t; ++i) {
                const double* pr = p + i * t;
                double* g = dp.data() + i * t;
                double dot = 0.0;
                for (std::size_t j = 0; j < t; ++j) dot += g[j] * pr[j];
                for (std::size_t j = 0; j < t; ++j) g[j] = pr[j] * (g[j] - dot) * s;
            }
            if (dq) {
                tensor::kernels::gemm_nn(t, t, dh, dp.data(), kn->value.data() + slab * td,
                                         dq + slab * td, true);
            }
            if (dk) {
                tensor::kernels::gemm_tn_acc(t, t, dh, dp.data(), qn->value.data() + slab * td,
                                             dk + slab * td);
            }
        }
    });
}

Tensor encoder_forward(const ModelParams& params, const TokenBatch& batch, ForwardContext ctx) {
    if (params.config.arch != Arch::Encoder) {
        throw Error("encoder_forward needs an encoder model");
    }
    const Tensor hidden = trunk(params, batch, false, ctx);
    std::vector<std::size_t> cls(batch.batch);
    for (std::size_t r = 0; r < batch.batch; ++r) cls[r] = r * batch.len;
    return params.head.forward(tensor::select_rows(hidden, cls));
}

Tensor decoder_forward(const ModelParams& params, const TokenBatch& batch, ForwardContext ctx) {
    if (params.config.arch != Arch::Decoder) {
        throw Error("decoder_forward needs a decoder model");
    }
    const Tensor hidden = trunk(params, batch, true, ctx);
    const Tensor logits = tensor::matmul(hidden, tensor::transpose(params.token_embedding));
    return tensor::reshape(logits, {batch.batch, batch.len, params.config.vocab_size});
}

}  // namespace wifipath::model
