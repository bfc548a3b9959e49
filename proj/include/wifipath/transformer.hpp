// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wifipath/tensor.hpp"
#include "wifipath/tokenizer.hpp"

namespace wifipath {
class Rng;
}

namespace wifipath::model {

using tensor::Tensor;

enum class Arch { Encoder, Decoder };
std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);

struct ModelConfig {
    Arch arch = Arch::Encoder;
    std::size_t vocab_size = 0;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ffn = 256;
    std::size_t max_len = tokenizer::kDefaultMaxLen;
    std::size_t n_classes = 4;
    double dropout = 0.0;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    bool operator==(const ModelConfig&) const = default;
};

/// Low-rank update attached to a Linear: y += (alpha / rank) * (x A^T) B^T.
struct Adapter {
    Tensor a;  // [rank, d_in]
    Tensor b;  // [d_out, rank]
    std::size_t rank = 0;
    double alpha = 0.0;

    double scaling() const { return alpha / static_cast<double>(rank); }
};

/// y = x W + bias with W stored [d_in, d_out].
struct Linear {
    Tensor weight;
    Tensor bias;
    std::optional<Adapter> adapter;

    std::size_t d_in() const { return weight.dim(0); }
    std::size_t d_out() const { return weight.dim(1); }
    Tensor forward(const Tensor& x) const;
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;
};

struct Block {
    LayerNormParams ln1;
    Linear wq, wk, wv, wo;
    LayerNormParams ln2;
    Linear ffn1, ffn2;
};

/// Pre-norm transformer. The encoder carries a classification head read from
/// position 0; the decoder's LM head is the transposed token embedding.
struct ModelParams {
    ModelConfig config;
    Tensor token_embedding;     // [vocab, d_model]
    Tensor position_embedding;  // [max_len, d_model]
    std::vector<Block> blocks;
    LayerNormParams final_norm;
    Linear head;  // encoder only: [d_model, n_classes]

    bool has_adapters() const;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

enum class TensorSet { All, Base, Adapters };

/// Canonical order: embeddings, blocks (ln1, wq, wk, wv, wo, ln2, ffn1, ffn2;
/// adapter tensors right after their linear), final norm, head.
std::vector<NamedTensor> named_tensors(const ModelParams& params, TensorSet set = TensorSet::All);

/// Token embedding and classifier head ~ N(0, 0.02); projection weights
/// ~ N(0, 1/d_in); position embedding starts as a sinusoid table scaled by
/// 0.3; biases 0, layer-norm gains 1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Deep copy; the result shares no storage with `params`.
ModelParams clone(const ModelParams& params);

std::size_t count_parameters(const ModelParams& params, bool trainable_only = false);

/// vocab*d + max_len*d
///   + n_layers * (4*(d*d + d) + (d*f + f) + (f*d + d) + 4*d)
///   + 2*d
///   + (encoder only) d*n_classes + n_classes
std::uint64_t closed_form_parameter_count(const ModelConfig& config);

void set_trainable(ModelParams& params, bool trainable);

/// Padded token ids for one forward pass, row-major [batch, len].
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t len = 0;
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
};

/// Stacks sequences. With `trim`, the length is cut to the longest unpadded
/// row; PAD is suffix-only so this drops PAD columns only.
TokenBatch make_batch(std::span<const tokenizer::TokenSeq* const> rows, bool trim = true);
TokenBatch make_batch(std::span<const tokenizer::TokenSeq> rows, bool trim = true);

struct AttentionMask {
    std::size_t batch = 0;
    std::size_t len = 0;
    /// [batch, len]; 0 marks keys nobody may attend to.
    std::vector<std::uint8_t> key_valid;
    bool causal = false;
};

inline constexpr double kMaskedScore = -1e9;

/// softmax(q k^T / sqrt(dh) + mask) v on [b, h, t, dh] inputs; masked scores
/// get kMaskedScore added before the softmax.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask);

struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout > 0
};

/// Logits [batch, n_classes] from the [CLS] representation (first token).
/// Position-embedding rows are indexed back from each row's last real
/// token: the final token reads row 0, the one before it row 1, and so on.
Tensor encoder_forward(const ModelParams& params, const TokenBatch& batch, ForwardContext ctx = {});
/// Logits [batch, len, vocab] under a causal mask; position rows count from 0.
Tensor decoder_forward(const ModelParams& params, const TokenBatch& batch, ForwardContext ctx = {});

}  // namespace wifipath::model
