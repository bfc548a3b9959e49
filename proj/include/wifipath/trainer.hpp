// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wifipath/dataset.hpp"
#include "wifipath/tokenizer.hpp"
#include "wifipath/transformer.hpp"

namespace wifipath::train {

struct TrainConfig {
    double learning_rate = 3e-4;
    std::size_t batch_size = 32;
    std::size_t epochs = 3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;
    bool shuffle = true;
    /// Clip the global gradient norm to `clip_norm` before each step.
    bool clip_grad = false;
    double clip_norm = 1.0;
    /// Causal only: count completion tokens in the loss, not the prompt.
    bool completion_only_loss = false;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);

    /// lr 2e-5, batch 32, 3 epochs.
    static TrainConfig paper_encoder();
    /// lr 5e-5, batch 4, 2 epochs.
    static TrainConfig paper_decoder();
    /// From-scratch defaults: lr 1e-3, batch 8, 10 epochs.
    static TrainConfig desk_encoder();
    /// From-scratch defaults: lr 1e-3, batch 4, 2 epochs.
    static TrainConfig desk_decoder();
};

/// Bias-corrected Adam moments plus decoupled decay, one slot per tensor.
struct AdamWState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

/// One update of every tensor that requires grad:
///   w <- w * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
/// Frozen tensors are skipped. A non-finite gradient throws
/// DivergenceError naming the tensor, before anything is modified.
void adamw_step(std::span<const model::NamedTensor> params, AdamWState& state, const TrainConfig& cfg);

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<const model::NamedTensor> params, double max_norm);

struct Metrics {
    double accuracy = 0.0;
    double f1_macro = 0.0;
    double f1_weighted = 0.0;
    /// confusion[gold][predicted]
    std::array<std::array<std::size_t, dataset::kNumClasses>, dataset::kNumClasses> confusion{};

    nlohmann::json to_json() const;
};

/// Macro F1 skips classes absent from both predictions and gold.
Metrics metrics(std::span<const int> predictions, std::span<const int> gold);

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::optional<double> accuracy;
    std::optional<double> f1_macro;
};

enum class ReportKind { Classifier, Causal };

struct TrainReport {
    ReportKind kind = ReportKind::Classifier;
    std::vector<EpochMetrics> rows;
    /// Weighted F1 per epoch (classifier only), kept apart from the table.
    std::vector<double> f1_weighted;
    std::size_t best_epoch = 0;

    nlohmann::json to_json() const;
    /// Aligned text table: Epoch, Training Loss, Validation Loss[, Accuracy, F1].
    std::string render_table() const;
};

struct LabeledSeq {
    tokenizer::TokenSeq seq;
    int label = 0;
};

std::vector<LabeledSeq> encode_classifier(const tokenizer::Vocab& vocab,
                                          std::span<const dataset::PromptExample> examples,
                                          std::size_t max_len);

/// Causal training text: prompt, a space, the class phrase, then EOS.
std::vector<tokenizer::TokenSeq> encode_causal(const tokenizer::Vocab& vocab,
                                               std::span<const dataset::PromptExample> examples,
                                               std::size_t max_len);

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct ClassifierEval {
    double loss = 0.0;
    Metrics metrics;
    std::vector<int> predictions;
};

ClassifierEval evaluate_classifier(const model::ModelParams& params, std::span<const LabeledSeq> data,
                                   std::size_t batch_size = 64);

/// Mean next-token cross-entropy over counted positions.
double causal_loss(const model::ModelParams& params, std::span<const tokenizer::TokenSeq> data,
                   std::size_t batch_size = 16, bool completion_only = false);

/// Trains in place and leaves the best-validation-loss weights in `params`.
TrainReport train_classifier(model::ModelParams& params, std::span<const LabeledSeq> train_set,
                             std::span<const LabeledSeq> val_set, const TrainConfig& cfg,
                             const EpochCallback& on_epoch = {});

TrainReport train_causal(model::ModelParams& params, std::span<const tokenizer::TokenSeq> train_set,
                         std::span<const tokenizer::TokenSeq> val_set, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

}  // namespace wifipath::train
