// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wifipath/transformer.hpp"

namespace wifipath::lora {

struct LoraConfig {
    std::size_t rank = 8;
    double alpha = 16.0;
    /// Attention projections to adapt in every layer: any of wq, wk, wv, wo.
    std::vector<std::string> targets{"wq", "wv"};
    bool train_head = true;

    void validate() const;
    nlohmann::json to_json() const;
    static LoraConfig from_json(const nlohmann::json& j);
};

/// Adds A (uniform in +-1/sqrt(d_in)) and B (zeros) to every target, then
/// freezes everything except the adapters and, if requested, the encoder head.
model::ModelParams inject(model::ModelParams params, const LoraConfig& config, std::uint64_t seed);

struct LoraReport {
    std::uint64_t trainable = 0;
    std::uint64_t total = 0;

    double reduction_percent() const;
    /// Two decimals and a percent sign, e.g. "99.07%".
    std::string reduction_text() const;
    nlohmann::json to_json() const;
};

LoraReport report(const model::ModelParams& params);
LoraReport report_from_counts(std::uint64_t total, std::uint64_t trainable);

/// sum over adapted projections of rank * (d_in + d_out), plus the head when trained.
std::uint64_t closed_form_trainable(const model::ModelConfig& model, const LoraConfig& config);

/// W += (alpha / rank) * (B A)^T for every adapter, then drops the adapters.
/// Throws "no adapters present" on a plain model.
model::ModelParams merge(model::ModelParams params);

}  // namespace wifipath::lora
