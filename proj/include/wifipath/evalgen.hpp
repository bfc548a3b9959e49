// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wifipath/dataset.hpp"
#include "wifipath/tokenizer.hpp"
#include "wifipath/transformer.hpp"

namespace wifipath::evalgen {

using dataset::Pathology;

/// Appends the argmax token (lowest id on ties, PAD never chosen) until EOS
/// or `max_new` tokens. Returns the generated ids without EOS.
std::vector<int> greedy_generate_ids(const model::ModelParams& params, std::span<const int> prompt_ids,
                                     std::size_t max_new);

/// Encodes `prompt` within max_len - max_new tokens and decodes the continuation.
std::string greedy_generate(const model::ModelParams& params, const tokenizer::Vocab& vocab,
                            std::string_view prompt, std::size_t max_new = 8);

/// Earliest case-sensitive occurrence of a class phrase, if any.
std::optional<Pathology> parse_pathology(std::string_view text);

struct Completion {
    std::string prompt;
    std::string generated;
    std::optional<Pathology> parsed;
    Pathology gold = Pathology::LowNoise;

    bool correct() const { return parsed == gold; }
};

struct CausalEval {
    double exact_match_rate = 0.0;
    double unparseable_rate = 0.0;
    /// Per gold class: examples, exact matches, and their ratio.
    std::array<std::size_t, dataset::kNumClasses> class_total{};
    std::array<std::size_t, dataset::kNumClasses> class_correct{};
    std::array<double, dataset::kNumClasses> class_rate{};
    /// Parsed label per example, -1 when unparseable.
    std::vector<int> predictions;
    std::vector<Completion> samples;

    nlohmann::json to_json() const;
    /// Prompt followed by its completion, one block per sample.
    std::string render_samples() const;
};

using Generator = std::function<std::string(const std::string& prompt)>;

CausalEval eval_causal(const Generator& generate, std::span<const dataset::PromptExample> examples,
                       std::size_t n_samples = 3);

CausalEval eval_causal(const model::ModelParams& params, const tokenizer::Vocab& vocab,
                       std::span<const dataset::PromptExample> examples, std::size_t n_samples = 3,
                       std::size_t max_new = 8);

}  // namespace wifipath::evalgen
