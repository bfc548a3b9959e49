// SPDX-License-Identifier: Apache-2.0
#include "wifipath/evalgen.hpp"

#include <algorithm>

#include "wifipath/errors.hpp"

namespace wifipath::evalgen {

namespace {

// Sample order follows the figure-style showcase: High, Low, Severe, Moderate.
constexpr std::array kSampleOrder{Pathology::HighNoise, Pathology::LowNoise, Pathology::SevereNoise,
                                  Pathology::ModerateNoise};

}  // namespace

std::vector<int> greedy_generate_ids(const model::ModelParams& params, std::span<const int> prompt_ids,
                                     std::size_t max_new) {
    if (prompt_ids.empty()) {
        throw Error("empty prompt");
    }
    if (prompt_ids.size() + max_new > params.config.max_len) {
        throw Error("prompt too long");
    }
    tensor::NoGradGuard no_grad;
    std::vector<int> ids(prompt_ids.begin(), prompt_ids.end());
    std::vector<int> generated;
    const std::size_t v = params.config.vocab_size;
    for (std::size_t step = 0; step < max_new; ++step) {
        model::TokenBatch batch{1, ids.size(), ids, std::vector<std::uint8_t>(ids.size(), 1)};
        const auto logits = model::decoder_forward(params, batch);
        const auto last = logits.values().subspan((ids.size() - 1) * v, v);
        int best = -1;
        for (std::size_t j = 0; j < v; ++j) {
            if (static_cast<int>(j) == tokenizer::kPad) continue;
            if (best < 0 || last[j] > last[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
        }
        if (best == tokenizer::kEos) break;
        generated.push_back(best);
        ids.push_back(best);
    }
    return generated;
}

std::string greedy_generate(const model::ModelParams& params, const tokenizer::Vocab& vocab, std::string_view prompt,
                            std::size_t max_new) {
    if (max_new + 4 > params.config.max_len) {
        throw Error("prompt too long");
    }
    const auto seq = tokenizer::encode(vocab, prompt, tokenizer::EncodeMode::Causal, params.config.max_len - max_new);
    const std::span<const int> ids(seq.ids.data(), seq.length);
    const auto out = greedy_generate_ids(params, ids, max_new);
    return tokenizer::decode(vocab, out);
}

std::optional<Pathology> parse_pathology(std::string_view text) {
    std::optional<Pathology> best;
    std::size_t best_pos = std::string_view::npos;
    for (std::size_t c = 0; c < dataset::kNumClasses; ++c) {
        const auto p = static_cast<Pathology>(c);
        const auto pos = text.find(dataset::pathology_name(p));
        if (pos != std::string_view::npos && (best_pos == std::string_view::npos || pos < best_pos)) {
            best_pos = pos;
            best = p;
        }
    }
    return best;
}

CausalEval eval_causal(const Generator& generate, std::span<const dataset::PromptExample> examples,
                       std::size_t n_samples) {
    if (examples.empty()) {
        throw Error("empty split");
    }
    CausalEval out;
    std::size_t correct = 0, unparseable = 0;
    std::vector<Completion> all;
    all.reserve(examples.size());
    for (const auto& ex : examples) {
        Completion c;
        c.prompt = ex.prompt;
        c.generated = generate(ex.prompt);
        c.parsed = parse_pathology(c.generated);
        c.gold = ex.label;
        const auto g = static_cast<std::size_t>(ex.label);
        ++out.class_total[g];
        if (c.correct()) {
            ++correct;
            ++out.class_correct[g];
        }
        if (!c.parsed) ++unparseable;
        out.predictions.push_back(c.parsed ? static_cast<int>(*c.parsed) : -1);
        all.push_back(std::move(c));
    }
    const auto n = static_cast<double>(examples.size());
    out.exact_match_rate = static_cast<double>(correct) / n;
    out.unparseable_rate = static_cast<double>(unparseable) / n;
    for (std::size_t c = 0; c < dataset::kNumClasses; ++c) {
        out.class_rate[c] = out.class_total[c] == 0
                                ? 0.0
                                : static_cast<double>(out.class_correct[c]) / static_cast<double>(out.class_total[c]);
    }
    for (Pathology p : kSampleOrder) {
        if (out.samples.size() >= n_samples) break;
        auto it = std::find_if(all.begin(), all.end(), [p](const Completion& c) { return c.gold == p; });
        if (it != all.end()) out.samples.push_back(*it);
    }
    return out;
}

CausalEval eval_causal(const model::ModelParams& params, const tokenizer::Vocab& vocab,
                       std::span<const dataset::PromptExample> examples, std::size_t n_samples, std::size_t max_new) {
    return eval_causal([&](const std::string& prompt) { return greedy_generate(params, vocab, prompt, max_new); },
                       examples, n_samples);
}

nlohmann::json CausalEval::to_json() const {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < dataset::kNumClasses; ++c) {
        per_class[std::string(dataset::pathology_name(static_cast<Pathology>(c)))] = {
            {"total", class_total[c]}, {"correct", class_correct[c]}, {"rate", class_rate[c]}};
    }
    nlohmann::json samples_json = nlohmann::json::array();
    for (const auto& s : samples) {
        samples_json.push_back({{"prompt", s.prompt},
                                {"completion", s.generated},
                                {"parsed", s.parsed ? nlohmann::json(dataset::pathology_name(*s.parsed))
                                                    : nlohmann::json("unparseable")},
                                {"gold", dataset::pathology_name(s.gold)}});
    }
    return {{"exact_match_rate", exact_match_rate},
            {"unparseable_rate", unparseable_rate},
            {"per_class", std::move(per_class)},
            {"samples", std::move(samples_json)}};
}

std::string CausalEval::render_samples() const {
    std::string out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        out += "--- sample " + std::to_string(i + 1) + " (gold: " + std::string(dataset::pathology_name(s.gold)) +
               ") ---\n";
        out += s.prompt;
        out += " ";
        out += s.generated;
        out += "\n";
    }
    return out;
}

}  // namespace wifipath::evalgen
