// SPDX-License-Identifier: Apache-2.0
#include "wifipath/tokenizer.hpp"

#include <algorithm>
#include <array>

#include "wifipath/errors.hpp"
#include "wifipath/io.hpp"
#include "wifipath/rng.hpp"

namespace wifipath::tokenizer {

namespace {

constexpr std::array<std::string_view, kNumSpecials> kSpecials{"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                               "[EOS]"};

// Always in-vocabulary for prompt corpora.
constexpr std::string_view kPromptClosure =
    "0 1 2 3 4 5 6 7 8 9 - . , ( ) [ ] : / Low Moderate High Severe Noise";

bool is_letter(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_space(unsigned char c) {
    return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
}

std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_space(c)) {
            ++i;
        } else if (is_letter(c)) {
            std::size_t j = i + 1;
            while (j < text.size() && is_letter(static_cast<unsigned char>(text[j]))) {
                ++j;
            }
            out.emplace_back(text.substr(i, j - i));
            i = j;
        } else {
            const std::size_t len = std::min(utf8_length(c), text.size() - i);
            out.emplace_back(text.substr(i, len));
            i += len;
        }
    }
    return out;
}

bool is_alphabetic(std::string_view token) {
    return !token.empty() &&
           std::all_of(token.begin(), token.end(), [](char c) { return is_letter(static_cast<unsigned char>(c)); });
}

Vocab::Vocab() {
    for (auto s : kSpecials) {
        add(std::string(s));
    }
}

void Vocab::add(const std::string& token) {
    if (ids_.emplace(token, static_cast<int>(tokens_.size())).second) {
        tokens_.push_back(token);
    }
}

Vocab Vocab::build(std::span<const std::string> corpus) {
    Vocab v;
    for (const auto& text : corpus) {
        for (const auto& tok : tokenize(text)) {
            v.add(tok);
        }
    }
    return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < kNumSpecials) {
        throw Error("vocabulary is missing the special tokens");
    }
    for (std::size_t i = 0; i < kNumSpecials; ++i) {
        if (tokens[i] != kSpecials[i]) {
            throw Error("vocabulary special token " + std::to_string(i) + " must be " +
                        std::string(kSpecials[i]));
        }
    }
    Vocab v;
    for (std::size_t i = kNumSpecials; i < tokens.size(); ++i) {
        if (v.contains(tokens[i])) {
            throw Error("duplicate vocabulary token \"" + tokens[i] + "\"");
        }
        v.add(tokens[i]);
    }
    return v;
}

int Vocab::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw Error("token id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

std::uint64_t Vocab::hash() const {
    std::string joined;
    for (const auto& t : tokens_) {
        joined += t;
        joined += '\n';
    }
    return fnv1a64(joined);
}

nlohmann::json Vocab::to_json() const { return nlohmann::json{{"tokens", tokens_}}; }

Vocab Vocab::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
        throw Error("vocabulary JSON must be an object with a \"tokens\" array");
    }
    return from_tokens(j["tokens"].get<std::vector<std::string>>());
}

void Vocab::save(const std::filesystem::path& path) const {
    io::write_file_atomic(path, to_json().dump() + "\n");
}

Vocab Vocab::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(io::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed vocabulary file " + path.string() + ": " + e.what());
    }
}

Vocab build_vocab(std::span<const std::string> corpus) {
    if (corpus.empty()) {
        throw Error("empty corpus");
    }
    return Vocab::build(corpus);
}

Vocab build_prompt_vocab(std::span<const std::string> prompts) {
    std::vector<std::string> corpus;
    corpus.reserve(prompts.size() + 1);
    corpus.emplace_back(kPromptClosure);
    corpus.insert(corpus.end(), prompts.begin(), prompts.end());
    return build_vocab(corpus);
}

TokenSeq encode(const Vocab& vocab, std::string_view text, EncodeMode mode, std::size_t max_len,
                std::string_view completion) {
    if (max_len < 4) {
        throw Error("max_len must be at least 4");
    }
    std::vector<std::string> body = tokenize(text);
    std::vector<std::string> tail;
    if (mode == EncodeMode::Causal && !completion.empty()) {
        tail = tokenize(completion);
    }
    // Tokens that are not part of `body`: CLS/SEP or the completion plus EOS.
    const std::size_t extra =
        mode == EncodeMode::Classifier ? 2 : (completion.empty() ? 0 : tail.size() + 1);

    if (body.size() + extra > max_len) {
        std::size_t excess = body.size() + extra - max_len;
        // Interior of the first "[" ... last "]" span is the I/Q list.
        auto open = std::find(body.begin(), body.end(), "[");
        auto close = std::find(body.rbegin(), body.rend(), "]");
        std::size_t interior = 0;
        std::size_t first = 0;
        if (open != body.end() && close != body.rend()) {
            first = static_cast<std::size_t>(open - body.begin()) + 1;
            const auto last = body.size() - 1 - static_cast<std::size_t>(close - body.rbegin());
            interior = last > first ? last - first : 0;
        }
        if (excess > interior) {
            throw Error("prompt too long");
        }
        const std::size_t start = first + (interior - excess) / 2;
        body.erase(body.begin() + static_cast<std::ptrdiff_t>(start),
                   body.begin() + static_cast<std::ptrdiff_t>(start + excess));
    }

    TokenSeq seq;
    seq.ids.reserve(max_len);
    if (mode == EncodeMode::Classifier) {
        seq.ids.push_back(kCls);
    }
    for (const auto& t : body) {
        seq.ids.push_back(vocab.id(t));
    }
    seq.completion_start = seq.ids.size();
    if (mode == EncodeMode::Classifier) {
        seq.ids.push_back(kSep);
    } else if (!completion.empty()) {
        for (const auto& t : tail) {
            seq.ids.push_back(vocab.id(t));
        }
        seq.ids.push_back(kEos);
    }
    seq.length = seq.ids.size();
    if (mode == EncodeMode::Classifier) {
        seq.completion_start = seq.length;
    }
    seq.attention_mask.assign(seq.length, 1);
    seq.ids.resize(max_len, kPad);
    seq.attention_mask.resize(max_len, 0);
    return seq;
}

std::string decode(const Vocab& vocab, std::span<const int> ids) {
    std::string out;
    bool prev_alpha = false;
    for (int id : ids) {
        const std::string& tok = vocab.token(id);
        if (id < kNumSpecials) {
            continue;
        }
        const bool alpha = is_alphabetic(tok);
        if (alpha && prev_alpha) {
            out += ' ';
        }
        out += tok;
        prev_alpha = alpha;
    }
    return out;
}

}  // namespace wifipath::tokenizer
