// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace wifipath::tokenizer {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kSep = 3;
inline constexpr int kEos = 4;
inline constexpr int kNumSpecials = 5;

inline constexpr std::size_t kDefaultMaxLen = 256;

/// Splits text into maximal ASCII-letter runs, single digits, and single
/// non-space code points. Whitespace separates tokens and is dropped.
std::vector<std::string> tokenize(std::string_view text);

bool is_alphabetic(std::string_view token);

class Vocab {
public:
    Vocab();

    /// Specials first, then corpus tokens in first-seen order.
    static Vocab build(std::span<const std::string> corpus);
    static Vocab from_tokens(std::vector<std::string> tokens);

    /// kUnk for unknown tokens.
    int id(std::string_view token) const;
    const std::string& token(int id) const;
    bool contains(std::string_view token) const;
    std::size_t size() const noexcept { return tokens_.size(); }
    std::span<const std::string> tokens() const noexcept { return tokens_; }

    /// FNV-1a over the newline-joined token list.
    std::uint64_t hash() const;

    nlohmann::json to_json() const;
    static Vocab from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

private:
    void add(const std::string& token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

/// Throws on an empty corpus.
Vocab build_vocab(std::span<const std::string> corpus);

/// build_vocab over the prompts, seeded with every digit, the template
/// punctuation and the four class phrases so numeric text never maps to UNK.
Vocab build_prompt_vocab(std::span<const std::string> prompts);

enum class EncodeMode { Classifier, Causal };

struct TokenSeq {
    std::vector<int> ids;
    std::vector<std::uint8_t> attention_mask;
    /// Number of non-PAD tokens.
    std::size_t length = 0;
    /// Causal mode: index of the first completion token (== length when no
    /// completion was appended).
    std::size_t completion_start = 0;
};

/// Classifier: [CLS] tokens [SEP]; causal: tokens, then the completion tokens
/// and EOS when `completion` is non-empty. Padded to max_len. Oversize inputs
/// lose tokens from the middle of the bracketed I/Q list first.
TokenSeq encode(const Vocab& vocab, std::string_view text, EncodeMode mode, std::size_t max_len,
                std::string_view completion = {});

/// Drops specials; joins adjacent alphabetic tokens with one space and
/// everything else with no space.
std::string decode(const Vocab& vocab, std::span<const int> ids);

}  // namespace wifipath::tokenizer
