// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "wifipath/lora.hpp"
#include "wifipath/transformer.hpp"

namespace wifipath::checkpoint {

// Binary container, all integers little-endian:
//   char[4]  magic "WPLM"
//   u32      version (1)
//   u32      kind (0 = model, 1 = adapters)
//   u32      arch (0 = encoder, 1 = decoder)
//   u32 x 7  vocab_size, d_model, n_heads, n_layers, d_ffn, max_len, n_classes
//   u64      dropout, IEEE-754 bit pattern
//   u32      tensor count
//   per tensor, in canonical order: u64 element count, then f64 values
// A JSON sidecar (same stem, ".json") carries the config, the vocab hash and,
// for adapter files, the LoRA config.

inline constexpr char kMagic[4] = {'W', 'P', 'L', 'M'};
inline constexpr std::uint32_t kVersion = 1;

enum class Kind : std::uint32_t { Model = 0, Adapters = 1 };

std::string serialize(const model::ModelParams& params, Kind kind);

/// Restores values into `params`, whose config and layout must match the header.
void deserialize_into(std::string_view bytes, model::ModelParams& params, Kind kind);

/// Header config of a container.
model::ModelConfig peek_config(std::string_view bytes);

std::filesystem::path sidecar_path(const std::filesystem::path& bin);

/// Base tensors only; adapters are never stored in a model checkpoint.
void save_model(const model::ModelParams& params, const std::filesystem::path& bin,
                std::uint64_t vocab_hash);

struct LoadedModel {
    model::ModelParams params;
    std::uint64_t vocab_hash = 0;
};

LoadedModel load_model(const std::filesystem::path& bin);

void save_adapters(const model::ModelParams& params, const lora::LoraConfig& config,
                   const std::filesystem::path& bin, std::uint64_t vocab_hash);

/// Injects adapters described by the sidecar into `base` and loads their values.
model::ModelParams load_adapters(model::ModelParams base, const std::filesystem::path& bin);

}  // namespace wifipath::checkpoint
