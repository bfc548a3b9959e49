// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wifipath/sigsynth.hpp"

namespace wifipath::dataset {

using sigsynth::Modulation;

inline constexpr std::size_t kNumClasses = 4;

/// Noise-driven pathology classes. The integer value is the class label.
enum class Pathology : int { LowNoise = 0, ModerateNoise = 1, HighNoise = 2, SevereNoise = 3 };

std::string_view pathology_name(Pathology p);
std::optional<Pathology> pathology_from_name(std::string_view name);
/// Throws on labels outside 0..3.
Pathology pathology_from_label(int label);

/// snr > 15 -> Low, 5 < snr <= 15 -> Moderate, -10 < snr <= 5 -> High,
/// snr <= -10 -> Severe. Throws "invalid SNR" on non-finite input.
Pathology label_for_snr(double snr_db);

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct PromptOptions {
    std::size_t preview_len = 8;
    std::size_t decimals = 3;
};

inline constexpr int kTemplateVersion = 1;
inline constexpr std::string_view kPromptSuffix = "Pathology Type:";

/// Renders the diagnosis prompt for one frame. The first `preview_len` samples
/// are listed as "(i,q)" pairs at `decimals` places.
std::string render_prompt(const sigsynth::IqFrame& frame, PromptOptions options = {});
std::string render_prompt(std::span<const sigsynth::Sample> samples, Modulation modulation,
                          double snr_db, PromptOptions options = {});

/// Integers print without a decimal point; other values use the shortest
/// round-trip form.
std::string format_snr(double snr_db);

struct PromptExample {
    std::string prompt;
    Pathology label = Pathology::LowNoise;
    double snr_db = 0.0;
    Modulation modulation = Modulation::BPSK;
    std::uint64_t frame_seed = 0;
    Split split = Split::Train;

    bool operator==(const PromptExample&) const = default;
};

struct DatasetSpec {
    std::vector<Modulation> modulations;
    std::vector<double> snr_levels;
    std::size_t frames_per_pair = 20;
    std::array<double, 3> split_fracs{0.8, 0.1, 0.1};
    std::uint64_t seed = 1;
    PromptOptions prompt;
};

struct DatasetManifest {
    std::vector<Modulation> modulations;
    std::vector<double> snr_levels;
    std::size_t frames_per_pair = 0;
    std::array<double, 3> split_fracs{};
    std::uint64_t seed = 0;
    int template_version = kTemplateVersion;
    PromptOptions prompt;
    /// cell_counts[modulation][snr index]
    std::map<std::string, std::vector<std::size_t>> cell_counts;
    /// class_counts[split][label]
    std::array<std::array<std::size_t, kNumClasses>, 3> class_counts{};

    std::uint64_t total() const;
    nlohmann::json to_json() const;
};

/// |modulations| * |snr levels| * frames_per_pair, without materializing anything.
std::uint64_t manifest_total(std::uint64_t modulations, std::uint64_t snr_levels,
                             std::uint64_t frames_per_pair);

/// Inclusive arithmetic grid min, min+step, ..., max.
std::vector<double> snr_grid(double min_db, double max_db, double step_db);

struct Dataset {
    std::vector<PromptExample> examples;
    DatasetManifest manifest;
};

Dataset build_dataset(const DatasetSpec& spec);

/// Seed of the `frame_index`-th frame of one (modulation, SNR) cell.
std::uint64_t frame_seed(std::uint64_t dataset_seed, Modulation modulation, double snr_db,
                         std::size_t frame_index);

/// Regenerates the frame behind an example.
sigsynth::IqFrame regenerate_frame(const PromptExample& example,
                                   std::size_t n = sigsynth::kFrameLength);

std::vector<PromptExample> select_split(std::span<const PromptExample> examples, Split split);

nlohmann::json example_to_json(const PromptExample& example);
/// Validates field presence, types and label/SNR consistency.
PromptExample example_from_json(const nlohmann::json& record);

/// JSON lines, written to a temporary file and renamed into place.
void save_examples(std::span<const PromptExample> examples, const std::filesystem::path& path);
std::vector<PromptExample> load_examples(const std::filesystem::path& path);

}  // namespace wifipath::dataset
