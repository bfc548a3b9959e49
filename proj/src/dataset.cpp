// SPDX-License-Identifier: Apache-2.0
#include "wifipath/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "wifipath/errors.hpp"
#include "wifipath/io.hpp"
#include "wifipath/rng.hpp"

namespace wifipath::dataset {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "Low Noise", "Moderate Noise", "High Noise", "Severe Noise"};

std::string format_fixed(double value, std::size_t decimals) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed,
                                   static_cast<int>(decimals));
    if (ec != std::errc{}) {
        throw Error("cannot format value");
    }
    std::string out(buf, end);
    // "-0.000" reads as zero; drop the sign.
    if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) {
        out.erase(0, 1);
    }
    return out;
}

std::uint64_t double_bits(double x) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &x, sizeof(bits));
    return bits;
}

[[noreturn]] void record_error(std::size_t line, const std::string& what) {
    throw Error("line " + std::to_string(line) + ": " + what);
}

const nlohmann::json& require(const nlohmann::json& record, const char* field) {
    auto it = record.find(field);
    if (it == record.end()) {
        throw Error(std::string("missing field \"") + field + "\"");
    }
    return *it;
}

}  // namespace

std::string_view pathology_name(Pathology p) {
    const auto label = static_cast<int>(p);
    if (label < 0 || label >= static_cast<int>(kNumClasses)) {
        throw Error("invalid pathology label");
    }
    return kClassNames[static_cast<std::size_t>(label)];
}

std::optional<Pathology> pathology_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (kClassNames[i] == name) {
            return static_cast<Pathology>(i);
        }
    }
    return std::nullopt;
}

Pathology pathology_from_label(int label) {
    if (label < 0 || label >= static_cast<int>(kNumClasses)) {
        throw Error("invalid pathology label " + std::to_string(label));
    }
    return static_cast<Pathology>(label);
}

Pathology label_for_snr(double snr_db) {
    if (!std::isfinite(snr_db)) {
        throw Error("invalid SNR");
    }
    if (snr_db > 15.0) {
        return Pathology::LowNoise;
    }
    if (snr_db > 5.0) {
        return Pathology::ModerateNoise;
    }
    if (snr_db > -10.0) {
        return Pathology::HighNoise;
    }
    return Pathology::SevereNoise;
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw Error("invalid split");
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw Error("unknown split \"" + std::string(name) + "\"");
}

std::string format_snr(double snr_db) {
    if (std::isfinite(snr_db) && snr_db == std::trunc(snr_db) && std::fabs(snr_db) < 1e15) {
        return std::to_string(static_cast<long long>(snr_db));
    }
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), snr_db);
    if (ec != std::errc{}) {
        throw Error("cannot format SNR");
    }
    return std::string(buf, end);
}

std::string render_prompt(std::span<const sigsynth::Sample> samples, Modulation modulation,
                          double snr_db, PromptOptions options) {
    if (options.preview_len < 1 || options.preview_len > sigsynth::kFrameLength ||
        options.preview_len > samples.size()) {
        throw Error("preview length out of range");
    }
    std::string iq = "[";
    for (std::size_t k = 0; k < options.preview_len; ++k) {
        if (k > 0) {
            iq += ", ";
        }
        iq += '(';
        iq += format_fixed(samples[k].real(), options.decimals);
        iq += ',';
        iq += format_fixed(samples[k].imag(), options.decimals);
        iq += ')';
    }
    iq += ']';

    std::string out;
    out.reserve(iq.size() + 320);
    out += "You are diagnosing WiFi network pathologies based on signal information.\n";
    out += "Classify the WiFi condition based on the parameters provided.\n";
    out += "Parameters: In-phase and quadrature (I/Q) data are ";
    out += iq;
    out += ". The modulation type is ";
    out += sigsynth::modulation_name(modulation);
    out += ". Signal-to-Noise Ratio (SNR) is equal to ";
    out += format_snr(snr_db);
    out += ".\n";
    out += kPromptSuffix;
    return out;
}

std::string render_prompt(const sigsynth::IqFrame& frame, PromptOptions options) {
    return render_prompt(frame.samples, frame.modulation, frame.snr_db_target, options);
}

std::uint64_t DatasetManifest::total() const {
    return manifest_total(modulations.size(), snr_levels.size(), frames_per_pair);
}

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json j;
    j["template_version"] = template_version;
    j["seed"] = seed;
    j["preview_len"] = prompt.preview_len;
    j["decimals"] = prompt.decimals;
    j["frames_per_pair"] = frames_per_pair;
    j["split_fracs"] = {{"train", split_fracs[0]}, {"val", split_fracs[1]}, {"test", split_fracs[2]}};
    auto& mods = j["modulations"] = nlohmann::json::array();
    for (auto m : modulations) {
        mods.push_back(sigsynth::modulation_name(m));
    }
    j["snr_levels"] = snr_levels;
    j["total"] = total();
    auto& cells = j["cell_counts"] = nlohmann::json::object();
    for (const auto& [mod, counts] : cell_counts) {
        auto& row = cells[mod] = nlohmann::json::object();
        for (std::size_t i = 0; i < counts.size() && i < snr_levels.size(); ++i) {
            row[format_snr(snr_levels[i])] = counts[i];
        }
    }
    auto& classes = j["class_counts"] = nlohmann::json::object();
    for (std::size_t s = 0; s < 3; ++s) {
        auto& row = classes[std::string(split_name(static_cast<Split>(s)))] = nlohmann::json::object();
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            row[std::to_string(c)] = class_counts[s][c];
        }
    }
    return j;
}

std::uint64_t manifest_total(std::uint64_t modulations, std::uint64_t snr_levels,
                             std::uint64_t frames_per_pair) {
    return modulations * snr_levels * frames_per_pair;
}

std::vector<double> snr_grid(double min_db, double max_db, double step_db) {
    if (!std::isfinite(min_db) || !std::isfinite(max_db) || !std::isfinite(step_db) ||
        step_db <= 0.0 || max_db < min_db) {
        throw Error("invalid SNR grid");
    }
    std::vector<double> grid;
    // Index-based so the levels carry no accumulated rounding.
    const auto count = static_cast<std::size_t>(std::floor((max_db - min_db) / step_db + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) {
        grid.push_back(min_db + static_cast<double>(i) * step_db);
    }
    return grid;
}

std::uint64_t frame_seed(std::uint64_t dataset_seed, Modulation modulation, double snr_db,
                         std::size_t frame_index) {
    std::uint64_t h = derive_seed(dataset_seed, "frame");
    h = mix64(h ^ static_cast<std::uint64_t>(modulation));
    h = mix64(h ^ double_bits(snr_db));
    return mix64(h ^ static_cast<std::uint64_t>(frame_index));
}

sigsynth::IqFrame regenerate_frame(const PromptExample& example, std::size_t n) {
    return sigsynth::synth_frame(example.modulation, example.snr_db, n, example.frame_seed);
}

Dataset build_dataset(const DatasetSpec& spec) {
    if (spec.modulations.empty()) {
        throw Error("empty modulation list");
    }
    if (spec.snr_levels.empty()) {
        throw Error("empty SNR grid");
    }
    if (spec.frames_per_pair < 1) {
        throw Error("frames_per_pair must be at least 1");
    }
    double frac_sum = 0.0;
    for (double f : spec.split_fracs) {
        if (!(f >= 0.0)) {
            throw Error("split fractions must be non-negative");
        }
        frac_sum += f;
    }
    if (std::fabs(frac_sum - 1.0) > 1e-9) {
        throw Error("split fractions must sum to 1");
    }

    Dataset out;
    auto& manifest = out.manifest;
    manifest.modulations = spec.modulations;
    manifest.snr_levels = spec.snr_levels;
    manifest.frames_per_pair = spec.frames_per_pair;
    manifest.split_fracs = spec.split_fracs;
    manifest.seed = spec.seed;
    manifest.prompt = spec.prompt;

    const std::size_t n = sigsynth::kFrameLength;
    out.examples.reserve(manifest.total());
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (Modulation mod : spec.modulations) {
        auto& cells = manifest.cell_counts[std::string(sigsynth::modulation_name(mod))];
        cells.assign(spec.snr_levels.size(), 0);
        for (std::size_t si = 0; si < spec.snr_levels.size(); ++si) {
            const double snr = spec.snr_levels[si];
            const Pathology label = label_for_snr(snr);
            for (std::size_t f = 0; f < spec.frames_per_pair; ++f) {
                const auto seed = frame_seed(spec.seed, mod, snr, f);
                const auto frame = sigsynth::synth_frame(mod, snr, n, seed);
                PromptExample ex;
                ex.prompt = render_prompt(frame, spec.prompt);
                ex.label = label;
                ex.snr_db = snr;
                ex.modulation = mod;
                ex.frame_seed = seed;
                by_class[static_cast<std::size_t>(label)].push_back(out.examples.size());
                out.examples.push_back(std::move(ex));
                ++cells[si];
            }
        }
    }

    // Stratified split: shuffle each class, then cut by rounded fractions.
    Rng rng(derive_seed(spec.seed, "split"));
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto& idx = by_class[c];
        rng.shuffle(idx);
        const auto total = static_cast<double>(idx.size());
        const auto n_train = static_cast<std::size_t>(std::llround(total * spec.split_fracs[0]));
        const auto n_val = std::min(idx.size() - n_train,
                                    static_cast<std::size_t>(std::llround(total * spec.split_fracs[1])));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const Split s = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
            out.examples[idx[i]].split = s;
            ++manifest.class_counts[static_cast<std::size_t>(s)][c];
        }
    }
    return out;
}

std::vector<PromptExample> select_split(std::span<const PromptExample> examples, Split split) {
    std::vector<PromptExample> out;
    for (const auto& ex : examples) {
        if (ex.split == split) {
            out.push_back(ex);
        }
    }
    return out;
}

nlohmann::json example_to_json(const PromptExample& example) {
    nlohmann::json j;
    j["prompt"] = example.prompt;
    j["label"] = static_cast<int>(example.label);
    j["label_name"] = pathology_name(example.label);
    j["snr_db"] = example.snr_db;
    j["modulation"] = sigsynth::modulation_name(example.modulation);
    j["frame_seed"] = example.frame_seed;
    j["split"] = split_name(example.split);
    return j;
}

PromptExample example_from_json(const nlohmann::json& record) {
    if (!record.is_object()) {
        throw Error("record is not a JSON object");
    }
    const auto& prompt = require(record, "prompt");
    const auto& label = require(record, "label");
    const auto& label_name = require(record, "label_name");
    const auto& snr = require(record, "snr_db");
    const auto& mod = require(record, "modulation");
    const auto& seed = require(record, "frame_seed");
    const auto& split = require(record, "split");
    if (!prompt.is_string()) throw Error("field \"prompt\" must be a string");
    if (!label.is_number_integer()) throw Error("field \"label\" must be an integer");
    if (!label_name.is_string()) throw Error("field \"label_name\" must be a string");
    if (!snr.is_number()) throw Error("field \"snr_db\" must be a number");
    if (!mod.is_string()) throw Error("field \"modulation\" must be a string");
    if (!seed.is_number_unsigned()) throw Error("field \"frame_seed\" must be an unsigned integer");
    if (!split.is_string()) throw Error("field \"split\" must be a string");

    PromptExample ex;
    ex.prompt = prompt.get<std::string>();
    ex.snr_db = snr.get<double>();
    ex.modulation = sigsynth::parse_modulation(mod.get<std::string>());
    ex.frame_seed = seed.get<std::uint64_t>();
    ex.split = parse_split(split.get<std::string>());

    const Pathology stored = pathology_from_label(label.get<int>());
    ex.label = label_for_snr(ex.snr_db);
    if (stored != ex.label) {
        throw Error("label/SNR mismatch");
    }
    if (label_name.get<std::string>() != pathology_name(stored)) {
        throw Error("field \"label_name\" does not match label");
    }
    if (!ex.prompt.ends_with(kPromptSuffix)) {
        throw Error("field \"prompt\" lacks the \"Pathology Type:\" suffix");
    }
    return ex;
}

void save_examples(std::span<const PromptExample> examples, const std::filesystem::path& path) {
    std::string text;
    for (const auto& ex : examples) {
        text += example_to_json(ex).dump();
        text += '\n';
    }
    io::write_file_atomic(path, text);
}

std::vector<PromptExample> load_examples(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    std::vector<PromptExample> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            record_error(line_no, std::string("malformed JSON: ") + e.what());
        }
        try {
            out.push_back(example_from_json(record));
        } catch (const Error& e) {
            record_error(line_no, e.what());
        }
    }
    return out;
}

}  // namespace wifipath::dataset
