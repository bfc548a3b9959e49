// SPDX-License-Identifier: Apache-2.0
#include "wifipath/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wifipath/checkpoint.hpp"
#include "wifipath/dataset.hpp"
#include "wifipath/errors.hpp"
#include "wifipath/evalgen.hpp"
#include "wifipath/io.hpp"
#include "wifipath/lora.hpp"
#include "wifipath/rng.hpp"
#include "wifipath/tokenizer.hpp"
#include "wifipath/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wifipath::cli {

namespace {

constexpr const char* kExamplesFile = "examples.jsonl";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kVocabFile = "vocab.json";
constexpr const char* kModelFile = "model.bin";
constexpr const char* kAdaptersFile = "adapters.bin";
constexpr const char* kReportFile = "report.json";
constexpr const char* kResolvedFile = "resolved_config.json";

void put_train(json& cfg, const train::TrainConfig& tc) {
    cfg["train.lr"] = tc.learning_rate;
    cfg["train.batch_size"] = tc.batch_size;
    cfg["train.epochs"] = tc.epochs;
    cfg["train.weight_decay"] = tc.weight_decay;
    cfg["train.beta1"] = tc.beta1;
    cfg["train.beta2"] = tc.beta2;
    cfg["train.eps"] = tc.eps;
    cfg["train.shuffle"] = tc.shuffle;
    cfg["train.clip_grad"] = tc.clip_grad;
    cfg["train.clip_norm"] = tc.clip_norm;
    cfg["train.completion_only_loss"] = tc.completion_only_loss;
}

void apply_preset(json& cfg, const std::string& name) {
    if (name.empty() || name == "desk") {
        return;
    }
    if (name == "paper-encoder") {
        put_train(cfg, train::TrainConfig::paper_encoder());
    } else if (name == "paper-decoder") {
        put_train(cfg, train::TrainConfig::paper_decoder());
    } else {
        throw Error("unknown preset: " + name + " (expected paper-encoder or paper-decoder)");
    }
    cfg["train.preset"] = name;
}

json read_json_file(const fs::path& path) {
    std::string text = io::read_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(path.string() + ": invalid JSON: " + e.what());
    }
}

// Layers a flat config file over `cfg`. A preset named in the file is applied
// first so the file's own keys still win over it.
void merge_config_file(json& cfg, const fs::path& path) {
    json file = read_json_file(path);
    if (!file.is_object()) {
        throw Error(path.string() + ": config must be a JSON object with dotted keys");
    }
    if (auto it = file.find("train.preset"); it != file.end()) {
        apply_preset(cfg, it->get<std::string>());
    }
    for (const auto& [key, value] : file.items()) {
        if (key == "command") {
            continue;
        }
        if (!cfg.contains(key)) {
            throw Error(path.string() + ": unknown config key \"" + key + "\"");
        }
        if (cfg[key].is_null() || value.is_null() || cfg[key].type() == value.type() ||
            (cfg[key].is_number() && value.is_number())) {
            cfg[key] = value;
        } else {
            throw Error(path.string() + ": wrong type for \"" + key + "\"");
        }
    }
}

struct Overrides {
    std::vector<std::function<void(json&)>> apply;

    void operator()(json& cfg) const {
        for (const auto& f : apply) {
            f(cfg);
        }
    }
};

template <class T>
CLI::Option* bind(CLI::App* app, Overrides& ov, const std::string& flag, const std::string& key,
                  const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    ov.apply.push_back([opt, value, key](json& cfg) {
        if (opt->count() > 0) {
            cfg[key] = *value;
        }
    });
    return opt;
}

CLI::Option* bind_flag(CLI::App* app, Overrides& ov, const std::string& flag, const std::string& key,
                       const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(flag, *value, help);
    ov.apply.push_back([opt, value, key](json& cfg) {
        if (opt->count() > 0) {
            cfg[key] = *value;
        }
    });
    return opt;
}

struct Common {
    std::string config_path;
    std::string preset;
    Overrides overrides;
};

// defaults < config file < --preset < other flags
json resolve(json cfg, const Common& common) {
    if (!common.config_path.empty()) {
        merge_config_file(cfg, common.config_path);
    }
    if (!common.preset.empty()) {
        apply_preset(cfg, common.preset);
    }
    common.overrides(cfg);
    return cfg;
}

template <class T>
T get(const json& cfg, const std::string& key) {
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error("config key \"" + key + "\" is missing or has the wrong type");
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir.string());
    }
}

void write_json(const fs::path& path, const json& j) {
    io::write_file_atomic(path, j.dump(2) + "\n");
}

void write_resolved(const fs::path& dir, const std::string& command, json cfg) {
    cfg["command"] = command;
    write_json(dir / kResolvedFile, cfg);
}

std::string pad_right(std::string s, std::size_t width) {
    if (s.size() < width) {
        s.append(width - s.size(), ' ');
    }
    return s;
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

dataset::DatasetSpec dataset_spec(const json& cfg) {
    dataset::DatasetSpec spec;
    for (const auto& name : get<std::vector<std::string>>(cfg, "data.mods")) {
        spec.modulations.push_back(sigsynth::parse_modulation(name));
    }
    if (spec.modulations.empty()) {
        throw Error("at least one modulation is required");
    }
    spec.snr_levels = dataset::snr_grid(get<double>(cfg, "data.snr_min"), get<double>(cfg, "data.snr_max"),
                                        get<double>(cfg, "data.snr_step"));
    spec.frames_per_pair = get<std::size_t>(cfg, "data.frames_per_pair");
    auto fracs = get<std::vector<double>>(cfg, "data.split");
    if (fracs.size() != 3) {
        throw Error("data.split needs three fractions (train, val, test)");
    }
    spec.split_fracs = {fracs[0], fracs[1], fracs[2]};
    spec.seed = get<std::uint64_t>(cfg, "seed");
    spec.prompt.preview_len = get<std::size_t>(cfg, "data.preview_len");
    spec.prompt.decimals = get<std::size_t>(cfg, "data.decimals");
    return spec;
}

train::TrainConfig train_config(const json& cfg) {
    train::TrainConfig tc;
    tc.learning_rate = get<double>(cfg, "train.lr");
    tc.batch_size = get<std::size_t>(cfg, "train.batch_size");
    tc.epochs = get<std::size_t>(cfg, "train.epochs");
    tc.weight_decay = get<double>(cfg, "train.weight_decay");
    tc.beta1 = get<double>(cfg, "train.beta1");
    tc.beta2 = get<double>(cfg, "train.beta2");
    tc.eps = get<double>(cfg, "train.eps");
    tc.shuffle = get<bool>(cfg, "train.shuffle");
    tc.clip_grad = get<bool>(cfg, "train.clip_grad");
    tc.clip_norm = get<double>(cfg, "train.clip_norm");
    tc.completion_only_loss = get<bool>(cfg, "train.completion_only_loss");
    tc.seed = derive_seed(get<std::uint64_t>(cfg, "seed"), "train");
    tc.validate();
    return tc;
}

model::ModelConfig model_config(const json& cfg, model::Arch arch, std::size_t vocab_size) {
    model::ModelConfig mc;
    mc.arch = arch;
    mc.vocab_size = vocab_size;
    mc.d_model = get<std::size_t>(cfg, "model.d_model");
    mc.n_heads = get<std::size_t>(cfg, "model.n_heads");
    mc.n_layers = get<std::size_t>(cfg, "model.n_layers");
    mc.d_ffn = get<std::size_t>(cfg, "model.d_ffn");
    mc.max_len = get<std::size_t>(cfg, "model.max_len");
    mc.dropout = get<double>(cfg, "model.dropout");
    mc.validate();
    return mc;
}

lora::LoraConfig lora_config(const json& cfg) {
    lora::LoraConfig lc;
    lc.rank = get<std::size_t>(cfg, "lora.rank");
    lc.alpha = get<double>(cfg, "lora.alpha");
    lc.targets = get<std::vector<std::string>>(cfg, "lora.targets");
    lc.train_head = get<bool>(cfg, "lora.train_head");
    lc.validate();
    return lc;
}

std::string class_histogram(const dataset::DatasetManifest& manifest) {
    std::ostringstream os;
    os << pad_right("Class", 16) << pad_left("Train", 7) << pad_left("Val", 7) << pad_left("Test", 7)
       << pad_left("Total", 7) << "\n";
    for (std::size_t c = 0; c < dataset::kNumClasses; ++c) {
        auto name = dataset::pathology_name(dataset::pathology_from_label(static_cast<int>(c)));
        std::size_t total = 0;
        os << pad_right(std::string(name), 16);
        for (std::size_t s = 0; s < 3; ++s) {
            os << pad_left(std::to_string(manifest.class_counts[s][c]), 7);
            total += manifest.class_counts[s][c];
        }
        os << pad_left(std::to_string(total), 7) << "\n";
    }
    return os.str();
}

std::string confusion_table(const train::Metrics& m) {
    std::ostringstream os;
    os << pad_right("gold \\ pred", 16);
    for (std::size_t c = 0; c < dataset::kNumClasses; ++c) {
        os << pad_left(std::string(dataset::pathology_name(dataset::pathology_from_label(int(c)))), 16);
    }
    os << "\n";
    for (std::size_t g = 0; g < dataset::kNumClasses; ++g) {
        os << pad_right(std::string(dataset::pathology_name(dataset::pathology_from_label(int(g)))), 16);
        for (std::size_t p = 0; p < dataset::kNumClasses; ++p) {
            os << pad_left(std::to_string(m.confusion[g][p]), 16);
        }
        os << "\n";
    }
    return os.str();
}

struct DataDir {
    std::vector<dataset::PromptExample> examples;
    tokenizer::Vocab vocab;
    json manifest;
};

DataDir load_data_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw IoError("data directory not found: " + dir.string());
    }
    DataDir d;
    d.examples = dataset::load_examples(dir / kExamplesFile);
    d.vocab = tokenizer::Vocab::load(dir / kVocabFile);
    if (fs::exists(dir / kManifestFile)) {
        d.manifest = read_json_file(dir / kManifestFile);
    }
    return d;
}

void check_vocab(std::uint64_t checkpoint_hash, const tokenizer::Vocab& vocab, const std::string& what) {
    if (checkpoint_hash != vocab.hash()) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "vocabulary mismatch: checkpoint expects vocab hash %016llx but %s has %016llx; "
                      "regenerate the data with the same vocabulary or retrain",
                      static_cast<unsigned long long>(checkpoint_hash), what.c_str(),
                      static_cast<unsigned long long>(vocab.hash()));
        throw IncompatibleError(buf);
    }
}

// A run directory written by train-cls or train-lm.
struct LoadedRun {
    model::ModelParams params;
    tokenizer::Vocab vocab;
    std::uint64_t vocab_hash = 0;
    dataset::PromptOptions prompt;
};

LoadedRun load_run(fs::path dir) {
    if (fs::is_regular_file(dir)) {
        dir = dir.parent_path();
    }
    if (!fs::is_directory(dir)) {
        throw IoError("checkpoint directory not found: " + dir.string());
    }
    LoadedRun run;
    auto loaded = checkpoint::load_model(dir / kModelFile);
    run.params = std::move(loaded.params);
    run.vocab_hash = loaded.vocab_hash;
    if (fs::exists(dir / kAdaptersFile)) {
        run.params = checkpoint::load_adapters(std::move(run.params), dir / kAdaptersFile);
    }
    run.vocab = tokenizer::Vocab::load(dir / kVocabFile);
    check_vocab(run.vocab_hash, run.vocab, "the checkpoint's own vocab.json");
    if (fs::exists(dir / kResolvedFile)) {
        json cfg = read_json_file(dir / kResolvedFile);
        run.prompt.preview_len = cfg.value("data.preview_len", run.prompt.preview_len);
        run.prompt.decimals = cfg.value("data.decimals", run.prompt.decimals);
    }
    return run;
}

int cmd_gen_data(const json& cfg, const fs::path& out_dir, std::ostream& out) {
    auto spec = dataset_spec(cfg);
    auto ds = dataset::build_dataset(spec);
    ensure_dir(out_dir);
    dataset::save_examples(ds.examples, out_dir / kExamplesFile);
    write_json(out_dir / kManifestFile, ds.manifest.to_json());
    std::vector<std::string> prompts;
    prompts.reserve(ds.examples.size());
    for (const auto& e : ds.examples) {
        prompts.push_back(e.prompt);
    }
    tokenizer::build_prompt_vocab(prompts).save(out_dir / kVocabFile);
    write_resolved(out_dir, "gen-data", cfg);
    out << "wrote " << ds.examples.size() << " examples (" << spec.modulations.size() << " modulations x "
        << spec.snr_levels.size() << " SNR levels x " << spec.frames_per_pair << " frames) to "
        << out_dir.string() << "\n\n"
        << class_histogram(ds.manifest);
    return 0;
}

int cmd_train(const json& cfg, model::Arch arch, const fs::path& data_dir, const fs::path& out_dir,
              const std::string& base_dir, std::ostream& out) {
    auto data = load_data_dir(data_dir);
    auto tc = train_config(cfg);
    auto mc = model_config(cfg, arch, data.vocab.size());
    const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
    const bool use_lora = get<bool>(cfg, "lora.enabled");

    auto train_split = dataset::select_split(data.examples, dataset::Split::Train);
    auto val_split = dataset::select_split(data.examples, dataset::Split::Val);
    if (train_split.empty() || val_split.empty()) {
        throw Error("dataset needs non-empty train and validation splits");
    }

    model::ModelParams params;
    if (!base_dir.empty()) {
        auto base = load_run(base_dir);
        check_vocab(base.vocab_hash, data.vocab, "the training data");
        if (base.params.config.arch != arch) {
            throw IncompatibleError("base checkpoint architecture is " +
                                    std::string(model::arch_name(base.params.config.arch)));
        }
        params = base.params.has_adapters() ? lora::merge(std::move(base.params)) : std::move(base.params);
        model::set_trainable(params, true);
    } else {
        params = model::init_params(mc, derive_seed(seed, "init"));
    }
    std::optional<lora::LoraConfig> lc;
    if (use_lora) {
        lc = lora_config(cfg);
        params = lora::inject(std::move(params), *lc, derive_seed(seed, "lora"));
        auto rep = lora::report(params);
        out << "LoRA: trainable " << rep.trainable << " of " << rep.total << " parameters, reduction "
            << rep.reduction_text() << "\n\n";
    }

    const std::size_t max_len = params.config.max_len;
    train::TrainReport report;
    auto progress = [&](const train::EpochMetrics& m) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "epoch %zu: train loss %.4f, val loss %.4f", m.epoch, m.train_loss,
                      m.val_loss);
        out << buf << std::endl;
    };
    if (arch == model::Arch::Encoder) {
        auto tr = train::encode_classifier(data.vocab, train_split, max_len);
        auto va = train::encode_classifier(data.vocab, val_split, max_len);
        report = train::train_classifier(params, tr, va, tc, progress);
    } else {
        auto tr = train::encode_causal(data.vocab, train_split, max_len);
        auto va = train::encode_causal(data.vocab, val_split, max_len);
        report = train::train_causal(params, tr, va, tc, progress);
    }

    ensure_dir(out_dir);
    checkpoint::save_model(params, out_dir / kModelFile, data.vocab.hash());
    if (lc) {
        checkpoint::save_adapters(params, *lc, out_dir / kAdaptersFile, data.vocab.hash());
    } else if (fs::exists(out_dir / kAdaptersFile)) {
        fs::remove(out_dir / kAdaptersFile);
        fs::remove(checkpoint::sidecar_path(out_dir / kAdaptersFile));
    }
    data.vocab.save(out_dir / kVocabFile);
    json rj = report.to_json();
    if (lc) {
        rj["lora"] = lora::report(params).to_json();
    }
    write_json(out_dir / kReportFile, rj);

    json resolved = cfg;
    if (!data.manifest.is_null()) {
        resolved["data.preview_len"] = data.manifest.value("preview_len", get<std::size_t>(cfg, "data.preview_len"));
        resolved["data.decimals"] = data.manifest.value("decimals", get<std::size_t>(cfg, "data.decimals"));
    }
    write_resolved(out_dir, arch == model::Arch::Encoder ? "train-cls" : "train-lm", resolved);

    out << "\n" << report.render_table();
    if (arch == model::Arch::Encoder && !report.f1_weighted.empty()) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "weighted F1 (best epoch %zu): %.4f\n", report.best_epoch,
                      report.f1_weighted[report.best_epoch - 1]);
        out << buf;
    }
    out << "checkpoint written to " << out_dir.string() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_dir, const fs::path& data_dir, const std::string& split_name,
             const std::string& out_dir, std::size_t n_samples, std::ostream& out) {
    auto run = load_run(checkpoint_dir);
    auto data = load_data_dir(data_dir);
    check_vocab(run.vocab_hash, data.vocab, "the evaluation data");
    auto split = dataset::parse_split(split_name);
    auto examples = dataset::select_split(data.examples, split);
    if (examples.empty()) {
        throw Error("split \"" + split_name + "\" is empty");
    }
    json result;
    std::string rendered;
    if (run.params.config.arch == model::Arch::Encoder) {
        auto seqs = train::encode_classifier(run.vocab, examples, run.params.config.max_len);
        auto ev = train::evaluate_classifier(run.params, seqs);
        result = ev.metrics.to_json();
        result["loss"] = ev.loss;
        rendered = confusion_table(ev.metrics);
    } else {
        auto ev = evalgen::eval_causal(run.params, run.vocab, examples, n_samples);
        result = ev.to_json();
        rendered = ev.render_samples();
    }
    result["split"] = split_name;
    result["examples"] = examples.size();
    out << result.dump(2) << "\n\n" << rendered;
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        write_json(fs::path(out_dir) / "eval.json", result);
        json resolved = {{"command", "eval"},
                         {"checkpoint", checkpoint_dir},
                         {"data", data_dir.string()},
                         {"split", split_name},
                         {"samples", n_samples}};
        write_json(fs::path(out_dir) / kResolvedFile, resolved);
    }
    return 0;
}

struct PredictArgs {
    std::string checkpoint;
    double snr = 0.0;
    bool snr_set = false;
    std::string mod = "QPSK";
    std::uint64_t seed = 1;
    std::string prompt_file;
    std::size_t max_new = 8;
};

int cmd_predict(const PredictArgs& args, std::ostream& out) {
    auto run = load_run(args.checkpoint);
    std::string prompt;
    if (!args.prompt_file.empty()) {
        prompt = io::read_file(args.prompt_file);
        while (!prompt.empty() && (prompt.back() == '\n' || prompt.back() == '\r')) {
            prompt.pop_back();
        }
    } else {
        if (!args.snr_set) {
            throw Error("predict needs --snr (with --mod) or --prompt-file");
        }
        auto kind = sigsynth::parse_modulation(args.mod);
        auto frame = sigsynth::synth_frame(kind, args.snr, sigsynth::kFrameLength,
                                           dataset::frame_seed(args.seed, kind, args.snr, 0));
        prompt = dataset::render_prompt(frame, run.prompt);
    }
    if (run.params.config.arch == model::Arch::Encoder) {
        auto seq = tokenizer::encode(run.vocab, prompt, tokenizer::EncodeMode::Classifier,
                                     run.params.config.max_len);
        std::vector<tokenizer::TokenSeq> one{seq};
        tensor::NoGradGuard guard;
        auto logits = model::encoder_forward(run.params, model::make_batch(one));
        const auto& v = logits.values();
        std::size_t best = 0;
        for (std::size_t c = 1; c < v.size(); ++c) {
            if (v[c] > v[best]) {
                best = c;
            }
        }
        out << dataset::pathology_name(dataset::pathology_from_label(static_cast<int>(best))) << "\n";
    } else {
        out << prompt << " " << evalgen::greedy_generate(run.params, run.vocab, prompt, args.max_new) << "\n";
    }
    return 0;
}

}  // namespace

json default_config() {
    json cfg;
    cfg["seed"] = 1;
    cfg["data.mods"] = {"BPSK", "QPSK", "PSK8", "QAM16"};
    cfg["data.snr_min"] = -20.0;
    cfg["data.snr_max"] = 30.0;
    cfg["data.snr_step"] = 2.0;
    cfg["data.frames_per_pair"] = 20;
    cfg["data.split"] = {0.8, 0.1, 0.1};
    cfg["data.preview_len"] = 8;
    cfg["data.decimals"] = 3;
    model::ModelConfig mc;
    cfg["model.d_model"] = mc.d_model;
    cfg["model.n_heads"] = mc.n_heads;
    cfg["model.n_layers"] = mc.n_layers;
    cfg["model.d_ffn"] = mc.d_ffn;
    cfg["model.max_len"] = mc.max_len;
    cfg["model.dropout"] = mc.dropout;
    put_train(cfg, train::TrainConfig::desk_encoder());
    cfg["train.preset"] = "desk";
    lora::LoraConfig lc;
    cfg["lora.enabled"] = false;
    cfg["lora.rank"] = lc.rank;
    cfg["lora.alpha"] = lc.alpha;
    cfg["lora.targets"] = lc.targets;
    cfg["lora.train_head"] = lc.train_head;
    return cfg;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"wifipath: synthetic WiFi pathology datasets and transformer classifiers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "wifipath 1.0.0");

    auto add_common = [](CLI::App* sub, Common& c, bool with_preset) {
        sub->add_option("--config", c.config_path, "flat dotted-key JSON config; flags override it")
            ->check(CLI::ExistingFile);
        bind<std::uint64_t>(sub, c.overrides, "--seed", "seed", "run seed");
        if (with_preset) {
            sub->add_option("--preset", c.preset, "hyperparameter preset")
                ->check(CLI::IsMember({"desk", "paper-encoder", "paper-decoder"}));
        }
    };

    // gen-data
    Common gen;
    std::string gen_out;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a labeled prompt dataset");
    add_common(gen_cmd, gen, false);
    bind<std::vector<std::string>>(gen_cmd, gen.overrides, "--mods", "data.mods",
                                   "modulations, e.g. BPSK,QPSK,PSK8,QAM16")
        ->delimiter(',');
    bind<double>(gen_cmd, gen.overrides, "--snr-min", "data.snr_min", "lowest SNR in dB");
    bind<double>(gen_cmd, gen.overrides, "--snr-max", "data.snr_max", "highest SNR in dB");
    bind<double>(gen_cmd, gen.overrides, "--snr-step", "data.snr_step", "SNR grid step in dB");
    bind<std::size_t>(gen_cmd, gen.overrides, "--frames-per-pair", "data.frames_per_pair",
                      "frames per (modulation, SNR) cell");
    bind<std::size_t>(gen_cmd, gen.overrides, "--preview-len", "data.preview_len",
                      "I/Q samples shown in each prompt");
    gen_cmd->add_option("--out", gen_out, "output directory")->required();

    // train-cls and train-lm share their flags
    struct TrainArgs {
        Common common;
        std::string data;
        std::string out;
        std::string base;
    };
    TrainArgs tcls, tlm;
    auto add_train = [&](CLI::App* sub, TrainArgs& t, bool decoder) {
        add_common(sub, t.common, true);
        sub->add_option("--data", t.data, "dataset directory from gen-data")->required();
        sub->add_option("--out", t.out, "output directory")->required();
        sub->add_option("--base", t.base, "start from this run directory instead of random weights");
        bind_flag(sub, t.common.overrides, "--lora", "lora.enabled", "train low-rank adapters on a frozen base");
        bind<std::size_t>(sub, t.common.overrides, "--rank", "lora.rank", "adapter rank");
        bind<double>(sub, t.common.overrides, "--alpha", "lora.alpha", "adapter scaling numerator");
        bind<std::vector<std::string>>(sub, t.common.overrides, "--targets", "lora.targets",
                                       "adapted projections (wq,wk,wv,wo)")
            ->delimiter(',');
        bind<double>(sub, t.common.overrides, "--lr", "train.lr", "learning rate");
        bind<std::size_t>(sub, t.common.overrides, "--batch-size", "train.batch_size", "batch size");
        bind<std::size_t>(sub, t.common.overrides, "--epochs", "train.epochs", "epochs");
        bind<double>(sub, t.common.overrides, "--weight-decay", "train.weight_decay", "decoupled weight decay");
        bind_flag(sub, t.common.overrides, "--clip-grad", "train.clip_grad", "clip the gradient norm");
        bind<double>(sub, t.common.overrides, "--clip-norm", "train.clip_norm", "gradient norm bound");
        if (decoder) {
            bind_flag(sub, t.common.overrides, "--completion-only-loss", "train.completion_only_loss",
                      "score only the class phrase tokens");
        }
    };
    auto* cls_cmd = app.add_subcommand("train-cls", "train the encoder classifier");
    add_train(cls_cmd, tcls, false);
    auto* lm_cmd = app.add_subcommand("train-lm", "train the causal language model");
    add_train(lm_cmd, tlm, true);

    // eval
    std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
    std::size_t ev_samples = 3;
    auto* ev_cmd = app.add_subcommand("eval", "evaluate a trained run on a dataset split");
    ev_cmd->add_option("--checkpoint", ev_ckpt, "run directory from train-cls or train-lm")->required();
    ev_cmd->add_option("--data", ev_data, "dataset directory")->required();
    ev_cmd->add_option("--split", ev_split, "train, val or test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    ev_cmd->add_option("--samples", ev_samples, "sample completions to print (decoder)");
    ev_cmd->add_option("--out", ev_out, "also write eval.json here");

    // predict
    PredictArgs pa;
    auto* pr_cmd = app.add_subcommand("predict", "classify one frame or prompt");
    pr_cmd->add_option("--checkpoint", pa.checkpoint, "run directory")->required();
    auto* snr_opt = pr_cmd->add_option("--snr", pa.snr, "frame SNR in dB");
    pr_cmd->add_option("--mod", pa.mod, "frame modulation");
    pr_cmd->add_option("--seed", pa.seed, "frame seed");
    auto* pf_opt = pr_cmd->add_option("--prompt-file", pa.prompt_file, "read the prompt from a file");
    pr_cmd->add_option("--max-new", pa.max_new, "generation budget (decoder)");
    pf_opt->excludes(snr_opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
    }

    try {
        if (gen_cmd->parsed()) {
            return cmd_gen_data(resolve(default_config(), gen), gen_out, out);
        }
        if (cls_cmd->parsed() || lm_cmd->parsed()) {
            const bool decoder = lm_cmd->parsed();
            TrainArgs& t = decoder ? tlm : tcls;
            json defaults = default_config();
            if (decoder) {
                put_train(defaults, train::TrainConfig::desk_decoder());
            }
            return cmd_train(resolve(defaults, t.common), decoder ? model::Arch::Decoder : model::Arch::Encoder,
                             t.data, t.out, t.base, out);
        }
        if (ev_cmd->parsed()) {
            return cmd_eval(ev_ckpt, ev_data, ev_split, ev_out, ev_samples, out);
        }
        if (pr_cmd->parsed()) {
            pa.snr_set = snr_opt->count() > 0;
            return cmd_predict(pa, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::usage);
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::io);
    }
    return static_cast<int>(ExitCode::usage);
}

}  // namespace wifipath::cli
