// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "wifipath/cli.hpp"
#include "wifipath/io.hpp"

using namespace wifipath;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "wifipath");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("wifipath_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

std::size_t line_count(const fs::path& p) {
    std::ifstream f(p);
    std::size_t n = 0;
    for (std::string line; std::getline(f, line);) ++n;
    return n;
}

// Small model so CLI plumbing tests stay fast.
fs::path small_config(const fs::path& dir) {
    auto p = dir / "small.json";
    std::ofstream(p) << R"({"model.d_model": 16, "model.n_heads": 2, "model.n_layers": 1,
                           "model.d_ffn": 32, "data.preview_len": 2, "train.epochs": 1,
                           "train.batch_size": 8})";
    return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-data defaults and determinism") {
    auto d = scratch("gen");
    auto r = run({"gen-data", "--out", (d / "a").string()});
    REQUIRE(r.code == 0);
    CHECK(line_count(d / "a" / "examples.jsonl") == 2080);
    CHECK(fs::exists(d / "a" / "manifest.json"));
    CHECK(fs::exists(d / "a" / "vocab.json"));
    CHECK(fs::exists(d / "a" / "resolved_config.json"));
    CHECK(r.out.find("Severe Noise") != std::string::npos);
    CHECK(r.out.find("480") != std::string::npos);

    REQUIRE(run({"gen-data", "--out", (d / "b").string()}).code == 0);
    for (const char* f : {"examples.jsonl", "manifest.json", "vocab.json", "resolved_config.json"})
        CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));

    // The emitted config reproduces the run.
    REQUIRE(run({"gen-data", "--config", (d / "a" / "resolved_config.json").string(), "--out", (d / "c").string()}).code == 0);
    CHECK(slurp(d / "a" / "examples.jsonl") == slurp(d / "c" / "examples.jsonl"));
}

TEST_CASE("gen-data grid flags") {
    auto d = scratch("grid");
    auto r = run({"gen-data", "--snr-min", "-20", "--snr-max", "30", "--snr-step", "2", "--mods", "QPSK",
                  "--frames-per-pair", "1", "--out", d.string()});
    REQUIRE(r.code == 0);
    CHECK(line_count(d / "examples.jsonl") == 26);
}

TEST_CASE("usage errors exit with 2") {
    auto d = scratch("usage");
    CHECK(run({}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"gen-data"}).code == 2);
    CHECK(run({"gen-data", "--out", d.string(), "--mods", "GMSK"}).code == 2);
    CHECK(run({"gen-data", "--out", d.string(), "--snr-step", "0"}).code == 2);
    CHECK(run({"train-cls", "--data", d.string(), "--out", d.string(), "--preset", "nope"}).code == 2);
    std::ofstream(d / "bad.json") << R"({"model.widht": 3})";
    CHECK(run({"gen-data", "--out", d.string(), "--config", (d / "bad.json").string()}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("I/O errors exit with 3") {
    auto d = scratch("io");
    CHECK(run({"train-cls", "--data", (d / "missing").string(), "--out", (d / "o").string()}).code == 3);
    std::ofstream(d / "file") << "x";
    CHECK(run({"gen-data", "--out", (d / "file" / "sub").string(), "--frames-per-pair", "1"}).code == 3);
}

TEST_CASE("train, eval and predict round trip") {
    auto d = scratch("train");
    auto cfg = small_config(d);
    REQUIRE(run({"gen-data", "--config", cfg.string(), "--frames-per-pair", "2", "--out", (d / "data").string()}).code == 0);

    auto r = run({"train-cls", "--config", cfg.string(), "--data", (d / "data").string(), "--out", (d / "cls").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Validation Loss") != std::string::npos);
    for (const char* f : {"model.bin", "model.json", "vocab.json", "report.json", "resolved_config.json"})
        CHECK(fs::exists(d / "cls" / f));

    // Same resolved config, same bytes.
    auto again = run({"train-cls", "--config", (d / "cls" / "resolved_config.json").string(), "--data",
                      (d / "data").string(), "--out", (d / "cls2").string()});
    REQUIRE(again.code == 0);
    for (const char* f : {"model.bin", "report.json", "resolved_config.json"})
        CHECK(slurp(d / "cls" / f) == slurp(d / "cls2" / f));

    auto ev = run({"eval", "--checkpoint", (d / "cls").string(), "--data", (d / "data").string()});
    REQUIRE(ev.code == 0);
    CHECK(ev.out.find("\"accuracy\"") != std::string::npos);

    auto pr = run({"predict", "--checkpoint", (d / "cls").string(), "--snr", "20", "--mod", "QPSK"});
    REQUIRE(pr.code == 0);
    CHECK(pr.out.find("Noise") != std::string::npos);
}

TEST_CASE("train-cls with adapters prints the reduction") {
    auto d = scratch("lora");
    auto cfg = small_config(d);
    REQUIRE(run({"gen-data", "--config", cfg.string(), "--frames-per-pair", "1", "--out", (d / "data").string()}).code == 0);
    auto r = run({"train-cls", "--config", cfg.string(), "--lora", "--data", (d / "data").string(), "--out", (d / "run").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("reduction") != std::string::npos);
    CHECK(r.out.find("%") != std::string::npos);
    CHECK(fs::exists(d / "run" / "adapters.bin"));
    CHECK(run({"eval", "--checkpoint", (d / "run").string(), "--data", (d / "data").string()}).code == 0);
}

TEST_CASE("train-lm defaults to two epochs and presets resolve") {
    auto d = scratch("lm");
    auto cfg = small_config(d);
    std::ofstream(d / "lm.json") << R"({"model.d_model": 16, "model.n_heads": 2, "model.n_layers": 1,
                                        "model.d_ffn": 32})";
    REQUIRE(run({"gen-data", "--config", cfg.string(), "--frames-per-pair", "1", "--out", (d / "data").string()}).code == 0);
    auto r = run({"train-lm", "--config", (d / "lm.json").string(), "--data", (d / "data").string(), "--out", (d / "lm").string()});
    REQUIRE(r.code == 0);
    auto rep = nlohmann::json::parse(slurp(d / "lm" / "report.json"));
    CHECK(rep["rows"].size() == 2);
    CHECK(r.out.find("Accuracy") == std::string::npos);

    auto pr = run({"predict", "--checkpoint", (d / "lm").string(), "--snr", "-14", "--max-new", "2"});
    CHECK(pr.code == 0);
    CHECK(pr.out.find("Pathology Type:") != std::string::npos);

    auto pe = run({"train-cls", "--config", cfg.string(), "--preset", "paper-encoder", "--epochs", "1",
                   "--data", (d / "data").string(), "--out", (d / "pe").string()});
    REQUIRE(pe.code == 0);
    auto resolved = nlohmann::json::parse(slurp(d / "pe" / "resolved_config.json"));
    CHECK(resolved["train.lr"] == 2e-5);
    CHECK(resolved["train.batch_size"] == 32);
    CHECK(resolved["train.epochs"] == 1);
    CHECK(resolved["train.weight_decay"] == 0.01);
}

TEST_CASE("vocabulary mismatch exits with 5") {
    auto d = scratch("vocab");
    auto cfg = small_config(d);
    REQUIRE(run({"gen-data", "--config", cfg.string(), "--frames-per-pair", "1", "--out", (d / "data").string()}).code == 0);
    REQUIRE(run({"train-cls", "--config", cfg.string(), "--data", (d / "data").string(), "--out", (d / "run").string()}).code == 0);
    REQUIRE(run({"gen-data", "--config", cfg.string(), "--frames-per-pair", "1", "--mods", "OOK", "--out", (d / "other").string()}).code == 0);
    auto r = run({"eval", "--checkpoint", (d / "run").string(), "--data", (d / "other").string()});
    CHECK(r.code == 5);
    CHECK(r.err.find("vocab") != std::string::npos);
}

TEST_CASE("divergence exits with 4") {
    auto d = scratch("diverge");
    auto cfg = small_config(d);
    REQUIRE(run({"gen-data", "--config", cfg.string(), "--frames-per-pair", "1", "--out", (d / "data").string()}).code == 0);
    auto r = run({"train-cls", "--config", cfg.string(), "--lr", "1e300", "--epochs", "3", "--data",
                  (d / "data").string(), "--out", (d / "run").string()});
    CHECK(r.code == 4);
    CHECK(r.err.find("divergence") != std::string::npos);
}

}
