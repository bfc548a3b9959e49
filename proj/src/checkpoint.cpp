// SPDX-License-Identifier: Apache-2.0
#include "wifipath/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "wifipath/errors.hpp"
#include "wifipath/io.hpp"

namespace wifipath::checkpoint {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint64_t get(int width) {
        if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) {
            throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
        }
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

model::TensorSet set_for(Kind kind) {
    return kind == Kind::Model ? model::TensorSet::Base : model::TensorSet::Adapters;
}

struct Header {
    Kind kind;
    model::ModelConfig config;
    std::uint32_t tensor_count;
};

Header read_header(Reader& in) {
    char magic[4];
    for (char& c : magic) c = static_cast<char>(in.get(1));
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("not a checkpoint (bad magic)");
    }
    const auto version = in.u32();
    if (version != kVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    Header h{};
    const auto kind = in.u32();
    if (kind > 1) throw IoError("unknown checkpoint kind " + std::to_string(kind));
    h.kind = static_cast<Kind>(kind);
    const auto arch = in.u32();
    if (arch > 1) throw IoError("unknown architecture code " + std::to_string(arch));
    h.config.arch = arch == 0 ? model::Arch::Encoder : model::Arch::Decoder;
    h.config.vocab_size = in.u32();
    h.config.d_model = in.u32();
    h.config.n_heads = in.u32();
    h.config.n_layers = in.u32();
    h.config.d_ffn = in.u32();
    h.config.max_len = in.u32();
    h.config.n_classes = in.u32();
    h.config.dropout = in.f64();
    h.tensor_count = in.u32();
    return h;
}

nlohmann::json load_sidecar(const std::filesystem::path& bin) {
    try {
        return nlohmann::json::parse(io::read_file(sidecar_path(bin)));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed checkpoint sidecar: " + std::string(e.what()));
    }
}

}  // namespace

std::string serialize(const model::ModelParams& params, Kind kind) {
    const auto& c = params.config;
    const auto tensors = model::named_tensors(params, set_for(kind));
    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(kind));
    put_u32(out, c.arch == model::Arch::Encoder ? 0 : 1);
    for (std::size_t v : {c.vocab_size, c.d_model, c.n_heads, c.n_layers, c.d_ffn, c.max_len, c.n_classes}) {
        put_u32(out, static_cast<std::uint32_t>(v));
    }
    put_u64(out, std::bit_cast<std::uint64_t>(c.dropout));
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& nt : tensors) {
        put_u64(out, nt.tensor.numel());
        for (double v : nt.tensor.values()) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    return out;
}

model::ModelConfig peek_config(std::string_view bytes) {
    Reader in(bytes);
    return read_header(in).config;
}

void deserialize_into(std::string_view bytes, model::ModelParams& params, Kind kind) {
    Reader in(bytes);
    const Header h = read_header(in);
    if (h.kind != kind) {
        throw IoError("checkpoint holds a different kind of payload");
    }
    if (!(h.config == params.config)) {
        throw IncompatibleError("checkpoint config does not match the model");
    }
    auto tensors = model::named_tensors(params, set_for(kind));
    if (h.tensor_count != tensors.size()) {
        throw IncompatibleError("checkpoint has " + std::to_string(h.tensor_count) + " tensors, model expects " +
                                std::to_string(tensors.size()));
    }
    for (auto& nt : tensors) {
        const auto n = in.u64();
        if (n != nt.tensor.numel()) {
            throw IncompatibleError("tensor " + nt.name + " size mismatch in checkpoint");
        }
        for (double& v : nt.tensor.values()) {
            v = in.f64();
        }
    }
    if (!in.done()) {
        throw IoError("trailing bytes after checkpoint payload");
    }
}

std::filesystem::path sidecar_path(const std::filesystem::path& bin) {
    auto p = bin;
    p.replace_extension(".json");
    return p;
}

void save_model(const model::ModelParams& params, const std::filesystem::path& bin, std::uint64_t vocab_hash) {
    io::write_file_atomic(bin, serialize(params, Kind::Model));
    nlohmann::json side{{"kind", "model"}, {"config", params.config.to_json()}, {"vocab_hash", vocab_hash}};
    io::write_file_atomic(sidecar_path(bin), side.dump(2) + "\n");
}

LoadedModel load_model(const std::filesystem::path& bin) {
    const std::string bytes = io::read_file(bin);
    const auto config = peek_config(bytes);
    const auto side = load_sidecar(bin);
    LoadedModel out;
    out.params = model::init_params(config, 0);
    deserialize_into(bytes, out.params, Kind::Model);
    out.vocab_hash = side.at("vocab_hash").get<std::uint64_t>();
    return out;
}

void save_adapters(const model::ModelParams& params, const lora::LoraConfig& config,
                   const std::filesystem::path& bin, std::uint64_t vocab_hash) {
    if (!params.has_adapters()) {
        throw Error("no adapters present");
    }
    io::write_file_atomic(bin, serialize(params, Kind::Adapters));
    nlohmann::json side{{"kind", "adapters"},
                        {"config", params.config.to_json()},
                        {"lora", config.to_json()},
                        {"vocab_hash", vocab_hash}};
    io::write_file_atomic(sidecar_path(bin), side.dump(2) + "\n");
}

model::ModelParams load_adapters(model::ModelParams base, const std::filesystem::path& bin) {
    const std::string bytes = io::read_file(bin);
    const auto side = load_sidecar(bin);
    const auto config = lora::LoraConfig::from_json(side.at("lora"));
    auto adapted = lora::inject(std::move(base), config, 0);
    deserialize_into(bytes, adapted, Kind::Adapters);
    return adapted;
}

}  // namespace wifipath::checkpoint
