// SPDX-License-Identifier: Apache-2.0
#include "wifipath/lora.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wifipath/errors.hpp"
#include "wifipath/rng.hpp"

namespace wifipath::lora {

using model::Linear;
using model::ModelParams;
using tensor::Tensor;

namespace {

Linear& projection(model::Block& blk, const std::string& name) {
    if (name == "wq") return blk.wq;
    if (name == "wk") return blk.wk;
    if (name == "wv") return blk.wv;
    if (name == "wo") return blk.wo;
    throw Error("unknown LoRA target \"" + name + "\"");
}

}  // namespace

void LoraConfig::validate() const {
    if (rank < 1) {
        throw Error("LoRA rank must be at least 1");
    }
    if (targets.empty()) {
        throw Error("LoRA needs at least one target");
    }
    model::Block probe;
    for (const auto& t : targets) {
        projection(probe, t);
    }
}

nlohmann::json LoraConfig::to_json() const {
    return {{"rank", rank}, {"alpha", alpha}, {"targets", targets}, {"train_head", train_head}};
}

LoraConfig LoraConfig::from_json(const nlohmann::json& j) {
    LoraConfig c;
    c.rank = j.at("rank").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    c.targets = j.at("targets").get<std::vector<std::string>>();
    c.train_head = j.at("train_head").get<bool>();
    c.validate();
    return c;
}

ModelParams inject(ModelParams params, const LoraConfig& config, std::uint64_t seed) {
    config.validate();
    if (params.has_adapters()) {
        throw Error("model already carries adapters");
    }
    model::set_trainable(params, false);
    Rng rng(seed);
    for (auto& blk : params.blocks) {
        for (const auto& name : config.targets) {
            Linear& lin = projection(blk, name);
            const double bound = 1.0 / std::sqrt(static_cast<double>(lin.d_in()));
            model::Adapter ad;
            ad.rank = config.rank;
            ad.alpha = config.alpha;
            ad.a = Tensor::uniform({config.rank, lin.d_in()}, rng, -bound, bound, true);
            ad.b = Tensor::zeros({lin.d_out(), config.rank}, true);
            lin.adapter = std::move(ad);
        }
    }
    if (config.train_head && params.config.arch == model::Arch::Encoder) {
        params.head.weight.set_requires_grad(true);
        params.head.bias.set_requires_grad(true);
    }
    return params;
}

double LoraReport::reduction_percent() const {
    if (total == 0) return 0.0;
    return 100.0 * static_cast<double>(total - trainable) / static_cast<double>(total);
}

std::string LoraReport::reduction_text() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", reduction_percent());
    return buf;
}

nlohmann::json LoraReport::to_json() const {
    return {{"trainable", trainable},
            {"total", total},
            {"reduction_percent", reduction_percent()},
            {"reduction", reduction_text()}};
}

LoraReport report(const ModelParams& params) {
    return LoraReport{model::count_parameters(params, true), model::count_parameters(params, false)};
}

LoraReport report_from_counts(std::uint64_t total, std::uint64_t trainable) {
    if (trainable > total) {
        throw Error("trainable count exceeds total");
    }
    return LoraReport{trainable, total};
}

std::uint64_t closed_form_trainable(const model::ModelConfig& m, const LoraConfig& config) {
    // Attention projections are all d_model x d_model.
    std::uint64_t total = m.n_layers * config.targets.size() * config.rank * (m.d_model + m.d_model);
    if (config.train_head && m.arch == model::Arch::Encoder) {
        total += m.d_model * m.n_classes + m.n_classes;
    }
    return total;
}

ModelParams merge(ModelParams params) {
    if (!params.has_adapters()) {
        throw Error("no adapters present");
    }
    params = model::clone(params);
    for (auto& blk : params.blocks) {
        for (Linear* lin : {&blk.wq, &blk.wk, &blk.wv, &blk.wo, &blk.ffn1, &blk.ffn2}) {
            if (!lin->adapter) continue;
            const auto& ad = *lin->adapter;
            const std::size_t d_in = lin->d_in(), d_out = lin->d_out(), r = ad.rank;
            const double s = ad.scaling();
            auto w = lin->weight.values();
            const auto a = ad.a.values();
            const auto b = ad.b.values();
            for (std::size_t i = 0; i < d_in; ++i) {
                for (std::size_t o = 0; o < d_out; ++o) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < r; ++k) acc += b[o * r + k] * a[k * d_in + i];
                    w[i * d_out + o] += s * acc;
                }
            }
            lin->adapter.reset();
        }
    }
    return params;
}

}  // namespace wifipath::lora
