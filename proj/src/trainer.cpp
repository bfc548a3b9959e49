// SPDX-License-Identifier: Apache-2.0
#include "wifipath/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "wifipath/errors.hpp"
#include "wifipath/rng.hpp"

namespace wifipath::train {

using model::ModelParams;
using model::NamedTensor;
using tensor::Tensor;
using tokenizer::TokenSeq;

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error("learning_rate must be finite and non-negative");
    }
    if (!(weight_decay >= 0.0)) {
        throw Error("weight_decay must be non-negative");
    }
    if (batch_size < 1 || epochs < 1) {
        throw Error("batch_size and epochs must be at least 1");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
        throw Error("invalid AdamW betas/eps");
    }
    if (clip_grad && !(clip_norm > 0.0)) {
        throw Error("clip_norm must be positive");
    }
}

nlohmann::json TrainConfig::to_json() const {
    return {{"learning_rate", learning_rate}, {"batch_size", batch_size},
            {"epochs", epochs},               {"weight_decay", weight_decay},
            {"beta1", beta1},                 {"beta2", beta2},
            {"eps", eps},                     {"seed", seed},
            {"shuffle", shuffle},             {"clip_grad", clip_grad},
            {"clip_norm", clip_norm},         {"completion_only_loss", completion_only_loss}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.seed = j.value("seed", c.seed);
    c.shuffle = j.value("shuffle", c.shuffle);
    c.clip_grad = j.value("clip_grad", c.clip_grad);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.completion_only_loss = j.value("completion_only_loss", c.completion_only_loss);
    c.validate();
    return c;
}

TrainConfig TrainConfig::paper_encoder() {
    TrainConfig c;
    c.learning_rate = 2e-5;
    c.batch_size = 32;
    c.epochs = 3;
    return c;
}

TrainConfig TrainConfig::paper_decoder() {
    TrainConfig c;
    c.learning_rate = 5e-5;
    c.batch_size = 4;
    c.epochs = 2;
    return c;
}

TrainConfig TrainConfig::desk_encoder() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.batch_size = 8;
    c.epochs = 10;
    return c;
}

TrainConfig TrainConfig::desk_decoder() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.batch_size = 4;
    c.epochs = 2;
    return c;
}

void adamw_step(std::span<const NamedTensor> params, AdamWState& state, const TrainConfig& cfg) {
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
        state.step = 0;
    }
    for (const auto& nt : params) {
        if (!nt.tensor.requires_grad() || !nt.tensor.has_grad()) continue;
        for (double g : nt.tensor.grad()) {
            if (!std::isfinite(g)) {
                throw DivergenceError("divergence detected in " + nt.name);
            }
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor w = params[i].tensor;
        if (!w.requires_grad()) continue;
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != w.numel()) {
            m.assign(w.numel(), 0.0);
            v.assign(w.numel(), 0.0);
        }
        auto values = w.values();
        const auto grad = w.grad();
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double g = grad.empty() ? 0.0 : grad[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            values[k] = values[k] * decay - cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.eps));
        }
    }
}

double clip_grad_norm(std::span<const NamedTensor> params, double max_norm) {
    double sq = 0.0;
    for (const auto& nt : params) {
        if (!nt.tensor.requires_grad()) continue;
        for (double g : nt.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double f = max_norm / norm;
        for (const auto& nt : params) {
            if (!nt.tensor.requires_grad()) continue;
            Tensor t = nt.tensor;
            for (double& g : t.grad()) g *= f;
        }
    }
    return norm;
}

Metrics metrics(std::span<const int> predictions, std::span<const int> gold) {
    if (predictions.size() != gold.size()) {
        throw Error("metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(gold.size()) + " gold labels");
    }
    if (gold.empty()) {
        throw Error("metrics: no examples");
    }
    constexpr std::size_t C = dataset::kNumClasses;
    Metrics out;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const int g = gold[i], p = predictions[i];
        if (g < 0 || g >= static_cast<int>(C) || p < 0 || p >= static_cast<int>(C)) {
            throw Error("metrics: class index out of range");
        }
        ++out.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
        correct += g == p ? 1 : 0;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());

    double macro = 0.0, weighted = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t tp = out.confusion[c][c], fp = 0, fn = 0;
        for (std::size_t o = 0; o < C; ++o) {
            if (o == c) continue;
            fp += out.confusion[o][c];
            fn += out.confusion[c][o];
        }
        const std::size_t support = tp + fn;
        if (tp + fp + fn == 0) continue;
        const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        macro += f1;
        weighted += f1 * static_cast<double>(support);
        ++counted;
    }
    out.f1_macro = macro / static_cast<double>(counted);
    out.f1_weighted = weighted / static_cast<double>(gold.size());
    return out;
}

nlohmann::json Metrics::to_json() const {
    return {{"accuracy", accuracy}, {"f1_macro", f1_macro}, {"f1_weighted", f1_weighted}, {"confusion", confusion}};
}

nlohmann::json TrainReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}};
        if (kind == ReportKind::Classifier) {
            row["accuracy"] = r.accuracy.value_or(0.0);
            row["f1"] = r.f1_macro.value_or(0.0);
        }
        rows_json.push_back(std::move(row));
    }
    nlohmann::json j{{"kind", kind == ReportKind::Classifier ? "classifier" : "causal"},
                     {"rows", std::move(rows_json)},
                     {"best_epoch", best_epoch}};
    if (kind == ReportKind::Classifier) {
        j["f1_weighted"] = f1_weighted;
    }
    return j;
}

std::string TrainReport::render_table() const {
    const bool cls = kind == ReportKind::Classifier;
    std::string out;
    char line[160];
    if (cls) {
        std::snprintf(line, sizeof(line), "%-5s  %-13s  %-15s  %-8s  %-6s\n", "Epoch", "Training Loss",
                      "Validation Loss", "Accuracy", "F1");
    } else {
        std::snprintf(line, sizeof(line), "%-5s  %-13s  %-15s\n", "Epoch", "Training Loss", "Validation Loss");
    }
    out += line;
    for (const auto& r : rows) {
        if (cls) {
            std::snprintf(line, sizeof(line), "%-5zu  %-13.5f  %-15.5f  %-8.5f  %-6.5f\n", r.epoch, r.train_loss,
                          r.val_loss, r.accuracy.value_or(0.0), r.f1_macro.value_or(0.0));
        } else {
            std::snprintf(line, sizeof(line), "%-5zu  %-13.4f  %-15.4f\n", r.epoch, r.train_loss, r.val_loss);
        }
        out += line;
    }
    return out;
}

std::vector<LabeledSeq> encode_classifier(const tokenizer::Vocab& vocab,
                                          std::span<const dataset::PromptExample> examples,
                                          std::size_t max_len) {
    std::vector<LabeledSeq> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        out.push_back({tokenizer::encode(vocab, ex.prompt, tokenizer::EncodeMode::Classifier, max_len),
                       static_cast<int>(ex.label)});
    }
    return out;
}

std::vector<TokenSeq> encode_causal(const tokenizer::Vocab& vocab, std::span<const dataset::PromptExample> examples,
                                    std::size_t max_len) {
    std::vector<TokenSeq> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        out.push_back(tokenizer::encode(vocab, ex.prompt, tokenizer::EncodeMode::Causal, max_len,
                                        dataset::pathology_name(ex.label)));
    }
    return out;
}

namespace {

void zero_grads(std::span<const NamedTensor> params) {
    for (const auto& nt : params) {
        Tensor t = nt.tensor;
        t.zero_grad();
    }
}

void check_loss(double loss) {
    if (!std::isfinite(loss)) {
        throw DivergenceError("divergence detected: non-finite loss");
    }
}

std::vector<std::vector<double>> snapshot(std::span<const NamedTensor> params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& nt : params) {
        out.emplace_back(nt.tensor.values().begin(), nt.tensor.values().end());
    }
    return out;
}

void restore(std::span<const NamedTensor> params, const std::vector<std::vector<double>>& saved) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        std::copy(saved[i].begin(), saved[i].end(), t.values().begin());
    }
}

// Next-token targets and weights for a causal batch, flattened [b*t].
void causal_targets(const model::TokenBatch& batch, std::span<const TokenSeq* const> rows, bool completion_only,
                    std::vector<int>& targets, std::vector<double>& weights) {
    const std::size_t b = batch.batch, t = batch.len;
    targets.assign(b * t, 0);
    weights.assign(b * t, 0.0);
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t p = 0; p + 1 < t; ++p) {
            const std::size_t next = r * t + p + 1;
            if (!batch.mask[next]) continue;
            if (completion_only && p + 1 < rows[r]->completion_start) continue;
            targets[r * t + p] = batch.ids[next];
            weights[r * t + p] = 1.0;
        }
    }
}

struct CausalBatchLoss {
    Tensor loss;
    double count = 0.0;
};

CausalBatchLoss causal_batch_loss(const ModelParams& params, std::span<const TokenSeq* const> rows,
                                  bool completion_only, model::ForwardContext ctx) {
    const auto batch = model::make_batch(rows);
    std::vector<int> targets;
    std::vector<double> weights;
    causal_targets(batch, rows, completion_only, targets, weights);
    const double count = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (count == 0.0) {
        return {Tensor(), 0.0};
    }
    const Tensor logits = model::decoder_forward(params, batch, ctx);
    const Tensor flat = tensor::reshape(logits, {batch.batch * batch.len, params.config.vocab_size});
    return {tensor::cross_entropy(flat, targets, weights), count};
}

template <class T>
std::vector<std::size_t> epoch_order(std::span<const T> data, bool shuffle, Rng& rng) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) rng.shuffle(order);
    return order;
}

}  // namespace

ClassifierEval evaluate_classifier(const ModelParams& params, std::span<const LabeledSeq> data,
                                   std::size_t batch_size) {
    if (data.empty()) {
        throw Error("empty split");
    }
    tensor::NoGradGuard no_grad;
    ClassifierEval out;
    std::vector<int> gold;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        std::vector<const TokenSeq*> rows;
        std::vector<int> labels;
        for (std::size_t i = start; i < end; ++i) {
            rows.push_back(&data[i].seq);
            labels.push_back(data[i].label);
        }
        const Tensor logits = model::encoder_forward(params, model::make_batch(rows));
        loss_sum += tensor::cross_entropy(logits, labels).item() * static_cast<double>(rows.size());
        const std::size_t c = logits.dim(1);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto row = logits.values().subspan(r * c, c);
            out.predictions.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
        }
        gold.insert(gold.end(), labels.begin(), labels.end());
    }
    out.loss = loss_sum / static_cast<double>(data.size());
    out.metrics = metrics(out.predictions, gold);
    return out;
}

double causal_loss(const ModelParams& params, std::span<const TokenSeq> data, std::size_t batch_size,
                   bool completion_only) {
    if (data.empty()) {
        throw Error("empty split");
    }
    tensor::NoGradGuard no_grad;
    double total = 0.0, count = 0.0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        std::vector<const TokenSeq*> rows;
        for (std::size_t i = start; i < end; ++i) rows.push_back(&data[i]);
        const auto part = causal_batch_loss(params, rows, completion_only, {});
        if (part.count == 0.0) continue;
        total += part.loss.item() * part.count;
        count += part.count;
    }
    if (count == 0.0) {
        throw Error("no target tokens in split");
    }
    return total / count;
}

TrainReport train_classifier(ModelParams& params, std::span<const LabeledSeq> train_set,
                             std::span<const LabeledSeq> val_set, const TrainConfig& cfg,
                             const EpochCallback& on_epoch) {
    cfg.validate();
    tensor::retain_freed_memory();
    if (params.config.arch != model::Arch::Encoder) {
        throw Error("train_classifier needs an encoder model");
    }
    if (train_set.empty() || val_set.empty()) {
        throw Error("empty split");
    }
    const auto tensors = model::named_tensors(params);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
    AdamWState state;
    TrainReport report;
    report.kind = ReportKind::Classifier;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_values;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = epoch_order(train_set, cfg.shuffle, shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const TokenSeq*> rows;
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                rows.push_back(&train_set[order[i]].seq);
                labels.push_back(train_set[order[i]].label);
            }
            zero_grads(tensors);
            const Tensor logits =
                model::encoder_forward(params, model::make_batch(rows), {true, &dropout_rng});
            const Tensor loss = tensor::cross_entropy(logits, labels);
            check_loss(loss.item());
            if (loss.requires_grad()) {
                tensor::backward(loss);
            }
            if (cfg.clip_grad) clip_grad_norm(tensors, cfg.clip_norm);
            adamw_step(tensors, state, cfg);
            loss_sum += loss.item() * static_cast<double>(rows.size());
        }
        const auto eval = evaluate_classifier(params, val_set);
        check_loss(eval.loss);
        EpochMetrics row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(train_set.size());
        row.val_loss = eval.loss;
        row.accuracy = eval.metrics.accuracy;
        row.f1_macro = eval.metrics.f1_macro;
        report.rows.push_back(row);
        report.f1_weighted.push_back(eval.metrics.f1_weighted);
        if (eval.loss < best) {
            best = eval.loss;
            report.best_epoch = epoch;
            best_values = snapshot(tensors);
        }
        if (on_epoch) on_epoch(row);
    }
    restore(tensors, best_values);
    return report;
}

TrainReport train_causal(ModelParams& params, std::span<const TokenSeq> train_set, std::span<const TokenSeq> val_set,
                         const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    tensor::retain_freed_memory();
    if (params.config.arch != model::Arch::Decoder) {
        throw Error("train_causal needs a decoder model");
    }
    if (train_set.empty() || val_set.empty()) {
        throw Error("empty split");
    }
    const auto tensors = model::named_tensors(params);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
    AdamWState state;
    TrainReport report;
    report.kind = ReportKind::Causal;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_values;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = epoch_order(train_set, cfg.shuffle, shuffle_rng);
        double loss_sum = 0.0, token_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const TokenSeq*> rows;
            for (std::size_t i = start; i < end; ++i) rows.push_back(&train_set[order[i]]);
            zero_grads(tensors);
            const auto part = causal_batch_loss(params, rows, cfg.completion_only_loss, {true, &dropout_rng});
            if (part.count == 0.0) continue;
            check_loss(part.loss.item());
            if (part.loss.requires_grad()) {
                tensor::backward(part.loss);
            }
            if (cfg.clip_grad) clip_grad_norm(tensors, cfg.clip_norm);
            adamw_step(tensors, state, cfg);
            loss_sum += part.loss.item() * part.count;
            token_sum += part.count;
        }
        EpochMetrics row;
        row.epoch = epoch;
        row.train_loss = token_sum > 0.0 ? loss_sum / token_sum : 0.0;
        row.val_loss = causal_loss(params, val_set, 16, cfg.completion_only_loss);
        check_loss(row.val_loss);
        report.rows.push_back(row);
        if (row.val_loss < best) {
            best = row.val_loss;
            report.best_epoch = epoch;
            best_values = snapshot(tensors);
        }
        if (on_epoch) on_epoch(row);
    }
    restore(tensors, best_values);
    return report;
}

}  // namespace wifipath::train
