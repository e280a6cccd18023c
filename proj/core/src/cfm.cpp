// SPDX-License-Identifier: Apache-2.0
#include "diamoe/cfm.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <string_view>

namespace diamoe {
namespace {

constexpr std::array<std::string_view, 30> kConsonants{
    "p", "b", "t", "d", "k", "g", "m", "n", "ŋ", "f", "v", "s", "z", "ʃ", "ʒ",
    "x", "h", "l", "r", "j", "w", "ts", "tɕ", "ʈʂ", "ɕ", "ʂ", "ɲ", "ɣ", "β", "θ"};
constexpr std::array<std::string_view, 15> kVowels{
    "a", "e", "i", "o", "u", "ə", "ɛ", "ɔ", "ɪ", "ʊ", "y", "ø", "ɯ", "æ", "ɑ"};

// Interleaves vowels and consonants so every pool gets a mix; lengthened
// variants extend the list when more symbols are needed.
std::vector<SymbolSpec> toy_symbols(std::size_t count) {
    std::vector<SymbolSpec> base;
    std::size_t c = 0;
    std::size_t v = 0;
    while (c < kConsonants.size() || v < kVowels.size()) {
        for (int i = 0; i < 2 && c < kConsonants.size(); ++i) {
            base.push_back({std::string(kConsonants[c++]), SymbolKind::Consonant});
        }
        if (v < kVowels.size()) {
            base.push_back({std::string(kVowels[v++]), SymbolKind::Vowel});
        }
    }
    std::vector<SymbolSpec> out;
    for (std::size_t i = 0; i < count; ++i) {
        SymbolSpec spec = base[i % base.size()];
        for (std::size_t rep = 0; rep < i / base.size(); ++rep) {
            spec.text += "ː";
        }
        out.push_back(std::move(spec));
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

bool labels_fit(const ToyTtsModel& model, std::span<const FlowSample> batch) {
    if (!model.has_moe()) {
        return false;
    }
    return std::all_of(batch.begin(), batch.end(), [&](const FlowSample& s) {
        return s.example->label < model.config().experts;
    });
}

double entropy(const Vec& logits) {
    const Vec p = softmax(logits);
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            h -= p[i] * std::log(p[i]);
        }
    }
    return h;
}

// `trainee` is the same model as `model` when gradients are wanted, else null.
LossBreakdown run_batch(const ToyTtsModel& model, ToyTtsModel* trainee, std::span<const FlowSample> batch,
                        int stage) {
    if (batch.empty()) {
        throw TrainError(TrainErrorKind::EmptyDataset, "empty batch");
    }
    const auto n = batch.size();
    const double features = static_cast<double>(model.config().features);
    const bool gate_loss = labels_fit(model, batch);
    const double lambda = dialect_weight(stage);

    if (trainee != nullptr) {
        trainee->zero_grad();
    }
    double l_task = 0.0;
    std::vector<Vec> logits;
    std::vector<std::size_t> labels;
    for (const FlowSample& s : batch) {
        const Vec& x1 = s.example->target;
        const Vec x_t = (1.0 - s.t) * s.noise + s.t * x1;
        const Vec u = x1 - s.noise;
        ToyTtsModel::Cache cache;
        const Vec v = model.forward(s.example->ids, x_t, s.t, cache);
        const Vec diff = v - u;
        l_task += diff.squaredNorm() / features;
        if (gate_loss) {
            logits.push_back(cache.moe.gate.logits);
            labels.push_back(s.example->label);
        }
        if (trainee != nullptr) {
            const Vec d_field = (2.0 / (features * static_cast<double>(n))) * diff;
            Vec d_logits;
            if (gate_loss && lambda != 0.0) {
                d_logits = lambda * dialect_loss_grad(cache.moe.gate.logits, s.example->label, n);
            }
            trainee->backward(cache, d_field, d_logits);
        }
    }
    l_task /= static_cast<double>(n);
    const double l_dialect = gate_loss ? dialect_loss(logits, labels) : 0.0;
    return total_loss(l_task, l_dialect, stage, n);
}

}  // namespace

double ot_cfm_loss(const Vec& x0, const Vec& x1, double t, const VectorField& field) {
    const Vec x_t = (1.0 - t) * x0 + t * x1;
    const Vec u = x1 - x0;
    return (field(x_t, t) - u).squaredNorm() / static_cast<double>(x0.size());
}

double ot_cfm_loss(const Vec& x0, const Vec& x1, double t, const ToyTtsModel& model, const IpaSequence& cond) {
    return ot_cfm_loss(x0, x1, t, [&](const Vec& x, double tt) { return model.predict(cond, x, tt); });
}

ToyDataset make_toy_dataset(std::size_t dialects, std::size_t per_dialect, std::uint64_t seed,
                            const ToyDatasetOptions& options) {
    if (dialects < 2) {
        throw TrainError(TrainErrorKind::BadK, "toy dataset needs at least two dialects");
    }
    if (options.min_length < 1 || options.max_length < options.min_length || options.dialect_symbols == 0) {
        throw TrainError(TrainErrorKind::BadConfig, "invalid toy dataset options");
    }
    const std::size_t shared = options.shared_symbols;
    const auto specs = toy_symbols(shared + options.dialect_symbols * dialects);
    ToyDataset ds{PhonemeInventory::build(specs), {}, options.sigma, {}};

    Rng rng(seed);
    const auto f = static_cast<Eigen::Index>(options.features);
    for (std::size_t k = 0; k < dialects; ++k) {
        ds.means.push_back(gaussian(f, 1, options.mean_scale, rng).col(0));
    }

    const SymbolId first_user = PhonemeInventory::kBoundary + 1;
    std::uniform_int_distribution<std::size_t> length_dist(options.min_length, options.max_length);
    std::uniform_int_distribution<std::size_t> own_dist(0, options.dialect_symbols - 1);
    std::uniform_int_distribution<std::size_t> shared_dist(0, shared == 0 ? 0 : shared - 1);
    std::bernoulli_distribution own_coin(shared == 0 ? 1.0 : options.own_symbol_prob);
    std::normal_distribution<double> noise(0.0, options.sigma);

    ds.examples.reserve(dialects * per_dialect);
    for (std::size_t k = 0; k < dialects; ++k) {
        const SymbolId pool = first_user + static_cast<SymbolId>(shared + k * options.dialect_symbols);
        for (std::size_t i = 0; i < per_dialect; ++i) {
            ToyExample ex;
            ex.label = k;
            const std::size_t len = length_dist(rng);
            for (std::size_t t = 0; t < len; ++t) {
                if (own_coin(rng)) {
                    ex.ids.ids.push_back(pool + static_cast<SymbolId>(own_dist(rng)));
                } else {
                    ex.ids.ids.push_back(first_user + static_cast<SymbolId>(shared_dist(rng)));
                }
            }
            ex.target = ds.means[k];
            for (Eigen::Index j = 0; j < f; ++j) {
                ex.target[j] += noise(rng);
            }
            ds.examples.push_back(std::move(ex));
        }
    }
    return ds;
}

std::vector<ToyExample> select_dialects(std::span<const ToyExample> examples, std::size_t first,
                                        std::size_t last) {
    std::vector<ToyExample> out;
    for (const auto& ex : examples) {
        if (ex.label >= first && ex.label < last) {
            out.push_back(ex);
        }
    }
    return out;
}

DatasetSplit split_holdout(std::span<const ToyExample> examples, double fraction) {
    std::map<std::size_t, std::vector<const ToyExample*>> by_label;
    for (const auto& ex : examples) {
        by_label[ex.label].push_back(&ex);
    }
    std::map<const ToyExample*, bool> held;
    for (const auto& [label, items] : by_label) {
        const auto n_hold = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(items.size())));
        for (std::size_t i = items.size() - std::min(n_hold, items.size()); i < items.size(); ++i) {
            held[items[i]] = true;
        }
    }
    DatasetSplit split;
    for (const auto& ex : examples) {
        (held.contains(&ex) ? split.holdout : split.train).push_back(ex);
    }
    return split;
}

LossBreakdown evaluate_batch(const ToyTtsModel& model, std::span<const FlowSample> batch, int stage) {
    return run_batch(model, nullptr, batch, stage);
}

LossBreakdown backprop_batch(ToyTtsModel& model, std::span<const FlowSample> batch, int stage) {
    return run_batch(model, &model, batch, stage);
}

Gradients compute_gradients(ToyTtsModel& model, std::span<const FlowSample> batch, int stage) {
    Gradients out;
    out.loss = backprop_batch(model, batch, stage);
    for (const auto& name : trainable_params(model, stage)) {
        out.tensors.emplace_back(name, model.find_param(name)->grad);
    }
    return out;
}

void AdamW::step(ToyTtsModel& model, const std::vector<std::string>& trainable, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (const auto& name : trainable) {
        Param* p = model.find_param(name);
        if (p == nullptr) {
            throw TrainError(TrainErrorKind::BadConfig, "optimizer: unknown parameter " + name);
        }
        auto it = std::find_if(state_.begin(), state_.end(), [&](const auto& e) { return e.first == name; });
        if (it == state_.end()) {
            state_.emplace_back(name, Moments{Mat::Zero(p->rows(), p->cols()), Mat::Zero(p->rows(), p->cols())});
            it = std::prev(state_.end());
        }
        Moments& mo = it->second;
        mo.m = config_.beta1 * mo.m + (1.0 - config_.beta1) * p->grad;
        mo.v = config_.beta2 * mo.v + (1.0 - config_.beta2) * p->grad.cwiseProduct(p->grad);
        const Mat update = (mo.m / bc1).array() / ((mo.v / bc2).array().sqrt() + config_.eps);
        p->value -= lr * (update + config_.weight_decay * p->value);
    }
}

double scheduled_lr(std::size_t step, std::size_t total, std::size_t warmup, double peak) {
    if (step < warmup) {
        return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    if (total <= warmup) {
        return peak;
    }
    const double remaining = static_cast<double>(total - std::min(step, total));
    return peak * remaining / static_cast<double>(total - warmup);
}

StageResult train_stage(std::span<const ToyExample> dataset, const StageConfig& config, ToyTtsModel& model) {
    StageResult result;
    result.stage = config.stage;
    if (config.stage == 0) {
        if (config.steps != 0) {
            throw TrainError(TrainErrorKind::BadConfig, "stage 0 only loads a checkpoint; steps must be 0");
        }
        return result;
    }
    result.trainable = trainable_params(model, config.stage);
    if (dataset.empty()) {
        throw TrainError(TrainErrorKind::EmptyDataset, "training dataset is empty");
    }
    if (config.batch_size == 0) {
        throw TrainError(TrainErrorKind::BadConfig, "batch size must be positive");
    }
    if (config.stage == 2) {
        if (!model.has_moe()) {
            throw TrainError(TrainErrorKind::BadConfig, "stage 2 requires the MoE to be enabled");
        }
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (dataset[i].label >= model.config().experts) {
                throw TrainError(TrainErrorKind::LabelOutOfRange,
                                 "label " + std::to_string(dataset[i].label) + " >= K", i);
            }
        }
    }
    if (config.stage == 3 && !model.has_adapters()) {
        throw TrainError(TrainErrorKind::BadConfig, "stage 3 requires LoRA and conditioning adapters");
    }

    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(config.stage)};
    Rng rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    std::uniform_real_distribution<double> time(0.0, 1.0);
    const auto f = static_cast<Eigen::Index>(model.config().features);

    AdamW optimizer(config.optimizer);
    std::vector<FlowSample> batch(config.batch_size);
    for (std::size_t step = 0; step < config.steps; ++step) {
        for (auto& s : batch) {
            s.example = &dataset[pick(rng)];
            s.noise = gaussian(f, 1, 1.0, rng).col(0);
            s.t = time(rng);
        }
        const LossBreakdown loss = backprop_batch(model, batch, config.stage);
        if (model.has_moe()) {
            double h = 0.0;
            for (const auto& s : batch) {
                h += entropy(model.gate_logits(s.example->ids));
            }
            result.gate_entropy.push_back(h / static_cast<double>(batch.size()));
        }
        optimizer.step(model, result.trainable, scheduled_lr(step, config.steps, config.warmup, config.lr));
        result.curve.push_back(loss);
    }
    return result;
}

std::string loss_curve_csv(const StageResult& result) {
    std::string out = "step,l_task,l_dialect,total\n";
    for (std::size_t i = 0; i < result.curve.size(); ++i) {
        const auto& l = result.curve[i];
        out += std::to_string(i) + ',' + format_double(l.l_task) + ',' + format_double(l.l_dialect) + ',' +
               format_double(l.total) + '\n';
    }
    return out;
}

double gate_accuracy(const ToyTtsModel& model, std::span<const ToyExample> examples) {
    if (examples.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (const auto& ex : examples) {
        const Vec g = model.gate_logits(ex.ids);
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < g.size(); ++i) {
            if (g[i] > g[best]) {
                best = i;
            }
        }
        hits += static_cast<std::size_t>(best) == ex.label ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

double mean_flow_loss(const ToyTtsModel& model, std::span<const ToyExample> examples,
                      std::size_t draws_per_example, std::uint64_t seed) {
    if (examples.empty() || draws_per_example == 0) {
        throw TrainError(TrainErrorKind::EmptyDataset, "mean_flow_loss needs examples and draws");
    }
    Rng rng(seed);
    std::uniform_real_distribution<double> time(0.0, 1.0);
    const auto f = static_cast<Eigen::Index>(model.config().features);
    double sum = 0.0;
    for (const auto& ex : examples) {
        for (std::size_t d = 0; d < draws_per_example; ++d) {
            const Vec x0 = gaussian(f, 1, 1.0, rng).col(0);
            const double t = time(rng);
            sum += ot_cfm_loss(x0, ex.target, t, model, ex.ids);
        }
    }
    return sum / static_cast<double>(examples.size() * draws_per_example);
}

SampleResult integrate_euler(const VectorField& field, const Vec& x0, std::size_t n_steps) {
    if (n_steps == 0) {
        throw TrainError(TrainErrorKind::BadSteps, "sampling needs at least one step");
    }
    SampleResult out;
    out.trajectory.reserve(n_steps + 1);
    out.trajectory.push_back(x0);
    Vec x = x0;
    const double dt = 1.0 / static_cast<double>(n_steps);
    for (std::size_t i = 0; i < n_steps; ++i) {
        const double t = static_cast<double>(i) * dt;
        x += dt * field(x, t);
        out.trajectory.push_back(x);
    }
    out.final_state = x;
    return out;
}

SampleResult sample(const ToyTtsModel& model, const IpaSequence& cond, std::size_t n_steps, std::uint64_t seed) {
    Rng rng(seed);
    const Vec x0 = gaussian(static_cast<Eigen::Index>(model.config().features), 1, 1.0, rng).col(0);
    return integrate_euler([&](const Vec& x, double t) { return model.predict(cond, x, t); }, x0, n_steps);
}

}  // namespace diamoe
