// SPDX-License-Identifier: Apache-2.0
//
// Optimal-transport conditional flow matching on the toy model, the
// synthetic multi-dialect dataset, AdamW with warmup/linear decay, staged
// training and Euler sampling.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "diamoe/error.hpp"
#include "diamoe/model.hpp"
#include "diamoe/moe_embed.hpp"
#include "diamoe/phoneme.hpp"
#include "diamoe/tensor.hpp"

namespace diamoe {

enum class TrainErrorKind { EmptyDataset, BadConfig, BadK, LabelOutOfRange, BadSteps };
using TrainError = KindedError<TrainErrorKind>;

/// v(x, t)
using VectorField = std::function<Vec(const Vec& x, double t)>;

/// Straight-line path x_t = (1-t) x0 + t x1 with target field u = x1 - x0;
/// returns |v(x_t, t) - u|^2 / F.
double ot_cfm_loss(const Vec& x0, const Vec& x1, double t, const VectorField& field);
double ot_cfm_loss(const Vec& x0, const Vec& x1, double t, const ToyTtsModel& model,
                   const IpaSequence& cond);

struct ToyExample {
    IpaSequence ids;
    std::size_t label = 0;
    Vec target;  // x1
};

struct ToyDataset {
    PhonemeInventory inventory;
    std::vector<Vec> means;  // per dialect
    double sigma = 0.1;
    std::vector<ToyExample> examples;  // dialect-major order
};

struct ToyDatasetOptions {
    std::size_t features = 8;
    std::size_t shared_symbols = 6;
    std::size_t dialect_symbols = 6;
    std::size_t min_length = 4;
    std::size_t max_length = 8;
    double own_symbol_prob = 0.75;
    double mean_scale = 1.0;
    double sigma = 0.1;
};

/// For each dialect k, `per_dialect` examples whose IPA sequences favour a
/// dialect-specific symbol pool and whose targets are drawn from
/// N(mu_k, sigma^2 I). Throws TrainError{BadK} when dialects < 2.
ToyDataset make_toy_dataset(std::size_t dialects, std::size_t per_dialect, std::uint64_t seed,
                            const ToyDatasetOptions& options = {});

/// Examples whose label is in [first, last).
std::vector<ToyExample> select_dialects(std::span<const ToyExample> examples, std::size_t first,
                                        std::size_t last);

struct DatasetSplit {
    std::vector<ToyExample> train;
    std::vector<ToyExample> holdout;
};

/// Per dialect, the trailing ceil(fraction * n_k) examples are held out.
DatasetSplit split_holdout(std::span<const ToyExample> examples, double fraction);

/// One noised training sample drawn for a step.
struct FlowSample {
    const ToyExample* example = nullptr;
    Vec noise;  // x0
    double t = 0.0;
};

/// Batch objective; dialect loss is evaluated whenever the model has a gate
/// and every label is a valid expert index (0 otherwise).
LossBreakdown evaluate_batch(const ToyTtsModel& model, std::span<const FlowSample> batch, int stage);

/// Zeroes the model gradients, then accumulates d total / d theta for every
/// parameter (frozen ones included).
LossBreakdown backprop_batch(ToyTtsModel& model, std::span<const FlowSample> batch, int stage);

/// Gradients of the stage objective restricted to trainable_params(stage).
struct Gradients {
    LossBreakdown loss;
    std::vector<std::pair<std::string, Mat>> tensors;
};
Gradients compute_gradients(ToyTtsModel& model, std::span<const FlowSample> batch, int stage);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam over named parameters.
class AdamW {
public:
    explicit AdamW(AdamWConfig config = {}) : config_(config) {}

    /// Updates only the parameters named in `trainable`.
    void step(ToyTtsModel& model, const std::vector<std::string>& trainable, double lr);
    std::int64_t steps() const noexcept { return step_; }

private:
    struct Moments {
        Mat m;
        Mat v;
    };
    AdamWConfig config_;
    std::int64_t step_ = 0;
    std::vector<std::pair<std::string, Moments>> state_;
};

/// Linear warmup to `peak` over `warmup` steps, then linear decay to zero at
/// `total` steps. `step` is zero-based.
double scheduled_lr(std::size_t step, std::size_t total, std::size_t warmup, double peak);

struct StageConfig {
    int stage = 1;
    std::size_t steps = 500;
    double lr = 1e-2;
    std::size_t warmup = 50;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    AdamWConfig optimizer{};

    double lambda() const noexcept { return dialect_weight(stage); }
};

struct StageResult {
    int stage = 0;
    std::vector<LossBreakdown> curve;
    std::vector<double> gate_entropy;  // mean routing entropy per step, MoE stages only
    std::vector<std::string> trainable;
};

/// Runs `config.steps` AdamW steps on `model`, updating only the stage's
/// trainable parameters. Stage 2 needs the MoE enabled and labels < K;
/// stage 3 needs adapters attached. Deterministic in config.seed.
StageResult train_stage(std::span<const ToyExample> dataset, const StageConfig& config, ToyTtsModel& model);

/// `step,l_task,l_dialect,total` with shortest round-trip float formatting.
std::string loss_curve_csv(const StageResult& result);

/// Fraction of examples whose gate argmax equals their label.
double gate_accuracy(const ToyTtsModel& model, std::span<const ToyExample> examples);

/// Mean OT-CFM loss over fixed seeded noise draws; used to compare models
/// on the same samples.
double mean_flow_loss(const ToyTtsModel& model, std::span<const ToyExample> examples,
                      std::size_t draws_per_example, std::uint64_t seed);

struct SampleResult {
    Vec final_state;
    std::vector<Vec> trajectory;  // n_steps + 1 states, x(0) first
};

/// Euler integration x_{i+1} = x_i + dt v(x_i, t_i), t_i = i / n_steps.
SampleResult integrate_euler(const VectorField& field, const Vec& x0, std::size_t n_steps);

/// Draws x(0) ~ N(0, I) from `seed` and integrates the model's field.
SampleResult sample(const ToyTtsModel& model, const IpaSequence& cond, std::size_t n_steps,
                    std::uint64_t seed);

}  // namespace diamoe
