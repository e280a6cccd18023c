// SPDX-License-Identifier: Apache-2.0
//
// Stage 0-3 orchestration on the synthetic dataset:
//   0  initialize (fresh or from a checkpoint), no training
//   1  multi-dialect training of embedding + backbone
//   2  MoE added; embedding + backbone + gate + experts trained, lambda = 0.1
//   3  LoRA + conditioning adapter attached and trained on a new dialect,
//      everything else frozen

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "diamoe/cfm.hpp"
#include "diamoe/checkpoint.hpp"
#include "diamoe/model.hpp"
#include "diamoe/peft.hpp"

namespace diamoe {

struct RunConfig {
    std::uint64_t seed = 7;
    std::size_t dialects = 3;  // K; the stage-3 dialect gets label K
    std::size_t per_dialect = 80;
    double holdout = 0.2;
    std::optional<std::filesystem::path> init_checkpoint;

    ModelConfig model;  // vocab is filled in from the toy inventory
    LoraConfig lora;
    ToyDatasetOptions data;
    std::map<int, StageConfig> stages;  // keys 1, 2, 3

    static RunConfig defaults();

    /// INI text with [run], [model], [lora], [data], [stage1..3] sections.
    /// Unknown keys are rejected. Missing keys keep their defaults.
    static RunConfig parse(std::string_view ini_text);
    static RunConfig load(const std::filesystem::path& path);

    /// Applies the same seed to the run and every stage.
    void set_seed(std::uint64_t seed);
};

struct CurriculumResult {
    std::vector<StageResult> stages;  // stages 1..3
    std::map<int, Checkpoint> checkpoints;  // 0..3
    Checkpoint adapter_checkpoint;
    double holdout_gate_accuracy = 0.0;
    double stage1_drop = 0.0;
    double stage3_drop = 0.0;
    bool frozen_unchanged = false;  // every non-adapter tensor bit-identical across stage 3
};

/// 1 - mean(last `tail` l_task) / mean(first `head` l_task).
double smoothed_drop(const StageResult& result, std::size_t head = 10, std::size_t tail = 50);

/// Runs stages 0-3. When `out_dir` is set, writes stage{0..3}.ckpt,
/// stage{1..3}_loss.csv, stage3_adapters.ckpt and summary.json there.
CurriculumResult run_curriculum(const RunConfig& config,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace diamoe
