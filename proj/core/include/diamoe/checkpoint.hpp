// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container of named float64 tensors plus a flat string
// metadata map. Byte layout is documented in docs/checkpoint_format.md.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diamoe/error.hpp"
#include "diamoe/model.hpp"
#include "diamoe/tensor.hpp"

namespace diamoe {

enum class CheckpointErrorKind { VersionMismatch, ShapeMismatch, UnknownTensor, Truncated, MissingMeta };
using CheckpointError = KindedError<CheckpointErrorKind>;

struct NamedTensor {
    std::string name;
    Mat value;
};

struct Checkpoint {
    static constexpr char kMagic[8] = {'D', 'M', 'O', 'E', 'C', 'K', 'P', 'T'};
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, std::string> meta;
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const;

    std::string serialize() const;
    static Checkpoint deserialize(const std::string& bytes);

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

enum class CheckpointScope { Full, AdaptersOnly };

/// Snapshot of every parameter (or only LoRA/adapter tensors) plus the model
/// configuration in `meta`.
Checkpoint to_checkpoint(const ToyTtsModel& model, CheckpointScope scope = CheckpointScope::Full);

/// Rebuilds a model with exactly the modules recorded in `ckpt`.
ToyTtsModel model_from_checkpoint(const Checkpoint& ckpt);

/// Copies every tensor of `ckpt` into `model`. Model tensors absent from the
/// checkpoint keep their current values. Throws CheckpointError{ShapeMismatch,
/// UnknownTensor}.
void restore(ToyTtsModel& model, const Checkpoint& ckpt);

/// Stage-0 style initialization: builds the model from the checkpoint's
/// configuration, enables the modules `stage` needs (fresh MoE for stage >= 2,
/// fresh adapters for stage 3) and restores all stored tensors.
ToyTtsModel init_from_checkpoint(const std::filesystem::path& path, int stage,
                                 const std::optional<LoraConfig>& lora = std::nullopt);

ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta);

}  // namespace diamoe
