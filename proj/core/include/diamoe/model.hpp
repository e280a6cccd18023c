// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale conditional flow-matching model. The text path is
//
//   ids -> embedding -> [dialect MoE] -> [conditioning adapter] -> self-attention
//
// and the backbone predicts a vector field for an F-dim feature frame from
// (x_t, t) by cross-attending over the text states and reading the pooled
// text condition through a GELU head. LoRA adapters sit on the query and
// value projections of both attention blocks once attached.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "diamoe/moe_embed.hpp"
#include "diamoe/peft.hpp"
#include "diamoe/phoneme.hpp"
#include "diamoe/tensor.hpp"

namespace diamoe {

struct ModelConfig {
    std::size_t vocab = 0;
    std::size_t width = 16;      // D
    std::size_t features = 8;    // F
    std::size_t experts = 3;     // K
    std::size_t top_k = 2;
    std::size_t head_hidden = 32;
    std::uint64_t seed = 0;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class ToyTtsModel {
public:
    explicit ToyTtsModel(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return config_; }

    /// Adds the gate and K experts (output layers zero). Throws
    /// PeftError{AlreadyAttached} if present.
    void enable_moe();
    bool has_moe() const noexcept { return moe_.has_value(); }

    /// Adds LoRA to the query/value projections of every attention block and
    /// the conditioning adapter. Throws PeftError{AlreadyAttached} or
    /// PeftError{InvalidTarget}.
    void attach_adapters(const LoraConfig& lora,
                         const std::set<ProjectionRole>& targets = {ProjectionRole::Query,
                                                                    ProjectionRole::Value});
    bool has_adapters() const noexcept { return adapter_.has_value(); }
    std::optional<LoraConfig> lora_config() const { return lora_config_; }

    std::size_t attention_block_count() const noexcept { return 2; }
    std::size_t lora_adapter_count() const;

    struct Cache {
        bool built = false;
        IpaSequence ids;
        MoeLayer::Cache moe;
        ConditioningAdapter::Cache adapter;
        AttentionBlock::Cache text_attn;
        AttentionBlock::Cache cross_attn;
        Mat tokens;      // text states after self-attention, T x D
        RowVec input;    // [x_t, t]
        RowVec head_in;  // [e', pooled condition]
        RowVec head_pre;
        RowVec head_act;
    };

    /// Predicted vector field v(x_t, t | ids).
    Vec forward(const IpaSequence& ids, const Vec& x_t, double t, Cache& cache) const;
    Vec predict(const IpaSequence& ids, const Vec& x_t, double t) const;

    /// Gate logits for an utterance; requires the MoE.
    Vec gate_logits(const IpaSequence& ids) const;

    /// Accumulates gradients given dL/dv and an extra gradient on the gate
    /// logits (pass an empty vector when the dialect loss is unused).
    void backward(const Cache& cache, const Vec& d_field, const Vec& d_logits);

    void zero_grad();

    using ParamVisitor = std::function<void(const std::string& name, ParamGroup group, Param& param)>;
    using ConstParamVisitor =
        std::function<void(const std::string& name, ParamGroup group, const Param& param)>;

    /// Visits every parameter in a fixed order.
    void for_each_param(const ParamVisitor& fn);
    void for_each_param(const ConstParamVisitor& fn) const;

    Param* find_param(const std::string& name);
    std::vector<std::string> param_names() const;

    const EmbeddingTable& embedding() const noexcept { return embedding_; }
    const std::optional<MoeLayer>& moe() const noexcept { return moe_; }
    std::optional<MoeLayer>& moe() noexcept { return moe_; }
    const AttentionBlock& text_attention() const noexcept { return text_attn_; }
    const AttentionBlock& cross_attention() const noexcept { return cross_attn_; }
    const std::optional<ConditioningAdapter>& conditioning_adapter() const noexcept { return adapter_; }

private:
    ModelConfig config_;
    std::optional<LoraConfig> lora_config_;

    EmbeddingTable embedding_;
    std::optional<MoeLayer> moe_;
    std::optional<ConditioningAdapter> adapter_;
    AttentionBlock text_attn_;

    Param in_w_;   // D x (F + 1)
    Param in_b_;   // D x 1
    AttentionBlock cross_attn_;
    Param head_w1_;  // H x 2D
    Param head_b1_;  // H x 1
    Param head_w2_;  // F x H
    Param head_b2_;  // F x 1
};

/// Names of the parameters updated in `stage` (1..3); everything else is
/// frozen. Throws PeftError{UnknownStage}.
std::vector<std::string> trainable_params(const ToyTtsModel& model, int stage);

}  // namespace diamoe
