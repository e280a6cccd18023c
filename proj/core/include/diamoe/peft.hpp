// SPDX-License-Identifier: Apache-2.0
//
// Parameter-efficient adaptation: low-rank adapters on attention query and
// value projections, a zero-initialized residual conditioning adapter on the
// text embedding path, and the stage-dependent freeze rules.

#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <vector>

#include "diamoe/error.hpp"
#include "diamoe/tensor.hpp"

namespace diamoe {

enum class PeftErrorKind { AlreadyAttached, ShapeMismatch, UnknownStage, InvalidTarget, BadRank };
using PeftError = KindedError<PeftErrorKind>;

struct LoraConfig {
    std::size_t rank = 16;
    double alpha = 1.0;
    double init_stddev = 0.02;
};

/// Low-rank delta scaling * B A with B zero at init so the adapted
/// projection starts out equal to the base one.
struct LoraAdapter {
    Param a;  // r x d_in, Gaussian
    Param b;  // d_out x r, zero
    std::size_t rank = 0;
    double alpha = 1.0;

    static LoraAdapter init(std::size_t d_in, std::size_t d_out, const LoraConfig& cfg, Rng& rng);
    double scaling() const { return alpha / static_cast<double>(rank); }
};

/// y = W x + scaling * B (A x)
Vec lora_forward(const Vec& x, const Mat& w, const LoraAdapter& adapter);

/// W + scaling * B A
Mat merge_lora(const Mat& w, const LoraAdapter& adapter);

/// Dense projection (no bias) on row-stacked inputs, optionally carrying a
/// LoRA adapter.
struct Projection {
    Param w;  // d_out x d_in
    std::optional<LoraAdapter> lora;

    struct Cache {
        Mat x;
        Mat low;  // x A^T, present when lora is attached
    };

    Mat forward(const Mat& x, Cache& cache) const;
    Mat backward(const Cache& cache, const Mat& d_y);
};

/// x + U2 gelu(U1 x + c1) + c2 with a D/4 bottleneck; U2 and c2 start at zero.
struct ConditioningAdapter {
    Param down;    // (D/4) x D
    Param down_b;  // (D/4) x 1
    Param up;      // D x (D/4), zero
    Param up_b;    // D x 1, zero

    static ConditioningAdapter init(std::size_t width, Rng& rng);

    struct Cache {
        Mat x;
        Mat pre;
        Mat act;
    };
    Mat forward(const Mat& x, Cache& cache) const;
    Mat backward(const Cache& cache, const Mat& d_y);
};

enum class ProjectionRole { Query, Key, Value, Output };

/// Single-head scaled dot-product attention with a residual connection:
///   out = x_q + softmax(Q K^T / sqrt(D)) V W_o^T
/// Used both as self-attention (x_q == x_kv) and as cross-attention.
class AttentionBlock {
public:
    AttentionBlock() = default;
    AttentionBlock(std::size_t width, Rng& rng);

    Projection query;
    Projection key;
    Projection value;
    Projection output;

    struct Cache {
        Projection::Cache q, k, v, o;
        Mat queries, keys, values;
        Mat probs;
        Mat mixed;
    };

    Mat forward(const Mat& x_q, const Mat& x_kv, Cache& cache) const;

    struct Grads {
        Mat d_q;
        Mat d_kv;
    };
    Grads backward(const Cache& cache, const Mat& d_out);

    /// Only query and value projections accept adapters; anything else throws
    /// PeftError{InvalidTarget}. Throws AlreadyAttached on a second call.
    void attach_lora(const std::set<ProjectionRole>& targets, const LoraConfig& cfg, Rng& rng);
    bool has_lora() const { return query.lora.has_value() || value.lora.has_value(); }
    std::size_t width() const { return static_cast<std::size_t>(query.w.cols()); }
};

/// Parameter groups updated in a training stage:
///   1: embedding + backbone
///   2: embedding + backbone + gate + experts
///   3: LoRA + conditioning adapter
/// Throws PeftError{UnknownStage} outside 1..3.
std::set<ParamGroup> trainable_groups(int stage);

}  // namespace diamoe
