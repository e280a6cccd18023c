// SPDX-License-Identifier: Apache-2.0
//
// Text embedding table followed by a residual dialect-style mixture of
// experts. One routing decision is made per utterance from the mean-pooled
// embedding; the selected experts' outputs are mixed with softmax weights
// renormalized over the top-k logits and added back onto the embedding.
//
//   h  = E[ids]
//   s  = mean_t h_t,  g = W_g s + b_g
//   h' = h + sum_{e in topk(g)} w_e * Expert_e(h)
//
// The auxiliary dialect loss is the batch-mean cross-entropy of the full
// K-way logits g, and the total objective is l_task + lambda * l_dialect
// with lambda = 0.1 in stage 2 and 0 otherwise.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "diamoe/error.hpp"
#include "diamoe/phoneme.hpp"
#include "diamoe/tensor.hpp"

namespace diamoe {

enum class MoeErrorKind {
    IdOutOfRange,
    EmptySequence,
    BadK,
    WidthMismatch,
    LabelOutOfRange,
    GraphNotBuilt,
};
using MoeError = KindedError<MoeErrorKind>;

/// V x D lookup table. Row PAD (0) is held at zero and never updated.
struct EmbeddingTable {
    Param table;

    static EmbeddingTable init(std::size_t vocab, std::size_t width, Rng& rng, double stddev = 0.5);
    std::size_t vocab() const { return static_cast<std::size_t>(table.rows()); }
    std::size_t width() const { return static_cast<std::size_t>(table.cols()); }
};

/// T x D hidden states; rows at or beyond `valid_length` are padding and zero.
struct EmbeddingSequence {
    Mat h;
    std::size_t valid_length = 0;

    std::size_t width() const { return static_cast<std::size_t>(h.cols()); }
};

EmbeddingSequence embed(const IpaSequence& seq, const EmbeddingTable& table);

/// Accumulates d_h into the looked-up rows, skipping PAD.
void embed_backward(const IpaSequence& seq, const Mat& d_h, EmbeddingTable& table);

/// Mean over the valid rows. Throws MoeError{EmptySequence} when T = 0.
Vec mean_pool(const EmbeddingSequence& seq);

/// Two-layer GELU feed-forward D -> 2D -> D.
struct ExpertNetwork {
    Param w1;  // 2D x D
    Param b1;  // 2D x 1
    Param w2;  // D x 2D, zero at init
    Param b2;  // D x 1, zero at init

    static ExpertNetwork init(std::size_t width, Rng& rng);
    std::size_t width() const { return static_cast<std::size_t>(w1.cols()); }

    struct Cache {
        Mat x;
        Mat pre;
        Mat act;
    };
    Mat forward(const Mat& x) const;
    Mat forward(const Mat& x, Cache& cache) const;
    /// Accumulates parameter gradients and returns dL/dx.
    Mat backward(const Cache& cache, const Mat& d_y);
};

/// Linear D -> K gate with identity activation.
struct GateNetwork {
    Param w;  // K x D
    Param b;  // K x 1

    static GateNetwork init(std::size_t width, std::size_t experts, Rng& rng);
    std::size_t experts() const { return static_cast<std::size_t>(w.rows()); }
    std::size_t width() const { return static_cast<std::size_t>(w.cols()); }
};

struct GateOutput {
    Vec pooled;                     // s
    Vec logits;                     // g, all K entries
    std::vector<std::size_t> selected;  // top-k expert ids, by descending logit
    Vec weights;                    // softmax over logits[selected]
};

/// Top-k selection (ties go to the lower expert id) and renormalized
/// softmax over the selected logits. Throws MoeError{BadK}.
GateOutput route_logits(const Vec& logits, std::size_t k);

/// g = W_g s + b_g followed by route_logits.
GateOutput gate_forward(const Vec& pooled, const GateNetwork& gate, std::size_t k);

/// h'_t = h_t + sum_e w_e Expert_e(h_t) over valid rows; padding rows stay zero.
EmbeddingSequence moe_forward(const EmbeddingSequence& h, const GateOutput& gate_out,
                              std::span<const ExpertNetwork> experts);

/// -1/N sum_i log softmax(g_i)[y_i]. Throws MoeError{LabelOutOfRange}.
double dialect_loss(std::span<const Vec> logits, std::span<const std::size_t> labels);

/// d(dialect_loss)/d g_i for one sample of a batch of size `batch`.
Vec dialect_loss_grad(const Vec& logits, std::size_t label, std::size_t batch);

constexpr double kStage2DialectWeight = 0.1;

/// 0.1 during stage 2 and 0 in every other stage.
double dialect_weight(int stage) noexcept;

struct LossBreakdown {
    double l_task = 0.0;
    double l_dialect = 0.0;
    double lambda = 0.0;
    double total = 0.0;
    std::size_t batch = 0;
};

LossBreakdown total_loss(double l_task, double l_dialect, int stage, std::size_t batch = 1);

/// Gate plus K experts with cached forward state for backprop.
class MoeLayer {
public:
    MoeLayer() = default;
    MoeLayer(std::size_t width, std::size_t experts, std::size_t top_k, Rng& rng);

    GateNetwork gate;
    std::vector<ExpertNetwork> experts;
    std::size_t top_k = 2;

    struct Cache {
        bool built = false;
        std::size_t length = 0;
        GateOutput gate;
        std::vector<ExpertNetwork::Cache> expert_caches;  // parallel to gate.selected
        std::vector<Mat> expert_outputs;
    };

    EmbeddingSequence forward(const EmbeddingSequence& h, Cache& cache) const;

    /// d_out: dL/dh' over the valid rows. d_logits: extra gradient on the gate
    /// logits (from the dialect loss). Returns dL/dh. Throws MoeError{GraphNotBuilt}
    /// when `cache` did not come from forward().
    Mat backward(const Cache& cache, const Mat& d_out, const Vec& d_logits);
};

}  // namespace diamoe
