// SPDX-License-Identifier: Apache-2.0
#include "diamoe/moe_embed.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace diamoe {

std::string_view to_string(ParamGroup group) {
    switch (group) {
        case ParamGroup::Embedding: return "embedding";
        case ParamGroup::Backbone: return "backbone";
        case ParamGroup::Gate: return "gate";
        case ParamGroup::Experts: return "experts";
        case ParamGroup::Lora: return "lora";
        case ParamGroup::Adapter: return "adapter";
    }
    return "unknown";
}

EmbeddingTable EmbeddingTable::init(std::size_t vocab, std::size_t width, Rng& rng, double stddev) {
    Mat m = gaussian(static_cast<Eigen::Index>(vocab), static_cast<Eigen::Index>(width), stddev, rng);
    if (vocab > 0) {
        m.row(PhonemeInventory::kPad).setZero();
    }
    return EmbeddingTable{Param(std::move(m))};
}

EmbeddingSequence embed(const IpaSequence& seq, const EmbeddingTable& table) {
    const auto width = static_cast<Eigen::Index>(table.width());
    EmbeddingSequence out{Mat::Zero(static_cast<Eigen::Index>(seq.size()), width), seq.size()};
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const SymbolId id = seq.ids[t];
        if (id >= table.vocab()) {
            throw MoeError(MoeErrorKind::IdOutOfRange,
                           "symbol id " + std::to_string(id) + " outside embedding table of " +
                               std::to_string(table.vocab()) + " rows",
                           t);
        }
        if (id != PhonemeInventory::kPad) {
            out.h.row(static_cast<Eigen::Index>(t)) = table.table.value.row(id);
        }
    }
    return out;
}

void embed_backward(const IpaSequence& seq, const Mat& d_h, EmbeddingTable& table) {
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const SymbolId id = seq.ids[t];
        if (id == PhonemeInventory::kPad) {
            continue;
        }
        table.table.grad.row(id) += d_h.row(static_cast<Eigen::Index>(t));
    }
}

Vec mean_pool(const EmbeddingSequence& seq) {
    if (seq.valid_length == 0) {
        throw MoeError(MoeErrorKind::EmptySequence, "mean_pool of an empty sequence");
    }
    const auto t = static_cast<Eigen::Index>(seq.valid_length);
    return seq.h.topRows(t).colwise().sum().transpose() / static_cast<double>(t);
}

ExpertNetwork ExpertNetwork::init(std::size_t width, Rng& rng) {
    const auto d = static_cast<Eigen::Index>(width);
    ExpertNetwork e;
    e.w1 = Param(gaussian(2 * d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    e.b1 = Param(Mat::Zero(2 * d, 1));
    e.w2 = Param(Mat::Zero(d, 2 * d));
    e.b2 = Param(Mat::Zero(d, 1));
    return e;
}

Mat ExpertNetwork::forward(const Mat& x) const {
    Cache cache;
    return forward(x, cache);
}

Mat ExpertNetwork::forward(const Mat& x, Cache& cache) const {
    if (x.cols() != w1.cols()) {
        throw MoeError(MoeErrorKind::WidthMismatch,
                       "expert expects width " + std::to_string(w1.cols()) + ", got " +
                           std::to_string(x.cols()));
    }
    cache.x = x;
    cache.pre = (x * w1.value.transpose()).rowwise() + b1.value.col(0).transpose();
    cache.act = gelu(cache.pre);
    return (cache.act * w2.value.transpose()).rowwise() + b2.value.col(0).transpose();
}

Mat ExpertNetwork::backward(const Cache& cache, const Mat& d_y) {
    w2.grad += d_y.transpose() * cache.act;
    b2.grad += d_y.colwise().sum().transpose();
    const Mat d_pre = (d_y * w2.value).cwiseProduct(gelu_grad(cache.pre));
    w1.grad += d_pre.transpose() * cache.x;
    b1.grad += d_pre.colwise().sum().transpose();
    return d_pre * w1.value;
}

GateNetwork GateNetwork::init(std::size_t width, std::size_t experts, Rng& rng) {
    const auto d = static_cast<Eigen::Index>(width);
    const auto k = static_cast<Eigen::Index>(experts);
    return GateNetwork{Param(gaussian(k, d, 1.0 / std::sqrt(static_cast<double>(d)), rng)),
                       Param(Mat::Zero(k, 1))};
}

GateOutput route_logits(const Vec& logits, std::size_t k) {
    const auto experts = static_cast<std::size_t>(logits.size());
    if (k < 1 || k > experts) {
        throw MoeError(MoeErrorKind::BadK, "top-k must satisfy 1 <= k <= K (k=" + std::to_string(k) +
                                               ", K=" + std::to_string(experts) + ")");
    }
    std::vector<std::size_t> order(experts);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return logits[static_cast<Eigen::Index>(a)] > logits[static_cast<Eigen::Index>(b)];
    });
    order.resize(k);

    GateOutput out;
    out.logits = logits;
    out.selected = std::move(order);
    Vec chosen(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
        chosen[static_cast<Eigen::Index>(j)] = logits[static_cast<Eigen::Index>(out.selected[j])];
    }
    out.weights = softmax(chosen);
    return out;
}

GateOutput gate_forward(const Vec& pooled, const GateNetwork& gate, std::size_t k) {
    if (pooled.size() != gate.w.cols()) {
        throw MoeError(MoeErrorKind::WidthMismatch,
                       "gate expects width " + std::to_string(gate.w.cols()) + ", got " +
                           std::to_string(pooled.size()));
    }
    GateOutput out = route_logits(gate.w.value * pooled + gate.b.value.col(0), k);
    out.pooled = pooled;
    return out;
}

EmbeddingSequence moe_forward(const EmbeddingSequence& h, const GateOutput& gate_out,
                              std::span<const ExpertNetwork> experts) {
    const auto t = static_cast<Eigen::Index>(h.valid_length);
    Mat mix = Mat::Zero(t, h.h.cols());
    for (std::size_t j = 0; j < gate_out.selected.size(); ++j) {
        const std::size_t e = gate_out.selected[j];
        if (e >= experts.size()) {
            throw MoeError(MoeErrorKind::WidthMismatch, "gate selected missing expert " + std::to_string(e));
        }
        mix += gate_out.weights[static_cast<Eigen::Index>(j)] * experts[e].forward(h.h.topRows(t));
    }
    EmbeddingSequence out{Mat::Zero(h.h.rows(), h.h.cols()), h.valid_length};
    out.h.topRows(t) = h.h.topRows(t) + mix;
    return out;
}

double dialect_loss(std::span<const Vec> logits, std::span<const std::size_t> labels) {
    if (logits.size() != labels.size()) {
        throw MoeError(MoeErrorKind::WidthMismatch, "logits/labels batch size mismatch");
    }
    if (logits.empty()) {
        throw MoeError(MoeErrorKind::EmptySequence, "dialect_loss over an empty batch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const Vec& g = logits[i];
        if (labels[i] >= static_cast<std::size_t>(g.size())) {
            throw MoeError(MoeErrorKind::LabelOutOfRange,
                           "label " + std::to_string(labels[i]) + " >= K=" + std::to_string(g.size()), i);
        }
        const double m = g.maxCoeff();
        const double lse = m + std::log((g.array() - m).exp().sum());
        sum += lse - g[static_cast<Eigen::Index>(labels[i])];
    }
    return sum / static_cast<double>(logits.size());
}

Vec dialect_loss_grad(const Vec& logits, std::size_t label, std::size_t batch) {
    if (label >= static_cast<std::size_t>(logits.size())) {
        throw MoeError(MoeErrorKind::LabelOutOfRange,
                       "label " + std::to_string(label) + " >= K=" + std::to_string(logits.size()));
    }
    Vec g = softmax(logits);
    g[static_cast<Eigen::Index>(label)] -= 1.0;
    return g / static_cast<double>(batch);
}

double dialect_weight(int stage) noexcept {
    return stage == 2 ? kStage2DialectWeight : 0.0;
}

LossBreakdown total_loss(double l_task, double l_dialect, int stage, std::size_t batch) {
    LossBreakdown out;
    out.l_task = l_task;
    out.l_dialect = l_dialect;
    out.lambda = dialect_weight(stage);
    out.total = l_task + out.lambda * l_dialect;
    out.batch = batch;
    return out;
}

MoeLayer::MoeLayer(std::size_t width, std::size_t num_experts, std::size_t k, Rng& rng)
    : gate(GateNetwork::init(width, num_experts, rng)), top_k(k) {
    experts.reserve(num_experts);
    for (std::size_t e = 0; e < num_experts; ++e) {
        experts.push_back(ExpertNetwork::init(width, rng));
    }
    if (top_k < 1 || top_k > num_experts) {
        throw MoeError(MoeErrorKind::BadK, "top-k must satisfy 1 <= k <= K");
    }
}

EmbeddingSequence MoeLayer::forward(const EmbeddingSequence& h, Cache& cache) const {
    if (h.width() != gate.width()) {
        throw MoeError(MoeErrorKind::WidthMismatch, "MoE width mismatch");
    }
    const auto t = static_cast<Eigen::Index>(h.valid_length);
    cache = Cache{};
    cache.length = h.valid_length;
    cache.gate = gate_forward(mean_pool(h), gate, top_k);

    Mat mix = Mat::Zero(t, h.h.cols());
    cache.expert_caches.resize(cache.gate.selected.size());
    for (std::size_t j = 0; j < cache.gate.selected.size(); ++j) {
        const std::size_t e = cache.gate.selected[j];
        Mat y = experts[e].forward(h.h.topRows(t), cache.expert_caches[j]);
        mix += cache.gate.weights[static_cast<Eigen::Index>(j)] * y;
        cache.expert_outputs.push_back(std::move(y));
    }
    EmbeddingSequence out{Mat::Zero(h.h.rows(), h.h.cols()), h.valid_length};
    out.h.topRows(t) = h.h.topRows(t) + mix;
    cache.built = true;
    return out;
}

Mat MoeLayer::backward(const Cache& cache, const Mat& d_out, const Vec& d_logits) {
    if (!cache.built) {
        throw MoeError(MoeErrorKind::GraphNotBuilt, "MoE backward called without a recorded forward pass");
    }
    const auto t = static_cast<Eigen::Index>(cache.length);
    const Mat d_top = d_out.topRows(t);
    Mat d_h = d_top;

    const std::size_t k = cache.gate.selected.size();
    Vec d_w(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        d_w[jj] = d_top.cwiseProduct(cache.expert_outputs[j]).sum();
        const Mat d_y = cache.gate.weights[jj] * d_top;
        d_h += experts[cache.gate.selected[j]].backward(cache.expert_caches[j], d_y);
    }

    Vec d_g = Vec::Zero(cache.gate.logits.size());
    if (d_logits.size() == d_g.size()) {
        d_g = d_logits;
    }
    const double dot = cache.gate.weights.dot(d_w);
    for (std::size_t j = 0; j < k; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        d_g[static_cast<Eigen::Index>(cache.gate.selected[j])] += cache.gate.weights[jj] * (d_w[jj] - dot);
    }

    gate.w.grad += d_g * cache.gate.pooled.transpose();
    gate.b.grad += d_g;
    const Vec d_s = gate.w.value.transpose() * d_g;
    d_h.rowwise() += d_s.transpose() / static_cast<double>(t);
    return d_h;
}

}  // namespace diamoe
