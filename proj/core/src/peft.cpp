// SPDX-License-Identifier: Apache-2.0
#include "diamoe/peft.hpp"

#include <string>

namespace diamoe {
namespace {

PeftError shape_error(const std::string& what) {
    return PeftError(PeftErrorKind::ShapeMismatch, what);
}

}  // namespace

LoraAdapter LoraAdapter::init(std::size_t d_in, std::size_t d_out, const LoraConfig& cfg, Rng& rng) {
    if (cfg.rank < 1) {
        throw PeftError(PeftErrorKind::BadRank, "LoRA rank must be >= 1");
    }
    const auto r = static_cast<Eigen::Index>(cfg.rank);
    LoraAdapter out;
    out.a = Param(gaussian(r, static_cast<Eigen::Index>(d_in), cfg.init_stddev, rng));
    out.b = Param(Mat::Zero(static_cast<Eigen::Index>(d_out), r));
    out.rank = cfg.rank;
    out.alpha = cfg.alpha;
    return out;
}

Vec lora_forward(const Vec& x, const Mat& w, const LoraAdapter& adapter) {
    if (w.cols() != x.size() || adapter.a.cols() != x.size() || adapter.b.rows() != w.rows() ||
        adapter.b.cols() != adapter.a.rows()) {
        throw shape_error("lora_forward: incompatible shapes");
    }
    Vec y = w * x;
    y += adapter.scaling() * (adapter.b.value * (adapter.a.value * x));
    return y;
}

Mat merge_lora(const Mat& w, const LoraAdapter& adapter) {
    if (adapter.a.cols() != w.cols() || adapter.b.rows() != w.rows() ||
        adapter.b.cols() != adapter.a.rows()) {
        throw shape_error("merge_lora: incompatible shapes");
    }
    return w + adapter.scaling() * (adapter.b.value * adapter.a.value);
}

Mat Projection::forward(const Mat& x, Cache& cache) const {
    if (x.cols() != w.cols()) {
        throw shape_error("projection expects " + std::to_string(w.cols()) + " inputs, got " +
                          std::to_string(x.cols()));
    }
    cache.x = x;
    Mat y = x * w.value.transpose();
    if (lora) {
        cache.low = x * lora->a.value.transpose();
        y += lora->scaling() * (cache.low * lora->b.value.transpose());
    }
    return y;
}

Mat Projection::backward(const Cache& cache, const Mat& d_y) {
    w.grad += d_y.transpose() * cache.x;
    Mat d_x = d_y * w.value;
    if (lora) {
        const double s = lora->scaling();
        lora->b.grad += s * (d_y.transpose() * cache.low);
        const Mat d_low = s * (d_y * lora->b.value);
        lora->a.grad += d_low.transpose() * cache.x;
        d_x += d_low * lora->a.value;
    }
    return d_x;
}

ConditioningAdapter ConditioningAdapter::init(std::size_t width, Rng& rng) {
    const auto d = static_cast<Eigen::Index>(width);
    const Eigen::Index bottleneck = std::max<Eigen::Index>(1, d / 4);
    ConditioningAdapter out;
    out.down = Param(gaussian(bottleneck, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    out.down_b = Param(Mat::Zero(bottleneck, 1));
    out.up = Param(Mat::Zero(d, bottleneck));
    out.up_b = Param(Mat::Zero(d, 1));
    return out;
}

Mat ConditioningAdapter::forward(const Mat& x, Cache& cache) const {
    if (x.cols() != down.cols()) {
        throw shape_error("conditioning adapter width mismatch");
    }
    cache.x = x;
    cache.pre = (x * down.value.transpose()).rowwise() + down_b.value.col(0).transpose();
    cache.act = gelu(cache.pre);
    const Mat delta = (cache.act * up.value.transpose()).rowwise() + up_b.value.col(0).transpose();
    return x + delta;
}

Mat ConditioningAdapter::backward(const Cache& cache, const Mat& d_y) {
    up.grad += d_y.transpose() * cache.act;
    up_b.grad += d_y.colwise().sum().transpose();
    const Mat d_pre = (d_y * up.value).cwiseProduct(gelu_grad(cache.pre));
    down.grad += d_pre.transpose() * cache.x;
    down_b.grad += d_pre.colwise().sum().transpose();
    return d_y + d_pre * down.value;
}

AttentionBlock::AttentionBlock(std::size_t width, Rng& rng) {
    const auto d = static_cast<Eigen::Index>(width);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
    query.w = Param(gaussian(d, d, stddev, rng));
    key.w = Param(gaussian(d, d, stddev, rng));
    value.w = Param(gaussian(d, d, stddev, rng));
    output.w = Param(gaussian(d, d, stddev, rng));
}

Mat AttentionBlock::forward(const Mat& x_q, const Mat& x_kv, Cache& cache) const {
    const double scale = 1.0 / std::sqrt(static_cast<double>(width()));
    cache.queries = query.forward(x_q, cache.q);
    cache.keys = key.forward(x_kv, cache.k);
    cache.values = value.forward(x_kv, cache.v);
    cache.probs = softmax_rows(scale * (cache.queries * cache.keys.transpose()));
    cache.mixed = cache.probs * cache.values;
    return x_q + output.forward(cache.mixed, cache.o);
}

AttentionBlock::Grads AttentionBlock::backward(const Cache& cache, const Mat& d_out) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(width()));
    const Mat d_mixed = output.backward(cache.o, d_out);
    const Mat d_probs = d_mixed * cache.values.transpose();
    const Mat d_values = cache.probs.transpose() * d_mixed;
    const Vec row_dot = d_probs.cwiseProduct(cache.probs).rowwise().sum();
    const Mat d_scores = cache.probs.cwiseProduct(d_probs.colwise() - row_dot);
    const Mat d_queries = scale * (d_scores * cache.keys);
    const Mat d_keys = scale * (d_scores.transpose() * cache.queries);

    Grads g;
    g.d_q = d_out + query.backward(cache.q, d_queries);
    g.d_kv = key.backward(cache.k, d_keys) + value.backward(cache.v, d_values);
    return g;
}

void AttentionBlock::attach_lora(const std::set<ProjectionRole>& targets, const LoraConfig& cfg, Rng& rng) {
    for (const auto role : targets) {
        if (role != ProjectionRole::Query && role != ProjectionRole::Value) {
            throw PeftError(PeftErrorKind::InvalidTarget, "LoRA attaches only to query and value projections");
        }
    }
    if (has_lora()) {
        throw PeftError(PeftErrorKind::AlreadyAttached, "LoRA adapters already attached");
    }
    const std::size_t d = width();
    if (targets.contains(ProjectionRole::Query)) {
        query.lora = LoraAdapter::init(d, d, cfg, rng);
    }
    if (targets.contains(ProjectionRole::Value)) {
        value.lora = LoraAdapter::init(d, d, cfg, rng);
    }
}

std::set<ParamGroup> trainable_groups(int stage) {
    switch (stage) {
        case 1: return {ParamGroup::Embedding, ParamGroup::Backbone};
        case 2: return {ParamGroup::Embedding, ParamGroup::Backbone, ParamGroup::Gate, ParamGroup::Experts};
        case 3: return {ParamGroup::Lora, ParamGroup::Adapter};
        default:
            throw PeftError(PeftErrorKind::UnknownStage, "unknown training stage " + std::to_string(stage),
                            static_cast<std::size_t>(stage));
    }
}

}  // namespace diamoe
