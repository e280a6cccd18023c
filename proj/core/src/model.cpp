// SPDX-License-Identifier: Apache-2.0
#include "diamoe/model.hpp"

#include <string>

namespace diamoe {
namespace {

// Independent streams per component so enabling the MoE or adapters later
// does not disturb the base initialization.
constexpr std::uint64_t kBaseStream = 0x5eed0001;
constexpr std::uint64_t kMoeStream = 0x5eed0002;
constexpr std::uint64_t kAdapterStream = 0x5eed0003;

Rng stream(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt)};
    return Rng(seq);
}

template <typename Self, typename Fn>
void visit_projection(Self& proj, const std::string& prefix, Fn&& fn) {
    fn(prefix + ".w", ParamGroup::Backbone, proj.w);
    if (proj.lora) {
        fn(prefix + ".lora.a", ParamGroup::Lora, proj.lora->a);
        fn(prefix + ".lora.b", ParamGroup::Lora, proj.lora->b);
    }
}

template <typename Self, typename Fn>
void visit_attention(Self& block, const std::string& prefix, Fn&& fn) {
    visit_projection(block.query, prefix + ".q", fn);
    visit_projection(block.key, prefix + ".k", fn);
    visit_projection(block.value, prefix + ".v", fn);
    visit_projection(block.output, prefix + ".o", fn);
}

}  // namespace

ToyTtsModel::ToyTtsModel(const ModelConfig& config) : config_(config) {
    if (config_.vocab <= PhonemeInventory::kBoundary || config_.width == 0 || config_.features == 0 ||
        config_.head_hidden == 0) {
        throw MoeError(MoeErrorKind::WidthMismatch, "invalid model configuration");
    }
    Rng rng = stream(config_.seed, kBaseStream);
    const auto d = static_cast<Eigen::Index>(config_.width);
    const auto f = static_cast<Eigen::Index>(config_.features);
    const auto h = static_cast<Eigen::Index>(config_.head_hidden);

    embedding_ = EmbeddingTable::init(config_.vocab, config_.width, rng);
    text_attn_ = AttentionBlock(config_.width, rng);
    in_w_ = Param(gaussian(d, f + 1, 1.0 / std::sqrt(static_cast<double>(f + 1)), rng));
    in_b_ = Param(Mat::Zero(d, 1));
    cross_attn_ = AttentionBlock(config_.width, rng);
    head_w1_ = Param(gaussian(h, 2 * d, 1.0 / std::sqrt(static_cast<double>(2 * d)), rng));
    head_b1_ = Param(Mat::Zero(h, 1));
    head_w2_ = Param(gaussian(f, h, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    head_b2_ = Param(Mat::Zero(f, 1));
}

void ToyTtsModel::enable_moe() {
    if (moe_) {
        throw PeftError(PeftErrorKind::AlreadyAttached, "MoE already enabled");
    }
    Rng rng = stream(config_.seed, kMoeStream);
    moe_.emplace(config_.width, config_.experts, config_.top_k, rng);
}

void ToyTtsModel::attach_adapters(const LoraConfig& lora, const std::set<ProjectionRole>& targets) {
    if (adapter_ || text_attn_.has_lora() || cross_attn_.has_lora()) {
        throw PeftError(PeftErrorKind::AlreadyAttached, "adapters already attached");
    }
    Rng rng = stream(config_.seed, kAdapterStream);
    text_attn_.attach_lora(targets, lora, rng);
    cross_attn_.attach_lora(targets, lora, rng);
    adapter_ = ConditioningAdapter::init(config_.width, rng);
    lora_config_ = lora;
}

std::size_t ToyTtsModel::lora_adapter_count() const {
    std::size_t n = 0;
    for (const auto* block : {&text_attn_, &cross_attn_}) {
        n += block->query.lora.has_value() ? 1 : 0;
        n += block->value.lora.has_value() ? 1 : 0;
    }
    return n;
}

Vec ToyTtsModel::forward(const IpaSequence& ids, const Vec& x_t, double t, Cache& cache) const {
    if (ids.empty()) {
        throw MoeError(MoeErrorKind::EmptySequence, "conditioning sequence is empty");
    }
    if (static_cast<std::size_t>(x_t.size()) != config_.features) {
        throw MoeError(MoeErrorKind::WidthMismatch, "x_t has wrong feature width");
    }
    cache = Cache{};
    cache.ids = ids;

    const EmbeddingSequence h = embed(ids, embedding_);
    Mat x = moe_ ? moe_->forward(h, cache.moe).h : h.h;
    if (adapter_) {
        x = adapter_->forward(x, cache.adapter);
    }
    cache.tokens = text_attn_.forward(x, x, cache.text_attn);
    const RowVec pooled = cache.tokens.colwise().mean();

    const auto f = static_cast<Eigen::Index>(config_.features);
    const auto d = static_cast<Eigen::Index>(config_.width);
    cache.input.resize(f + 1);
    cache.input.head(f) = x_t.transpose();
    cache.input[f] = t;
    const Mat e = cache.input * in_w_.value.transpose() + in_b_.value.transpose();
    const Mat attended = cross_attn_.forward(e, cache.tokens, cache.cross_attn);

    cache.head_in.resize(2 * d);
    cache.head_in.head(d) = attended.row(0);
    cache.head_in.tail(d) = pooled;
    cache.head_pre = cache.head_in * head_w1_.value.transpose() + head_b1_.value.transpose();
    cache.head_act = gelu(cache.head_pre);
    const RowVec out = cache.head_act * head_w2_.value.transpose() + head_b2_.value.transpose();
    cache.built = true;
    return out.transpose();
}

Vec ToyTtsModel::predict(const IpaSequence& ids, const Vec& x_t, double t) const {
    Cache cache;
    return forward(ids, x_t, t, cache);
}

Vec ToyTtsModel::gate_logits(const IpaSequence& ids) const {
    if (!moe_) {
        throw MoeError(MoeErrorKind::GraphNotBuilt, "model has no MoE gate");
    }
    const Vec s = mean_pool(embed(ids, embedding_));
    return moe_->gate.w.value * s + moe_->gate.b.value.col(0);
}

void ToyTtsModel::backward(const Cache& cache, const Vec& d_field, const Vec& d_logits) {
    if (!cache.built) {
        throw MoeError(MoeErrorKind::GraphNotBuilt, "backward called without a recorded forward pass");
    }
    const auto d = static_cast<Eigen::Index>(config_.width);
    const RowVec d_out = d_field.transpose();

    head_w2_.grad += d_out.transpose() * cache.head_act;
    head_b2_.grad += d_out.transpose();
    const RowVec d_pre = (d_out * head_w2_.value).cwiseProduct(gelu_grad(cache.head_pre));
    head_w1_.grad += d_pre.transpose() * cache.head_in;
    head_b1_.grad += d_pre.transpose();
    const RowVec d_head_in = d_pre * head_w1_.value;

    const AttentionBlock::Grads cross = cross_attn_.backward(cache.cross_attn, d_head_in.head(d));
    in_w_.grad += cross.d_q.transpose() * cache.input;
    in_b_.grad += cross.d_q.transpose();

    Mat d_tokens = cross.d_kv;
    const double inv_t = 1.0 / static_cast<double>(cache.tokens.rows());
    d_tokens.rowwise() += d_head_in.tail(d) * inv_t;

    const AttentionBlock::Grads self = text_attn_.backward(cache.text_attn, d_tokens);
    Mat d_x = self.d_q + self.d_kv;
    if (adapter_) {
        d_x = adapter_->backward(cache.adapter, d_x);
    }
    if (moe_) {
        d_x = moe_->backward(cache.moe, d_x, d_logits);
    }
    embed_backward(cache.ids, d_x, embedding_);
}

void ToyTtsModel::zero_grad() {
    for_each_param([](const std::string&, ParamGroup, Param& p) { p.zero_grad(); });
}

void ToyTtsModel::for_each_param(const ParamVisitor& fn) {
    fn("embedding.table", ParamGroup::Embedding, embedding_.table);
    if (moe_) {
        fn("moe.gate.w", ParamGroup::Gate, moe_->gate.w);
        fn("moe.gate.b", ParamGroup::Gate, moe_->gate.b);
        for (std::size_t e = 0; e < moe_->experts.size(); ++e) {
            const std::string p = "moe.expert" + std::to_string(e);
            auto& ex = moe_->experts[e];
            fn(p + ".w1", ParamGroup::Experts, ex.w1);
            fn(p + ".b1", ParamGroup::Experts, ex.b1);
            fn(p + ".w2", ParamGroup::Experts, ex.w2);
            fn(p + ".b2", ParamGroup::Experts, ex.b2);
        }
    }
    if (adapter_) {
        fn("adapter.down", ParamGroup::Adapter, adapter_->down);
        fn("adapter.down_b", ParamGroup::Adapter, adapter_->down_b);
        fn("adapter.up", ParamGroup::Adapter, adapter_->up);
        fn("adapter.up_b", ParamGroup::Adapter, adapter_->up_b);
    }
    visit_attention(text_attn_, "text_attn", fn);
    fn("backbone.in.w", ParamGroup::Backbone, in_w_);
    fn("backbone.in.b", ParamGroup::Backbone, in_b_);
    visit_attention(cross_attn_, "backbone.attn", fn);
    fn("backbone.head.w1", ParamGroup::Backbone, head_w1_);
    fn("backbone.head.b1", ParamGroup::Backbone, head_b1_);
    fn("backbone.head.w2", ParamGroup::Backbone, head_w2_);
    fn("backbone.head.b2", ParamGroup::Backbone, head_b2_);
}

void ToyTtsModel::for_each_param(const ConstParamVisitor& fn) const {
    // The mutable walk does not modify anything; it only hands out references.
    const_cast<ToyTtsModel*>(this)->for_each_param(
        ParamVisitor([&](const std::string& name, ParamGroup group, Param& p) { fn(name, group, p); }));
}

Param* ToyTtsModel::find_param(const std::string& name) {
    Param* found = nullptr;
    for_each_param([&](const std::string& n, ParamGroup, Param& p) {
        if (n == name) {
            found = &p;
        }
    });
    return found;
}

std::vector<std::string> ToyTtsModel::param_names() const {
    std::vector<std::string> names;
    for_each_param(ConstParamVisitor(
        [&](const std::string& n, ParamGroup, const Param&) { names.push_back(n); }));
    return names;
}

std::vector<std::string> trainable_params(const ToyTtsModel& model, int stage) {
    const auto groups = trainable_groups(stage);
    std::vector<std::string> names;
    model.for_each_param(ToyTtsModel::ConstParamVisitor(
        [&](const std::string& n, ParamGroup g, const Param&) {
            if (groups.contains(g)) {
                names.push_back(n);
            }
        }));
    return names;
}

}  // namespace diamoe
