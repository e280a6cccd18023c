// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "diamoe/model.hpp"
#include "diamoe/peft.hpp"

using namespace diamoe;

namespace {

LoraAdapter hand_adapter() {
    LoraAdapter ad;
    ad.rank = 1;
    ad.alpha = 1.0;
    ad.a = Param(Mat{{1.0, 0.0}});
    ad.b = Param(Mat{{0.0}, {1.0}});
    return ad;
}

ModelConfig small_config(std::uint64_t seed = 3) {
    ModelConfig cfg;
    cfg.vocab = 10;
    cfg.width = 8;
    cfg.features = 3;
    cfg.experts = 3;
    cfg.top_k = 2;
    cfg.head_hidden = 8;
    cfg.seed = seed;
    return cfg;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

TEST(Lora, Defaults) {
    const LoraConfig cfg;
    EXPECT_EQ(cfg.rank, 16u);
    EXPECT_EQ(cfg.alpha, 1.0);
    Rng rng(1);
    const auto ad = LoraAdapter::init(8, 8, cfg, rng);
    EXPECT_EQ(ad.scaling(), 1.0 / 16.0);
    EXPECT_EQ(ad.a.rows(), 16);
    EXPECT_EQ(ad.a.cols(), 8);
    EXPECT_EQ(ad.b.rows(), 8);
    EXPECT_EQ(ad.b.cols(), 16);
    EXPECT_TRUE(ad.b.value.isZero(0.0));
    EXPECT_FALSE(ad.a.value.isZero(0.0));
}

TEST(Lora, InitStddevIsSmall) {
    LoraConfig cfg;
    cfg.rank = 64;
    Rng rng(2);
    const auto ad = LoraAdapter::init(64, 4, cfg, rng);
    const double mean = ad.a.value.mean();
    const double var = (ad.a.value.array() - mean).square().mean();
    EXPECT_NEAR(std::sqrt(var), 0.02, 0.002);
}

TEST(Lora, BadRank) {
    LoraConfig cfg;
    cfg.rank = 0;
    Rng rng(2);
    EXPECT_THROW(LoraAdapter::init(4, 4, cfg, rng), PeftError);
}

TEST(Lora, FreshAdapterIsExact) {
    Rng rng(3);
    const auto ad = LoraAdapter::init(5, 4, LoraConfig{}, rng);
    const Mat w = gaussian(4, 5, 1.0, rng);
    const Vec x = gaussian(5, 1, 1.0, rng).col(0);
    const Vec base = w * x;
    EXPECT_TRUE(lora_forward(x, w, ad) == base);
    EXPECT_TRUE(merge_lora(w, ad) == w);
}

TEST(Lora, HandExample) {
    const auto ad = hand_adapter();
    const Mat w = Mat::Identity(2, 2);
    const Vec x = Vec::Unit(2, 0);
    EXPECT_EQ(lora_forward(x, w, ad), Vec::Ones(2));
    const Mat merged = merge_lora(w, ad);
    EXPECT_EQ(merged, (Mat{{1.0, 0.0}, {1.0, 1.0}}));
}

TEST(Lora, ZeroInput) {
    const auto ad = hand_adapter();
    EXPECT_TRUE(lora_forward(Vec::Zero(2), Mat::Identity(2, 2), ad).isZero(0.0));
}

TEST(Lora, ShapeMismatch) {
    const auto ad = hand_adapter();
    try {
        lora_forward(Vec::Zero(3), Mat::Identity(2, 3), ad);
        FAIL();
    } catch (const PeftError& e) {
        EXPECT_EQ(e.kind(), PeftErrorKind::ShapeMismatch);
    }
    EXPECT_THROW(merge_lora(Mat::Identity(3, 3), ad), PeftError);
}

TEST(Lora, MergeEquivalence) {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        auto ad = LoraAdapter::init(6, 5, LoraConfig{}, rng);
        ad.b.value = gaussian(5, 16, 1.0, rng);
        const Mat w = gaussian(5, 6, 1.0, rng);
        const Vec x = gaussian(6, 1, 1.0, rng).col(0);
        const Vec adapted = lora_forward(x, w, ad);
        const Vec merged = merge_lora(w, ad) * x;
        EXPECT_LT((adapted - merged).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(ConditioningAdapter, ZeroInitIsIdentity) {
    Rng rng(5);
    const auto ad = ConditioningAdapter::init(8, rng);
    EXPECT_EQ(ad.down.rows(), 2);
    EXPECT_TRUE(ad.up.value.isZero(0.0));
    EXPECT_TRUE(ad.up_b.value.isZero(0.0));
    const Mat x = gaussian(4, 8, 1.0, rng);
    ConditioningAdapter::Cache cache;
    EXPECT_TRUE(ad.forward(x, cache) == x);
}

TEST(ConditioningAdapter, NarrowWidthKeepsOneUnit) {
    Rng rng(5);
    EXPECT_EQ(ConditioningAdapter::init(2, rng).down.rows(), 1);
}

TEST(Attention, LoraOnlyOnQueryAndValue) {
    Rng rng(6);
    AttentionBlock block(4, rng);
    try {
        block.attach_lora({ProjectionRole::Key}, LoraConfig{}, rng);
        FAIL();
    } catch (const PeftError& e) {
        EXPECT_EQ(e.kind(), PeftErrorKind::InvalidTarget);
    }
    EXPECT_THROW(block.attach_lora({ProjectionRole::Query, ProjectionRole::Output}, LoraConfig{}, rng),
                 PeftError);
    block.attach_lora({ProjectionRole::Query, ProjectionRole::Value}, LoraConfig{}, rng);
    EXPECT_TRUE(block.query.lora.has_value());
    EXPECT_TRUE(block.value.lora.has_value());
    EXPECT_FALSE(block.key.lora.has_value());
    EXPECT_FALSE(block.output.lora.has_value());
    try {
        block.attach_lora({ProjectionRole::Query}, LoraConfig{}, rng);
        FAIL();
    } catch (const PeftError& e) {
        EXPECT_EQ(e.kind(), PeftErrorKind::AlreadyAttached);
    }
}

TEST(Attention, FreshLoraKeepsOutput) {
    Rng rng(7);
    AttentionBlock block(4, rng);
    const Mat xq = gaussian(2, 4, 1.0, rng);
    const Mat xkv = gaussian(3, 4, 1.0, rng);
    AttentionBlock::Cache c1, c2;
    const Mat before = block.forward(xq, xkv, c1);
    block.attach_lora({ProjectionRole::Query, ProjectionRole::Value}, LoraConfig{}, rng);
    EXPECT_TRUE(block.forward(xq, xkv, c2) == before);
}

TEST(Model, AttachCreatesFourAdapters) {
    ToyTtsModel model(small_config());
    EXPECT_EQ(model.attention_block_count(), 2u);
    EXPECT_EQ(model.lora_adapter_count(), 0u);
    model.attach_adapters(LoraConfig{});
    EXPECT_EQ(model.lora_adapter_count(), 4u);
    try {
        model.attach_adapters(LoraConfig{});
        FAIL();
    } catch (const PeftError& e) {
        EXPECT_EQ(e.kind(), PeftErrorKind::AlreadyAttached);
    }
}

TEST(Model, FreshAdaptersLeaveOutputsBitIdentical) {
    ToyTtsModel model(small_config());
    model.enable_moe();
    Rng rng(8);
    const IpaSequence ids{{3, 4, 5, 9}};
    const Vec x = gaussian(3, 1, 1.0, rng).col(0);
    const Vec before = model.predict(ids, x, 0.3);
    model.attach_adapters(LoraConfig{});
    EXPECT_TRUE(model.predict(ids, x, 0.3) == before);
}

TEST(Freeze, StageGroups) {
    EXPECT_EQ(trainable_groups(1), (std::set<ParamGroup>{ParamGroup::Embedding, ParamGroup::Backbone}));
    EXPECT_EQ(trainable_groups(2), (std::set<ParamGroup>{ParamGroup::Embedding, ParamGroup::Backbone,
                                                         ParamGroup::Gate, ParamGroup::Experts}));
    EXPECT_EQ(trainable_groups(3), (std::set<ParamGroup>{ParamGroup::Lora, ParamGroup::Adapter}));
    for (int bad : {0, 4, -1}) {
        try {
            trainable_groups(bad);
            FAIL();
        } catch (const PeftError& e) {
            EXPECT_EQ(e.kind(), PeftErrorKind::UnknownStage);
        }
    }
}

TEST(Freeze, StageParameterSets) {
    ToyTtsModel model(small_config());
    const auto s1 = trainable_params(model, 1);
    for (const auto& n : s1) {
        EXPECT_EQ(n.find("lora"), std::string::npos);
        EXPECT_EQ(n.rfind("adapter.", 0), std::string::npos);
    }
    model.enable_moe();
    model.attach_adapters(LoraConfig{});
    const auto s2 = trainable_params(model, 2);
    for (const auto& n : trainable_params(model, 1)) EXPECT_TRUE(contains(s2, n)) << n;
    EXPECT_TRUE(contains(s2, "moe.gate.w"));
    EXPECT_TRUE(contains(s2, "moe.expert0.w2"));
    const auto s3 = trainable_params(model, 3);
    EXPECT_FALSE(s3.empty());
    for (const auto& n : s3) {
        const bool peft = n.find(".lora.") != std::string::npos || n.rfind("adapter.", 0) == 0;
        EXPECT_TRUE(peft) << n;
    }
    for (const auto& n : s2) EXPECT_FALSE(contains(s3, n)) << n;
}
