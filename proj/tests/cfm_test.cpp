// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "diamoe/cfm.hpp"
#include "diamoe/checkpoint.hpp"

using namespace diamoe;

namespace {

ModelConfig config_for(const ToyDataset& data, std::size_t k) {
    ModelConfig cfg;
    cfg.vocab = data.inventory.size();
    cfg.experts = k;
    cfg.seed = 3;
    return cfg;
}

// Straight-line interpolant MSE written out componentwise.
double reference_cfm(const Vec& x0, const Vec& x1, double t, const Vec& v) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        const double target = x1[i] - x0[i];
        (void)t;
        acc += (v[i] - target) * (v[i] - target);
    }
    return acc / static_cast<double>(x0.size());
}

bool bit_identical(const Checkpoint& a, const Checkpoint& b) {
    return a.serialize() == b.serialize();
}

}  // namespace

TEST(OtCfm, PerfectPredictor) {
    const Vec x0 = Vec::LinSpaced(3, -1, 1);
    const Vec x1 = Vec::LinSpaced(3, 2, 0);
    EXPECT_EQ(ot_cfm_loss(x0, x1, 0.3, [&](const Vec&, double) { return Vec(x1 - x0); }), 0.0);
}

TEST(OtCfm, ZeroPredictorScalar) {
    for (const double t : {0.0, 0.4, 1.0}) {
        EXPECT_DOUBLE_EQ(ot_cfm_loss(Vec::Zero(1), Vec::Ones(1), t, [](const Vec& x, double) {
                             return Vec(Vec::Zero(x.size()));
                         }),
                         1.0);
    }
}

TEST(OtCfm, MatchesReferenceOnModel) {
    const auto data = make_toy_dataset(3, 4, 1);
    ToyTtsModel model(config_for(data, 3));
    Rng rng(2);
    for (const auto& ex : data.examples) {
        const Vec x0 = gaussian(8, 1, 1.0, rng).col(0);
        const double t = std::uniform_real_distribution<double>(0, 1)(rng);
        const Vec xt = (1 - t) * x0 + t * ex.target;
        const Vec v = model.predict(ex.ids, xt, t);
        EXPECT_NEAR(ot_cfm_loss(x0, ex.target, t, model, ex.ids), reference_cfm(x0, ex.target, t, v), 1e-12);
    }
}

TEST(ToyData, BadK) {
    try {
        make_toy_dataset(1, 10, 0);
        FAIL();
    } catch (const TrainError& e) {
        EXPECT_EQ(e.kind(), TrainErrorKind::BadK);
    }
}

TEST(ToyData, EmptyDatasetOnTrain) {
    const auto data = make_toy_dataset(2, 0, 0);
    EXPECT_TRUE(data.examples.empty());
    ToyTtsModel model(config_for(data, 2));
    StageConfig cfg;
    cfg.steps = 3;
    try {
        train_stage(data.examples, cfg, model);
        FAIL();
    } catch (const TrainError& e) {
        EXPECT_EQ(e.kind(), TrainErrorKind::EmptyDataset);
    }
}

TEST(ToyData, SampleMeansNearDialectMeans) {
    const std::size_t n = 400;
    const auto data = make_toy_dataset(3, n, 4);
    for (std::size_t k = 0; k < 3; ++k) {
        Vec mean = Vec::Zero(8);
        std::size_t count = 0;
        for (const auto& ex : data.examples) {
            if (ex.label == k) {
                mean += ex.target;
                ++count;
            }
        }
        ASSERT_EQ(count, n);
        mean /= static_cast<double>(n);
        const double bound = 3.0 * data.sigma / std::sqrt(static_cast<double>(n));
        EXPECT_LT((mean - data.means[k]).cwiseAbs().maxCoeff(), bound) << k;
    }
}

TEST(ToyData, Deterministic) {
    const auto a = make_toy_dataset(3, 20, 9);
    const auto b = make_toy_dataset(3, 20, 9);
    ASSERT_EQ(a.examples.size(), b.examples.size());
    for (std::size_t i = 0; i < a.examples.size(); ++i) {
        EXPECT_EQ(a.examples[i].ids, b.examples[i].ids);
        EXPECT_TRUE(a.examples[i].target == b.examples[i].target);
    }
}

TEST(ToyData, HoldoutSplit) {
    const auto data = make_toy_dataset(3, 10, 1);
    const auto split = split_holdout(data.examples, 0.2);
    EXPECT_EQ(split.train.size(), 24u);
    EXPECT_EQ(split.holdout.size(), 6u);
    EXPECT_EQ(select_dialects(data.examples, 1, 3).size(), 20u);
}

TEST(Schedule, WarmupThenLinearDecay) {
    EXPECT_DOUBLE_EQ(scheduled_lr(0, 100, 10, 1.0), 0.1);
    EXPECT_DOUBLE_EQ(scheduled_lr(9, 100, 10, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(scheduled_lr(10, 100, 10, 1.0), 1.0 * 90.0 / 90.0);
    EXPECT_DOUBLE_EQ(scheduled_lr(55, 100, 10, 1.0), 45.0 / 90.0);
    EXPECT_GT(scheduled_lr(99, 100, 10, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(scheduled_lr(5, 10, 0, 2.0), 2.0 * 5.0 / 10.0);
}

TEST(AdamW, SingleStepByHand) {
    ModelConfig cfg;
    cfg.vocab = 4;
    cfg.width = 4;
    cfg.features = 2;
    cfg.head_hidden = 4;
    ToyTtsModel model(cfg);
    Param* p = model.find_param("backbone.head.b2");
    p->value = Mat{{0.5}, {-1.0}};
    p->grad = Mat{{0.2}, {-3.0}};
    AdamWConfig oc;
    oc.weight_decay = 0.1;
    AdamW opt(oc);
    opt.step(model, {"backbone.head.b2"}, 0.01);
    // first step: m_hat = g, v_hat = g^2, update = g / (|g| + eps)
    for (int i = 0; i < 2; ++i) {
        const double w = i == 0 ? 0.5 : -1.0;
        const double g = i == 0 ? 0.2 : -3.0;
        const double expect = w - 0.01 * 0.1 * w - 0.01 * g / (std::abs(g) + 1e-8);
        EXPECT_NEAR(p->value(i, 0), expect, 1e-15);
    }
    EXPECT_EQ(opt.steps(), 1);
}

TEST(TrainStage, ZeroStepsIsNoOp) {
    const auto data = make_toy_dataset(3, 5, 1);
    ToyTtsModel model(config_for(data, 3));
    const auto before = to_checkpoint(model);
    StageConfig cfg;
    cfg.steps = 0;
    const auto result = train_stage(data.examples, cfg, model);
    EXPECT_TRUE(result.curve.empty());
    EXPECT_TRUE(bit_identical(before, to_checkpoint(model)));
}

TEST(TrainStage, StageZeroNeverTrains) {
    const auto data = make_toy_dataset(3, 5, 1);
    ToyTtsModel model(config_for(data, 3));
    StageConfig cfg;
    cfg.stage = 0;
    cfg.steps = 5;
    EXPECT_THROW(train_stage(data.examples, cfg, model), TrainError);
    cfg.steps = 0;
    EXPECT_NO_THROW(train_stage(data.examples, cfg, model));
}

TEST(TrainStage, LambdaRecordedPerStage) {
    const auto data = make_toy_dataset(3, 8, 1);
    ToyTtsModel model(config_for(data, 3));
    StageConfig cfg;
    cfg.steps = 5;
    cfg.warmup = 1;
    cfg.batch_size = 4;
    for (const auto& l : train_stage(data.examples, cfg, model).curve) EXPECT_EQ(l.lambda, 0.0);
    model.enable_moe();
    cfg.stage = 2;
    for (const auto& l : train_stage(data.examples, cfg, model).curve) {
        EXPECT_EQ(l.lambda, 0.1);
        EXPECT_GT(l.l_dialect, 0.0);
        EXPECT_EQ(l.total, l.l_task + 0.1 * l.l_dialect);
    }
}

TEST(TrainStage, StageTwoNeedsMoe) {
    const auto data = make_toy_dataset(3, 4, 1);
    ToyTtsModel model(config_for(data, 3));
    StageConfig cfg;
    cfg.stage = 2;
    cfg.steps = 1;
    EXPECT_THROW(train_stage(data.examples, cfg, model), TrainError);
    cfg.stage = 3;
    EXPECT_THROW(train_stage(data.examples, cfg, model), TrainError);
}

TEST(TrainStage, StageThreeFreezesEverythingElse) {
    const auto data = make_toy_dataset(4, 10, 2);
    ToyTtsModel model(config_for(data, 3));
    model.enable_moe();
    model.attach_adapters(LoraConfig{});
    const auto before = to_checkpoint(model);
    StageConfig cfg;
    cfg.stage = 3;
    cfg.steps = 20;
    cfg.warmup = 2;
    const auto fresh = select_dialects(data.examples, 3, 4);
    train_stage(fresh, cfg, model);
    const auto after = to_checkpoint(model);
    std::size_t frozen = 0, changed = 0;
    for (const auto& t : before.tensors) {
        const Mat& a = t.value;
        const Mat& b = after.find(t.name)->value;
        const bool same = std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
        const bool peft = t.name.find(".lora.") != std::string::npos || t.name.rfind("adapter.", 0) == 0;
        if (peft) {
            changed += same ? 0 : 1;
        } else {
            EXPECT_TRUE(same) << t.name;
            ++frozen;
        }
    }
    EXPECT_GT(frozen, 0u);
    EXPECT_GT(changed, 0u);
}

TEST(TrainStage, Deterministic) {
    const auto data = make_toy_dataset(3, 8, 1);
    auto run = [&] {
        ToyTtsModel model(config_for(data, 3));
        StageConfig cfg;
        cfg.steps = 10;
        cfg.seed = 77;
        return std::make_pair(loss_curve_csv(train_stage(data.examples, cfg, model)), to_checkpoint(model).serialize());
    };
    EXPECT_EQ(run(), run());
}

TEST(Euler, ConstantField) {
    Vec c(3);
    c << 1.0, -2.0, 0.5;
    const Vec x0 = Vec::LinSpaced(3, 0, 1);
    const auto r = integrate_euler([&](const Vec&, double) { return c; }, x0, 7);
    EXPECT_LT((r.final_state - (x0 + c)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(r.trajectory.size(), 8u);
    EXPECT_TRUE(r.trajectory.front() == x0);
}

TEST(Euler, ConvergesOnLinearField) {
    // Exact OT field towards a fixed target: v = (x1 - x) / (1 - t), whose
    // flow is the straight line; Euler is exact on it up to rounding, so
    // doubling the steps changes x(1) by < 1e-6.
    Vec x1(2);
    x1 << 3.0, -1.0;
    const Vec x0 = Vec::Zero(2);
    auto field = [&](const Vec& x, double t) { return Vec((x1 - x) / (1.0 - t)); };
    const auto a = integrate_euler(field, x0, 16);
    const auto b = integrate_euler(field, x0, 32);
    EXPECT_LT((a.final_state - b.final_state).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((b.final_state - x1).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Euler, BadSteps) {
    EXPECT_THROW(integrate_euler([](const Vec& x, double) { return x; }, Vec::Zero(1), 0), TrainError);
}

TEST(Sample, SeededAndDeterministic) {
    const auto data = make_toy_dataset(3, 2, 1);
    ToyTtsModel model(config_for(data, 3));
    const auto a = sample(model, data.examples[0].ids, 8, 5);
    const auto b = sample(model, data.examples[0].ids, 8, 5);
    ASSERT_EQ(a.trajectory.size(), 9u);
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) EXPECT_TRUE(a.trajectory[i] == b.trajectory[i]);
    const auto c = sample(model, data.examples[0].ids, 8, 6);
    EXPECT_FALSE(a.final_state == c.final_state);
}
