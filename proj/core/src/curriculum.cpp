// SPDX-License-Identifier: Apache-2.0
#include "diamoe/curriculum.hpp"

#include <cstring>
#include <fstream>
#include <utility>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

namespace diamoe {
namespace {

namespace pt = boost::property_tree;

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
}

template <typename T>
void read_key(const pt::ptree& section, const std::string& key, T& target) {
    const auto child = section.get_child_optional(key);
    if (!child) {
        return;
    }
    const auto v = child->get_value_optional<T>();
    if (!v) {
        throw TrainError(TrainErrorKind::BadConfig, "bad value '" + child->data() + "' for '" + key + "'");
    }
    target = *v;
}

void check_keys(const pt::ptree& section, const std::string& name, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : section) {
        if (!allowed.contains(key)) {
            throw TrainError(TrainErrorKind::BadConfig, "unknown key '" + key + "' in [" + name + "]");
        }
    }
}

double mean_task(const std::vector<LossBreakdown>& curve, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        s += curve[i].l_task;
    }
    return s / static_cast<double>(end - begin);
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    cfg.model.width = 16;
    cfg.model.features = 8;
    cfg.model.experts = cfg.dialects;
    cfg.model.top_k = 2;
    cfg.model.head_hidden = 32;
    cfg.lora = LoraConfig{16, 1.0, 0.02};

    StageConfig s1;
    s1.stage = 1;
    s1.steps = 500;
    s1.lr = 1e-2;
    s1.warmup = 50;
    s1.batch_size = 16;

    StageConfig s2 = s1;
    s2.stage = 2;
    s2.lr = 5e-3;

    StageConfig s3 = s1;
    s3.stage = 3;
    s3.steps = 300;
    s3.lr = 1e-2;
    s3.warmup = 30;
    s3.optimizer.weight_decay = 0.0;

    cfg.stages = {{1, s1}, {2, s2}, {3, s3}};
    cfg.set_seed(cfg.seed);
    return cfg;
}

void RunConfig::set_seed(std::uint64_t s) {
    seed = s;
    model.seed = s;
    for (auto& [_, stage] : stages) {
        stage.seed = s;
    }
}

RunConfig RunConfig::parse(std::string_view ini_text) {
    pt::ptree tree;
    std::istringstream in{std::string(ini_text)};
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw TrainError(TrainErrorKind::BadConfig, std::string("config parse error: ") + e.what(), e.line());
    }

    RunConfig cfg = defaults();
    std::uint64_t seed = cfg.seed;
    for (const auto& [section, body] : tree) {
        if (section == "run") {
            check_keys(body, section, {"seed", "dialects", "per_dialect", "holdout", "init_checkpoint"});
            read_key(body, "seed", seed);
            read_key(body, "dialects", cfg.dialects);
            read_key(body, "per_dialect", cfg.per_dialect);
            read_key(body, "holdout", cfg.holdout);
            if (const auto p = body.get_optional<std::string>("init_checkpoint"); p && !p->empty()) {
                cfg.init_checkpoint = *p;
            }
        } else if (section == "model") {
            check_keys(body, section, {"width", "features", "top_k", "head_hidden"});
            read_key(body, "width", cfg.model.width);
            read_key(body, "features", cfg.model.features);
            read_key(body, "top_k", cfg.model.top_k);
            read_key(body, "head_hidden", cfg.model.head_hidden);
        } else if (section == "lora") {
            check_keys(body, section, {"rank", "alpha", "init_stddev"});
            read_key(body, "rank", cfg.lora.rank);
            read_key(body, "alpha", cfg.lora.alpha);
            read_key(body, "init_stddev", cfg.lora.init_stddev);
        } else if (section == "data") {
            check_keys(body, section, {"shared_symbols", "dialect_symbols", "min_length", "max_length",
                                       "own_symbol_prob", "mean_scale", "sigma"});
            read_key(body, "shared_symbols", cfg.data.shared_symbols);
            read_key(body, "dialect_symbols", cfg.data.dialect_symbols);
            read_key(body, "min_length", cfg.data.min_length);
            read_key(body, "max_length", cfg.data.max_length);
            read_key(body, "own_symbol_prob", cfg.data.own_symbol_prob);
            read_key(body, "mean_scale", cfg.data.mean_scale);
            read_key(body, "sigma", cfg.data.sigma);
        } else if (section == "stage1" || section == "stage2" || section == "stage3") {
            const int id = section.back() - '0';
            StageConfig& st = cfg.stages.at(id);
            check_keys(body, section, {"steps", "lr", "warmup", "batch", "weight_decay", "beta1", "beta2"});
            read_key(body, "steps", st.steps);
            read_key(body, "lr", st.lr);
            read_key(body, "warmup", st.warmup);
            read_key(body, "batch", st.batch_size);
            read_key(body, "weight_decay", st.optimizer.weight_decay);
            read_key(body, "beta1", st.optimizer.beta1);
            read_key(body, "beta2", st.optimizer.beta2);
        } else {
            throw TrainError(TrainErrorKind::BadConfig, "unknown config section [" + section + "]");
        }
    }
    cfg.model.experts = cfg.dialects;
    cfg.set_seed(seed);
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open config: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

double smoothed_drop(const StageResult& result, std::size_t head, std::size_t tail) {
    const auto& c = result.curve;
    if (c.size() < head || c.size() < tail || head == 0 || tail == 0) {
        return 0.0;
    }
    const double first = mean_task(c, 0, head);
    const double last = mean_task(c, c.size() - tail, c.size());
    return 1.0 - last / first;
}

CurriculumResult run_curriculum(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir) {
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
    }
    const std::size_t k = config.dialects;
    const ToyDataset ds = make_toy_dataset(k + 1, config.per_dialect, config.seed, config.data);
    const DatasetSplit base = split_holdout(select_dialects(ds.examples, 0, k), config.holdout);
    const DatasetSplit fresh = split_holdout(select_dialects(ds.examples, k, k + 1), config.holdout);

    ModelConfig mcfg = config.model;
    mcfg.vocab = ds.inventory.size();
    mcfg.experts = k;

    CurriculumResult result;
    auto save = [&](int stage, const ToyTtsModel& model) {
        result.checkpoints[stage] = to_checkpoint(model);
        if (out_dir) {
            result.checkpoints[stage].save(*out_dir / ("stage" + std::to_string(stage) + ".ckpt"));
        }
    };
    auto record = [&](StageResult r) {
        if (out_dir) {
            write_text(*out_dir / ("stage" + std::to_string(r.stage) + "_loss.csv"), loss_curve_csv(r));
        }
        result.stages.push_back(std::move(r));
    };

    // Stage 0
    ToyTtsModel model = config.init_checkpoint ? init_from_checkpoint(*config.init_checkpoint, 1)
                                               : ToyTtsModel(mcfg);
    if (model.config().vocab != mcfg.vocab) {
        throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                              "initial checkpoint vocabulary does not match the toy inventory");
    }
    save(0, model);

    // Stage 1
    record(train_stage(base.train, config.stages.at(1), model));
    save(1, model);

    // Stage 2
    model.enable_moe();
    record(train_stage(base.train, config.stages.at(2), model));
    result.holdout_gate_accuracy = gate_accuracy(model, base.holdout);
    save(2, model);

    // Stage 3
    model.attach_adapters(config.lora);
    const Checkpoint before = to_checkpoint(model);
    record(train_stage(fresh.train, config.stages.at(3), model));
    const Checkpoint after = to_checkpoint(model);
    result.frozen_unchanged = true;
    std::as_const(model).for_each_param(ToyTtsModel::ConstParamVisitor(
        [&](const std::string& name, ParamGroup group, const Param&) {
            if (group == ParamGroup::Lora || group == ParamGroup::Adapter) {
                return;
            }
            const Mat& a = before.find(name)->value;
            const Mat& b = after.find(name)->value;
            if (a.size() != b.size() ||
                std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) != 0) {
                result.frozen_unchanged = false;
            }
        }));
    save(3, model);
    result.adapter_checkpoint = to_checkpoint(model, CheckpointScope::AdaptersOnly);
    if (out_dir) {
        result.adapter_checkpoint.save(*out_dir / "stage3_adapters.ckpt");
    }

    result.stage1_drop = smoothed_drop(result.stages[0]);
    result.stage3_drop = smoothed_drop(result.stages[2]);

    if (out_dir) {
        nlohmann::ordered_json summary;
        summary["seed"] = config.seed;
        summary["dialects"] = k;
        summary["stage1_loss_drop"] = result.stage1_drop;
        summary["stage2_holdout_gate_accuracy"] = result.holdout_gate_accuracy;
        summary["stage3_loss_drop"] = result.stage3_drop;
        summary["stage3_frozen_unchanged"] = result.frozen_unchanged;
        write_text(*out_dir / "summary.json", summary.dump(2) + "\n");
    }
    return result;
}

}  // namespace diamoe
