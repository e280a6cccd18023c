// SPDX-License-Identifier: Apache-2.0
#include "diamoe/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace diamoe {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void put_f64(std::string& out, double v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw CheckpointError(CheckpointErrorKind::Truncated, "checkpoint truncated", pos_);
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }
    double f64() {
        need(8);
        double v = 0;
        std::memcpy(&v, bytes_.data() + pos_, 8);
        pos_ += 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

const std::string& meta_at(const std::map<std::string, std::string>& meta, const std::string& key) {
    const auto it = meta.find(key);
    if (it == meta.end()) {
        throw CheckpointError(CheckpointErrorKind::MissingMeta, "checkpoint metadata lacks '" + key + "'");
    }
    return it->second;
}

template <typename T>
T meta_number(const std::map<std::string, std::string>& meta, const std::string& key) {
    const std::string& s = meta_at(meta, key);
    T value{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw CheckpointError(CheckpointErrorKind::MissingMeta, "bad metadata value for '" + key + "'");
    }
    return value;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

std::string Checkpoint::serialize() const {
    std::string out;
    out.append(kMagic, sizeof kMagic);
    put_u32(out, kVersion);

    nlohmann::json meta_json = nlohmann::json::object();
    for (const auto& [k, v] : meta) {
        meta_json[k] = v;
    }
    const std::string meta_text = meta_json.dump();
    put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
    out += meta_text;

    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        put_u32(out, static_cast<std::uint32_t>(t.value.rows()));
        put_u32(out, static_cast<std::uint32_t>(t.value.cols()));
        for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
                put_f64(out, t.value(r, c));
            }
        }
    }
    return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
    if (bytes.size() < sizeof kMagic + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw CheckpointError(CheckpointErrorKind::VersionMismatch, "not a diamoe checkpoint (bad magic)");
    }
    Reader in(bytes);
    in.str(sizeof kMagic);
    const std::uint32_t version = in.u32();
    if (version != kVersion) {
        throw CheckpointError(CheckpointErrorKind::VersionMismatch,
                              "unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const std::uint32_t meta_len = in.u32();
    const std::string meta_text = in.str(meta_len);
    const auto meta_json = nlohmann::json::parse(meta_text, nullptr, false);
    if (meta_json.is_discarded() || !meta_json.is_object()) {
        throw CheckpointError(CheckpointErrorKind::VersionMismatch, "checkpoint metadata is not a JSON object");
    }
    for (const auto& [k, v] : meta_json.items()) {
        if (!v.is_string()) {
            throw CheckpointError(CheckpointErrorKind::VersionMismatch, "checkpoint metadata values must be strings");
        }
        ckpt.meta[k] = v.get<std::string>();
    }
    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = in.str(in.u32());
        const std::uint32_t rows = in.u32();
        const std::uint32_t cols = in.u32();
        in.need(static_cast<std::size_t>(rows) * cols * 8);
        t.value.resize(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t c = 0; c < cols; ++c) {
                t.value(r, c) = in.f64();
            }
        }
        ckpt.tensors.push_back(std::move(t));
    }
    if (!in.done()) {
        throw CheckpointError(CheckpointErrorKind::Truncated, "trailing bytes after checkpoint tensors");
    }
    return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write checkpoint: " + path.string());
    }
    const std::string bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing checkpoint: " + path.string());
    }
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
}

Checkpoint to_checkpoint(const ToyTtsModel& model, CheckpointScope scope) {
    Checkpoint ckpt;
    const ModelConfig& cfg = model.config();
    ckpt.meta["format"] = "diamoe-checkpoint";
    ckpt.meta["scope"] = scope == CheckpointScope::Full ? "full" : "adapters";
    ckpt.meta["vocab"] = std::to_string(cfg.vocab);
    ckpt.meta["width"] = std::to_string(cfg.width);
    ckpt.meta["features"] = std::to_string(cfg.features);
    ckpt.meta["experts"] = std::to_string(cfg.experts);
    ckpt.meta["top_k"] = std::to_string(cfg.top_k);
    ckpt.meta["head_hidden"] = std::to_string(cfg.head_hidden);
    ckpt.meta["seed"] = std::to_string(cfg.seed);
    ckpt.meta["has_moe"] = model.has_moe() ? "1" : "0";
    ckpt.meta["has_adapters"] = model.has_adapters() ? "1" : "0";
    if (const auto lora = model.lora_config()) {
        ckpt.meta["lora_rank"] = std::to_string(lora->rank);
        ckpt.meta["lora_alpha"] = format_double(lora->alpha);
    }
    model.for_each_param(ToyTtsModel::ConstParamVisitor(
        [&](const std::string& name, ParamGroup group, const Param& p) {
            const bool adapter_tensor = group == ParamGroup::Lora || group == ParamGroup::Adapter;
            if (scope == CheckpointScope::Full || adapter_tensor) {
                ckpt.tensors.push_back(NamedTensor{name, p.value});
            }
        }));
    return ckpt;
}

ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta) {
    ModelConfig cfg;
    cfg.vocab = meta_number<std::size_t>(meta, "vocab");
    cfg.width = meta_number<std::size_t>(meta, "width");
    cfg.features = meta_number<std::size_t>(meta, "features");
    cfg.experts = meta_number<std::size_t>(meta, "experts");
    cfg.top_k = meta_number<std::size_t>(meta, "top_k");
    cfg.head_hidden = meta_number<std::size_t>(meta, "head_hidden");
    cfg.seed = meta_number<std::uint64_t>(meta, "seed");
    return cfg;
}

namespace {

std::optional<LoraConfig> lora_from_meta(const std::map<std::string, std::string>& meta) {
    if (!meta.contains("lora_rank")) {
        return std::nullopt;
    }
    LoraConfig lora;
    lora.rank = meta_number<std::size_t>(meta, "lora_rank");
    lora.alpha = meta_number<double>(meta, "lora_alpha");
    return lora;
}

}  // namespace

ToyTtsModel model_from_checkpoint(const Checkpoint& ckpt) {
    ToyTtsModel model(model_config_from_meta(ckpt.meta));
    if (ckpt.meta.contains("has_moe") && ckpt.meta.at("has_moe") == "1") {
        model.enable_moe();
    }
    if (ckpt.meta.contains("has_adapters") && ckpt.meta.at("has_adapters") == "1") {
        model.attach_adapters(lora_from_meta(ckpt.meta).value_or(LoraConfig{}));
    }
    restore(model, ckpt);
    return model;
}

void restore(ToyTtsModel& model, const Checkpoint& ckpt) {
    // Validate everything before touching the model so a failed restore
    // leaves it unchanged.
    std::vector<std::pair<Param*, const NamedTensor*>> plan;
    for (const auto& t : ckpt.tensors) {
        Param* p = model.find_param(t.name);
        if (p == nullptr) {
            throw CheckpointError(CheckpointErrorKind::UnknownTensor,
                                  "checkpoint tensor '" + t.name + "' has no counterpart in the model");
        }
        if (p->rows() != t.value.rows() || p->cols() != t.value.cols()) {
            throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                                  "shape mismatch for '" + t.name + "': model " + std::to_string(p->rows()) +
                                      "x" + std::to_string(p->cols()) + ", checkpoint " +
                                      std::to_string(t.value.rows()) + "x" + std::to_string(t.value.cols()));
        }
        plan.emplace_back(p, &t);
    }
    for (auto& [p, t] : plan) {
        p->value = t->value;
        p->zero_grad();
    }
}

ToyTtsModel init_from_checkpoint(const std::filesystem::path& path, int stage,
                                 const std::optional<LoraConfig>& lora) {
    const Checkpoint ckpt = Checkpoint::load(path);
    ToyTtsModel model(model_config_from_meta(ckpt.meta));
    if (stage >= 2) {
        model.enable_moe();
    }
    if (stage >= 3) {
        model.attach_adapters(lora.value_or(lora_from_meta(ckpt.meta).value_or(LoraConfig{})));
    }
    restore(model, ckpt);
    return model;
}

}  // namespace diamoe
