// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls into the code under test except to
// build inputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "diamoe/cfm.hpp"
#include "diamoe/model.hpp"
#include "diamoe/moe_embed.hpp"

namespace oracle {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(DIAMOE_FIXTURE_DIR) / name;
}

struct GoldenRow {
    std::string op;      // "tokenize" or "g2p"
    std::string policy;  // "strict" or "lenient"
    std::string dialect;
    std::string input;
    std::string expected;  // space-separated ids or error:<Kind>:<position>
};

/// Rows of fixtures/frontend_golden.tsv (written by oracles/frontend_golden.py).
inline std::vector<GoldenRow> golden_rows() {
    std::ifstream in(fixture("frontend_golden.tsv"));
    std::vector<GoldenRow> rows;
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (;;) {
            const auto tab = line.find('\t', start);
            f.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (f.size() == 5) rows.push_back({f[0], f[1], f[2], f[3], f[4]});
    }
    return rows;
}

// ---------------------------------------------------------------- edit distance

/// Recursion over the three edit operations, memoized on (i, j).
inline std::size_t edit_distance(const std::vector<std::string>& a, std::size_t i,
                                 const std::vector<std::string>& b, std::size_t j,
                                 std::vector<std::size_t>& memo) {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    std::size_t& slot = memo[i * (b.size() + 1) + j];
    if (slot != static_cast<std::size_t>(-1)) return slot;
    const std::size_t sub = edit_distance(a, i + 1, b, j + 1, memo) + (a[i] == b[j] ? 0 : 1);
    const std::size_t del = edit_distance(a, i + 1, b, j, memo) + 1;
    const std::size_t ins = edit_distance(a, i, b, j + 1, memo) + 1;
    slot = std::min({sub, del, ins});
    return slot;
}

inline std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> memo((a.size() + 1) * (b.size() + 1), static_cast<std::size_t>(-1));
    return edit_distance(a, 0, b, 0, memo);
}

// ---------------------------------------------------------------- spectra

/// Magnitude of the DTFT of `x` (Hann-windowed) at frequency `hz`.
inline double dtft_magnitude(const std::vector<double>& x, double rate, double hz) {
    double re = 0.0;
    double im = 0.0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
        const double phase = 2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate;
        re += w * x[i] * std::cos(phase);
        im -= w * x[i] * std::sin(phase);
    }
    return std::hypot(re, im);
}

/// Frequency of the largest spectral peak in [lo, hi], scanned coarsely
/// then refined around the best bin.
inline double dominant_frequency(const std::vector<double>& x, double rate, double lo = 50.0,
                                 double hi = 2000.0) {
    double best_hz = lo;
    double best = -1.0;
    for (double hz = lo; hz <= hi; hz += 2.0) {
        const double m = dtft_magnitude(x, rate, hz);
        if (m > best) {
            best = m;
            best_hz = hz;
        }
    }
    const double centre = best_hz;
    for (double hz = centre - 2.0; hz <= centre + 2.0; hz += 0.1) {
        const double m = dtft_magnitude(x, rate, hz);
        if (m > best) {
            best = m;
            best_hz = hz;
        }
    }
    return best_hz;
}

inline double rms(const std::vector<double>& x) {
    double s = 0.0;
    for (const double v : x) s += v * v;
    return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

inline std::vector<double> sine(double hz, double rate, std::size_t n, double amplitude = 8000.0,
                                double phase = 0.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate + phase);
    }
    return x;
}

// ---------------------------------------------------------------- routing

/// Expert e is active iff fewer than k experts beat it (higher logit, or
/// equal logit and lower id).
inline std::vector<bool> topk_mask(const diamoe::Vec& g, std::size_t k) {
    std::vector<bool> mask(static_cast<std::size_t>(g.size()), false);
    for (Eigen::Index e = 0; e < g.size(); ++e) {
        std::size_t beaten_by = 0;
        for (Eigen::Index o = 0; o < g.size(); ++o) {
            if (g[o] > g[e] || (g[o] == g[e] && o < e)) ++beaten_by;
        }
        mask[static_cast<std::size_t>(e)] = beaten_by < k;
    }
    return mask;
}

/// Runs every expert on every row, then mixes with masked, renormalized weights.
inline diamoe::Mat dense_moe(const diamoe::Mat& h, const diamoe::GateNetwork& gate,
                             const std::vector<diamoe::ExpertNetwork>& experts, std::size_t k) {
    const diamoe::Vec s = h.colwise().mean().transpose();
    const diamoe::Vec g = gate.w.value * s + gate.b.value.col(0);
    const auto mask = topk_mask(g, k);
    double z = 0.0;
    const double top = g.maxCoeff();
    std::vector<double> w(mask.size(), 0.0);
    for (std::size_t e = 0; e < mask.size(); ++e) {
        if (mask[e]) {
            w[e] = std::exp(g[static_cast<Eigen::Index>(e)] - top);
            z += w[e];
        }
    }
    diamoe::Mat out = h;
    for (std::size_t e = 0; e < experts.size(); ++e) {
        const auto& ex = experts[e];
        diamoe::Mat y(h.rows(), h.cols());
        for (Eigen::Index r = 0; r < h.rows(); ++r) {
            const diamoe::Vec x = h.row(r).transpose();
            diamoe::Vec a = ex.w1.value * x + ex.b1.value.col(0);
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                a[i] = 0.5 * a[i] * (1.0 + std::erf(a[i] / std::sqrt(2.0)));
            }
            y.row(r) = (ex.w2.value * a + ex.b2.value.col(0)).transpose();
        }
        out += (w[e] / z) * y;  // w[e] == 0 for masked experts
    }
    return out;
}

// ---------------------------------------------------------------- gradients

struct GradCase {
    diamoe::ToyTtsModel model;
    std::vector<diamoe::ToyExample> examples;
    std::vector<diamoe::FlowSample> batch;
};

/// Small random model with MoE and adapters attached, every tensor
/// (including zero-initialized ones) perturbed so no gradient is trivially
/// zero, and a random batch with valid dialect labels.
inline GradCase random_grad_case(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    diamoe::ModelConfig cfg;
    cfg.vocab = pick(5, 9);
    cfg.width = 4 * pick(1, 2);
    cfg.features = pick(2, 4);
    cfg.experts = pick(2, 4);
    cfg.top_k = pick(1, cfg.experts);
    cfg.head_hidden = pick(4, 8);
    cfg.seed = seed;
    diamoe::LoraConfig lora;
    lora.rank = pick(1, 3);
    lora.alpha = 1.0 + static_cast<double>(pick(0, 2));

    GradCase c{diamoe::ToyTtsModel(cfg), {}, {}};
    c.model.enable_moe();
    c.model.attach_adapters(lora);
    std::normal_distribution<double> normal(0.0, 1.0);
    c.model.for_each_param(diamoe::ToyTtsModel::ParamVisitor(
        [&](const std::string& name, diamoe::ParamGroup, diamoe::Param& p) {
            for (Eigen::Index i = 0; i < p.value.size(); ++i) {
                p.value.data()[i] += 0.3 * normal(rng);
            }
            if (name == "embedding.table") {
                p.value.row(0).setZero();
            }
        }));

    const std::size_t n = pick(2, 3);
    for (std::size_t i = 0; i < n; ++i) {
        diamoe::ToyExample ex;
        const std::size_t len = pick(2, 5);
        for (std::size_t t = 0; t < len; ++t) {
            ex.ids.ids.push_back(static_cast<diamoe::SymbolId>(pick(1, cfg.vocab - 1)));
        }
        ex.label = pick(0, cfg.experts - 1);
        ex.target = diamoe::Vec(static_cast<Eigen::Index>(cfg.features));
        for (auto& v : ex.target) v = normal(rng);
        c.examples.push_back(std::move(ex));
    }
    for (const auto& ex : c.examples) {
        diamoe::FlowSample s;
        s.example = &ex;
        s.noise = diamoe::Vec(static_cast<Eigen::Index>(cfg.features));
        for (auto& v : s.noise) v = normal(rng);
        s.t = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
        c.batch.push_back(std::move(s));
    }
    return c;
}

struct TensorCheck {
    std::string name;
    diamoe::ParamGroup group;
    double rel_error = 0.0;
    double scale = 0.0;
};

/// Central finite differences of the stage objective for every entry of
/// every parameter, compared with the analytic gradient. Per tensor the
/// error is |a - n|_inf / max(|a|_inf, |n|_inf); when both norms vanish
/// (below 1e-12) the absolute difference is reported.
inline std::vector<TensorCheck> check_gradients(GradCase& c, int stage, double step = 1e-5) {
    diamoe::backprop_batch(c.model, c.batch, stage);
    std::vector<std::pair<std::string, diamoe::Mat>> analytic;
    std::vector<diamoe::ParamGroup> groups;
    c.model.for_each_param(diamoe::ToyTtsModel::ParamVisitor(
        [&](const std::string& name, diamoe::ParamGroup group, diamoe::Param& p) {
            analytic.emplace_back(name, p.grad);
            groups.push_back(group);
        }));

    std::vector<TensorCheck> out;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const auto& [name, grad] = analytic[k];
        diamoe::Param* p = c.model.find_param(name);
        diamoe::Mat numeric(grad.rows(), grad.cols());
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            double& slot = p->value.data()[i];
            const double saved = slot;
            slot = saved + step;
            const double up = diamoe::evaluate_batch(c.model, c.batch, stage).total;
            slot = saved - step;
            const double down = diamoe::evaluate_batch(c.model, c.batch, stage).total;
            slot = saved;
            numeric.data()[i] = (up - down) / (2.0 * step);
        }
        if (name == "embedding.table") {
            // PAD row is held at zero and never trained.
            numeric.row(0).setZero();
        }
        const double diff = (grad - numeric).cwiseAbs().maxCoeff();
        const double scale = std::max(grad.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
        out.push_back({name, groups[k], scale < 1e-12 ? diff : diff / scale, scale});
    }
    return out;
}

}  // namespace oracle
