// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 ok, 1 validation failure,
// 2 usage error, 3 I/O error.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diamoe/augment.hpp"
#include "diamoe/cfm.hpp"
#include "diamoe/checkpoint.hpp"
#include "diamoe/curriculum.hpp"
#include "diamoe/lexicon.hpp"
#include "diamoe/manifest.hpp"
#include "diamoe/metrics.hpp"
#include "diamoe/phoneme.hpp"

namespace fs = std::filesystem;
using namespace diamoe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool strict = false;
};

struct FrontEndArgs {
    std::string inventory;
    std::string lexicon;
    std::string registry;
    std::string dialect;
};

void add_front_end(CLI::App* cmd, FrontEndArgs& a, bool need_dialect) {
    cmd->add_option("--inventory", a.inventory, "phoneme inventory (text<TAB>kind)")->required();
    cmd->add_option("--lexicon", a.lexicon, "lexicon TSV")->required();
    cmd->add_option("--registry", a.registry, "dialect registry (id<TAB>name)");
    if (need_dialect) {
        cmd->add_option("--dialect", a.dialect, "dialect id or registry name")->required();
    }
}

struct FrontEnd {
    PhonemeInventory inventory;
    std::optional<DialectRegistry> registry;
    Lexicon lexicon;
};

FrontEnd load_front_end(const FrontEndArgs& a) {
    auto inventory = PhonemeInventory::load(a.inventory);
    std::optional<DialectRegistry> registry;
    std::optional<std::size_t> k;
    if (!a.registry.empty()) {
        registry = DialectRegistry::load(a.registry);
        k = registry->size();
    }
    auto lexicon = Lexicon::load(a.lexicon, inventory, k);
    return {std::move(inventory), std::move(registry), std::move(lexicon)};
}

DialectId resolve_dialect(const FrontEnd& fe, const std::string& text) {
    DialectId id = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), id);
    if (res.ec == std::errc() && res.ptr == text.data() + text.size()) {
        return id;
    }
    if (fe.registry) {
        if (const auto found = fe.registry->find(text)) {
            return *found;
        }
    }
    throw UsageError("unknown dialect '" + text + "'");
}

std::vector<double> parse_factor_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        double f = 0.0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), f);
        if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
            throw UsageError("bad factor '" + item + "'");
        }
        out.push_back(f);
    }
    return out;
}

std::vector<AugmentMode> parse_modes(const std::string& text) {
    std::vector<AugmentMode> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "ts") {
            out.push_back(AugmentMode::TimeStretch);
        } else if (item == "ps") {
            out.push_back(AugmentMode::PitchShift);
        } else if (!item.empty()) {
            throw UsageError("unknown mode '" + item + "' (expected ts or ps)");
        }
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

RunConfig load_run_config(const Globals& g) {
    RunConfig cfg = g.config.empty() ? RunConfig::defaults() : RunConfig::load(g.config);
    if (g.seed) {
        cfg.set_seed(*g.seed);
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diamoe: dialect front-end, MoE/LoRA toy training and data tools"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "run configuration (INI)");
    app.add_option("--seed", g.seed, "override every seed in the run configuration");
    app.add_flag("--strict", g.strict, "treat recoverable problems as failures");

    // lexicon-validate
    FrontEndArgs lv;
    auto* lexicon_validate = app.add_subcommand("lexicon-validate", "load and check a lexicon");
    add_front_end(lexicon_validate, lv, false);

    // g2p
    FrontEndArgs gp;
    std::vector<std::string> g2p_text;
    auto* g2p_cmd = app.add_subcommand("g2p", "convert text to IPA symbols (stdin if no text)");
    add_front_end(g2p_cmd, gp, true);
    g2p_cmd->add_option("text", g2p_text, "text to convert");

    // build-manifest
    FrontEndArgs bm;
    std::string bm_transcript, bm_audio, bm_out;
    auto* build_cmd = app.add_subcommand("build-manifest", "build a JSON-Lines manifest");
    add_front_end(build_cmd, bm, true);
    build_cmd->add_option("--transcript", bm_transcript, "id<TAB>text lines")->required();
    build_cmd->add_option("--audio-dir", bm_audio, "directory holding <id>.wav");
    build_cmd->add_option("--out", bm_out, "output manifest")->required();

    // validate-manifest
    std::string vm_manifest, vm_inventory, vm_registry;
    auto* validate_cmd = app.add_subcommand("validate-manifest", "check manifest invariants");
    validate_cmd->add_option("--manifest", vm_manifest)->required();
    validate_cmd->add_option("--inventory", vm_inventory)->required();
    validate_cmd->add_option("--registry", vm_registry)->required();

    // augment
    std::string au_manifest, au_out_dir, au_out, au_factors, au_modes = "ts,ps";
    auto* augment_cmd = app.add_subcommand("augment", "time-stretch and pitch-shift manifest audio");
    augment_cmd->add_option("--manifest", au_manifest)->required();
    augment_cmd->add_option("--out-dir", au_out_dir, "directory for new WAVs")->required();
    augment_cmd->add_option("--out", au_out, "output manifest (default <out-dir>/manifest.jsonl)");
    augment_cmd->add_option("--factors", au_factors, "comma-separated factors (default 0.85,...,1.15)");
    augment_cmd->add_option("--modes", au_modes, "ts, ps or ts,ps");

    // train
    std::string tr_out_dir;
    auto* train_cmd = app.add_subcommand("train", "run the stage 0-3 toy curriculum");
    train_cmd->add_option("--out-dir", tr_out_dir, "checkpoints and loss curves")->required();

    // sample
    std::string sa_checkpoint;
    std::vector<SymbolId> sa_ids;
    std::size_t sa_steps = 32;
    auto* sample_cmd = app.add_subcommand("sample", "Euler-integrate a trained toy model");
    sample_cmd->add_option("--checkpoint", sa_checkpoint)->required();
    sample_cmd->add_option("--ids", sa_ids, "conditioning symbol ids")->required()->delimiter(',');
    sample_cmd->add_option("--steps", sa_steps, "Euler steps")->check(CLI::PositiveNumber);

    // wer
    std::string we_ref, we_hyp, we_mode = "word";
    auto* wer_cmd = app.add_subcommand("wer", "error rate of id-aligned hypothesis lines");
    wer_cmd->add_option("--ref", we_ref)->required();
    wer_cmd->add_option("--hyp", we_hyp)->required();
    wer_cmd->add_option("--mode", we_mode, "word or char")->check(CLI::IsMember({"word", "char"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*lexicon_validate) {
            const auto fe = load_front_end(lv);
            std::cout << "ok: " << fe.lexicon.size() << " entries, " << fe.lexicon.dialect_count()
                      << " dialects, " << fe.inventory.size() << " symbols\n";
            return kExitOk;
        }

        if (*g2p_cmd) {
            const auto fe = load_front_end(gp);
            const DialectId dialect = resolve_dialect(fe, gp.dialect);
            const Policy policy = g.strict ? Policy::Strict : Policy::Lenient;
            std::vector<std::string> inputs = g2p_text;
            if (inputs.empty()) {
                for (std::string line; std::getline(std::cin, line);) {
                    inputs.push_back(line);
                }
            }
            for (const auto& text : inputs) {
                std::cout << detokenize(g2p(text, dialect, fe.lexicon, fe.inventory, policy), fe.inventory)
                          << '\n';
            }
            return kExitOk;
        }

        if (*build_cmd) {
            const auto fe = load_front_end(bm);
            BuildOptions opts;
            if (!bm_audio.empty()) {
                opts.audio_dir = bm_audio;
            }
            const fs::path out(bm_out);
            opts.manifest_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
            opts.strict = g.strict;
            const auto result = build_manifest(fs::path(bm_transcript), resolve_dialect(fe, bm.dialect),
                                               fe.lexicon, fe.inventory, opts);
            for (const auto& f : result.failures) {
                std::cerr << "warning: line " << f.line << " (" << f.id << "): " << f.message << '\n';
            }
            write_manifest(out, result.records);
            std::cerr << result.records.size() << " records written, " << result.failures.size()
                      << " g2p failures\n";
            return kExitOk;
        }

        if (*validate_cmd) {
            const auto inventory = PhonemeInventory::load(vm_inventory);
            const auto registry = DialectRegistry::load(vm_registry);
            const auto report = validate_manifest(fs::path(vm_manifest), inventory, registry);
            for (const auto& v : report.violations) {
                std::cout << "line " << v.line << " id=" << v.id << ':';
                for (const auto kind : v.kinds) {
                    std::cout << ' ' << to_string(kind);
                }
                std::cout << '\n';
            }
            std::cerr << report.records << " records, " << report.violations.size()
                      << " with violations\n";
            return report.ok() ? kExitOk : kExitInvalid;
        }

        if (*augment_cmd) {
            AugmentOptions opts;
            if (!au_factors.empty()) {
                opts.factors = parse_factor_list(au_factors);
            }
            opts.modes = parse_modes(au_modes);
            const fs::path manifest(au_manifest);
            opts.source_dir = manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
            opts.out_dir = au_out_dir;
            fs::create_directories(opts.out_dir);
            const fs::path out = au_out.empty() ? opts.out_dir / "manifest.jsonl" : fs::path(au_out);
            opts.manifest_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
            const auto records = read_manifest(manifest);
            const auto expanded = augment_manifest(records, opts);
            write_manifest(out, expanded);
            std::cerr << records.size() << " -> " << expanded.size() << " records\n";
            return kExitOk;
        }

        if (*train_cmd) {
            const RunConfig cfg = load_run_config(g);
            fs::create_directories(tr_out_dir);
            const auto result = run_curriculum(cfg, fs::path(tr_out_dir));
            for (const auto& stage : result.stages) {
                std::cout << "stage " << stage.stage << ": " << stage.curve.size() << " steps, lambda "
                          << format_double(stage.curve.empty() ? 0.0 : stage.curve.back().lambda)
                          << '\n';
            }
            std::cout << "stage1_loss_drop " << format_double(result.stage1_drop) << '\n'
                      << "stage2_holdout_gate_accuracy " << format_double(result.holdout_gate_accuracy)
                      << '\n'
                      << "stage3_loss_drop " << format_double(result.stage3_drop) << '\n'
                      << "stage3_frozen_unchanged " << (result.frozen_unchanged ? "true" : "false")
                      << '\n';
            return kExitOk;
        }

        if (*sample_cmd) {
            const auto model = model_from_checkpoint(Checkpoint::load(sa_checkpoint));
            const std::uint64_t seed = g.seed.value_or(load_run_config(g).seed);
            const auto result = sample(model, IpaSequence{sa_ids}, sa_steps, seed);
            for (std::size_t i = 0; i < result.trajectory.size(); ++i) {
                std::cout << i;
                for (const double v : result.trajectory[i]) {
                    std::cout << ',' << format_double(v);
                }
                std::cout << '\n';
            }
            return kExitOk;
        }

        if (*wer_cmd) {
            const TokenMode mode = we_mode == "char" ? TokenMode::Character : TokenMode::Word;
            std::cout << wer_csv(wer_files(we_ref, we_hyp, mode));
            return kExitOk;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitUsage;
}
