// SPDX-License-Identifier: Apache-2.0
#include "diamoe/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "diamoe/unicode.hpp"
#include "diamoe/wav.hpp"
#include "json.hpp"

namespace diamoe {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kKeys[] = {"id", "text", "dialect", "ipa", "audio", "duration"};

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Splits on '\n' and drops a trailing '\r' from each line.
std::vector<std::string_view> lines_of(std::string_view contents) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < contents.size()) {
        std::size_t end = contents.find('\n', start);
        if (end == std::string_view::npos) {
            end = contents.size();
        }
        std::string_view line = contents.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t") == std::string_view::npos;
}

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
    throw ManifestError(ManifestErrorKind::ParseError,
                        "manifest line " + std::to_string(line) + ": " + what, line);
}

}  // namespace

std::string to_jsonl(const ManifestRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["dialect"] = r.dialect;
    j["ipa"] = r.ipa;
    j["audio"] = r.audio ? ordered_json(*r.audio) : ordered_json(nullptr);
    j["duration"] = r.duration ? ordered_json(*r.duration) : ordered_json(nullptr);
    return j.dump();
}

ManifestRecord parse_jsonl(std::string_view line, std::size_t line_number) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
        parse_error(line_number, e.what());
    }
    if (!j.is_object()) {
        parse_error(line_number, "expected a JSON object");
    }
    if (j.size() != std::size(kKeys)) {
        parse_error(line_number, "expected exactly the keys id,text,dialect,ipa,audio,duration");
    }
    for (const auto key : kKeys) {
        if (!j.contains(std::string(key))) {
            parse_error(line_number, "missing key '" + std::string(key) + "'");
        }
    }
    ManifestRecord r;
    if (!j["id"].is_string() || !j["text"].is_string()) {
        parse_error(line_number, "id and text must be strings");
    }
    r.id = j["id"].get<std::string>();
    r.text = j["text"].get<std::string>();
    if (!j["dialect"].is_number_unsigned()) {
        parse_error(line_number, "dialect must be a non-negative integer");
    }
    r.dialect = j["dialect"].get<DialectId>();
    if (!j["ipa"].is_array()) {
        parse_error(line_number, "ipa must be an array");
    }
    for (const auto& s : j["ipa"]) {
        if (!s.is_string()) {
            parse_error(line_number, "ipa entries must be strings");
        }
        r.ipa.push_back(s.get<std::string>());
    }
    if (!j["audio"].is_null()) {
        if (!j["audio"].is_string()) {
            parse_error(line_number, "audio must be a string or null");
        }
        r.audio = j["audio"].get<std::string>();
    }
    if (!j["duration"].is_null()) {
        if (!j["duration"].is_number()) {
            parse_error(line_number, "duration must be a number or null");
        }
        r.duration = j["duration"].get<double>();
    }
    return r;
}

std::vector<ManifestRecord> parse_manifest(std::string_view contents) {
    std::vector<ManifestRecord> records;
    const auto lines = lines_of(contents);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_blank(lines[i])) {
            continue;
        }
        records.push_back(parse_jsonl(lines[i], i + 1));
    }
    return records;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
    return parse_manifest(slurp(path));
}

std::string format_manifest(std::span<const ManifestRecord> records) {
    std::string out;
    for (const auto& r : records) {
        out += to_jsonl(r);
        out += '\n';
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << format_manifest(records);
}

BuildResult build_manifest(std::string_view transcript, DialectId dialect, const Lexicon& lexicon,
                           const PhonemeInventory& inventory, const BuildOptions& options) {
    BuildResult result;
    std::unordered_set<std::string> seen;
    const auto lines = lines_of(transcript);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_number = i + 1;
        if (is_blank(lines[i])) {
            continue;
        }
        const auto tab = lines[i].find('\t');
        if (tab == std::string_view::npos || tab == 0) {
            throw ManifestError(ManifestErrorKind::MalformedTranscript,
                                "transcript line " + std::to_string(line_number) +
                                    ": expected id<TAB>text",
                                line_number);
        }
        ManifestRecord r;
        r.id = std::string(lines[i].substr(0, tab));
        r.text = unicode::nfc(lines[i].substr(tab + 1));
        r.dialect = dialect;
        if (!seen.insert(r.id).second) {
            throw ManifestError(ManifestErrorKind::DuplicateId, "duplicate id '" + r.id + "'",
                                line_number);
        }

        IpaSequence seq;
        try {
            seq = g2p(r.text, dialect, lexicon, inventory, Policy::Strict);
        } catch (const LexiconError& e) {
            if (e.kind() != LexiconErrorKind::NoPronunciation) {
                throw;
            }
            if (options.strict) {
                throw ManifestError(ManifestErrorKind::G2pFailure,
                                    "g2p failed for '" + r.id + "': " + e.what(), line_number);
            }
            result.failures.push_back({r.id, line_number, e.what()});
            seq = g2p(r.text, dialect, lexicon, inventory, Policy::Lenient);
        }
        for (const auto id : seq.ids) {
            r.ipa.push_back(inventory.symbol(id).text);
        }

        if (options.audio_dir) {
            const auto wav = *options.audio_dir / (r.id + ".wav");
            if (std::filesystem::exists(wav)) {
                r.duration = probe_wav(wav).duration;
                r.audio = std::filesystem::relative(wav, options.manifest_dir).generic_string();
            }
        }
        result.records.push_back(std::move(r));
    }
    return result;
}

BuildResult build_manifest(const std::filesystem::path& transcript, DialectId dialect,
                           const Lexicon& lexicon, const PhonemeInventory& inventory,
                           const BuildOptions& options) {
    return build_manifest(std::string_view(slurp(transcript)), dialect, lexicon, inventory,
                          options);
}

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::DuplicateId: return "duplicate_id";
        case ViolationKind::UnknownDialect: return "unknown_dialect";
        case ViolationKind::UntokenizableIpa: return "untokenizable_ipa";
        case ViolationKind::NonPositiveDuration: return "nonpositive_duration";
    }
    return "unknown";
}

ValidationReport validate_manifest(std::span<const ManifestRecord> records,
                                   const PhonemeInventory& inventory,
                                   const DialectRegistry& registry) {
    ValidationReport report;
    report.records = records.size();
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        RecordViolation v{i + 1, r.id, {}};
        if (!seen.insert(r.id).second) {
            v.kinds.push_back(ViolationKind::DuplicateId);
        }
        if (r.dialect >= registry.size()) {
            v.kinds.push_back(ViolationKind::UnknownDialect);
        }
        for (const auto& s : r.ipa) {
            const auto id = inventory.find(s);
            if (!id || *id == PhonemeInventory::kUnk || *id == PhonemeInventory::kPad) {
                v.kinds.push_back(ViolationKind::UntokenizableIpa);
                break;
            }
        }
        const bool bad_duration = r.duration ? !(*r.duration > 0.0) : r.audio.has_value();
        if (bad_duration) {
            v.kinds.push_back(ViolationKind::NonPositiveDuration);
        }
        if (!v.kinds.empty()) {
            report.violations.push_back(std::move(v));
        }
    }
    return report;
}

ValidationReport validate_manifest(const std::filesystem::path& path,
                                   const PhonemeInventory& inventory,
                                   const DialectRegistry& registry) {
    const std::string contents = slurp(path);
    std::vector<ManifestRecord> records;
    std::vector<std::size_t> line_numbers;
    const auto lines = lines_of(contents);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_blank(lines[i])) {
            continue;
        }
        records.push_back(parse_jsonl(lines[i], i + 1));
        line_numbers.push_back(i + 1);
    }
    auto report = validate_manifest(records, inventory, registry);
    for (auto& v : report.violations) {
        v.line = line_numbers[v.line - 1];
    }
    return report;
}

}  // namespace diamoe
