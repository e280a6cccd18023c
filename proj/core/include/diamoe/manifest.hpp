// SPDX-License-Identifier: Apache-2.0
//
// JSON-Lines manifests of aligned (text, IPA, dialect, audio) records.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diamoe/error.hpp"
#include "diamoe/lexicon.hpp"
#include "diamoe/phoneme.hpp"

namespace diamoe {

enum class ManifestErrorKind { ParseError, DuplicateId, G2pFailure, MalformedTranscript };
using ManifestError = KindedError<ManifestErrorKind>;

/// One manifest line. `audio` is relative to the manifest's directory.
struct ManifestRecord {
    std::string id;
    std::string text;
    DialectId dialect = 0;
    std::vector<std::string> ipa;
    std::optional<std::string> audio;
    std::optional<double> duration;

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Keys are written in the fixed order id, text, dialect, ipa, audio, duration.
std::string to_jsonl(const ManifestRecord& record);

/// Throws ManifestError{ParseError} carrying `line_number` for malformed JSON,
/// missing or extra keys, or wrongly typed values.
ManifestRecord parse_jsonl(std::string_view line, std::size_t line_number);

std::vector<ManifestRecord> parse_manifest(std::string_view contents);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
std::string format_manifest(std::span<const ManifestRecord> records);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records);

struct G2pFailure {
    std::string id;
    std::size_t line = 0;
    std::string message;
};

struct BuildOptions {
    std::optional<std::filesystem::path> audio_dir;
    std::filesystem::path manifest_dir = ".";  // audio paths are stored relative to this
    bool strict = false;
};

struct BuildResult {
    std::vector<ManifestRecord> records;
    std::vector<G2pFailure> failures;
};

/// Transcript lines are `id<TAB>text`; blank lines are skipped. In lenient
/// mode a line that fails g2p is still emitted (with UNK symbols) and listed
/// in `failures`; strict mode throws ManifestError{G2pFailure} instead.
BuildResult build_manifest(std::string_view transcript, DialectId dialect, const Lexicon& lexicon,
                           const PhonemeInventory& inventory, const BuildOptions& options);
BuildResult build_manifest(const std::filesystem::path& transcript, DialectId dialect,
                           const Lexicon& lexicon, const PhonemeInventory& inventory,
                           const BuildOptions& options);

enum class ViolationKind { DuplicateId, UnknownDialect, UntokenizableIpa, NonPositiveDuration };
std::string_view to_string(ViolationKind kind);

/// All problems of one record; a record appears at most once in a report.
struct RecordViolation {
    std::size_t line = 0;
    std::string id;
    std::vector<ViolationKind> kinds;
};

struct ValidationReport {
    std::size_t records = 0;
    std::vector<RecordViolation> violations;

    bool ok() const noexcept { return violations.empty(); }
};

ValidationReport validate_manifest(std::span<const ManifestRecord> records,
                                   const PhonemeInventory& inventory,
                                   const DialectRegistry& registry);
ValidationReport validate_manifest(const std::filesystem::path& path,
                                   const PhonemeInventory& inventory,
                                   const DialectRegistry& registry);

}  // namespace diamoe
