// SPDX-License-Identifier: Apache-2.0
//
// Per-dialect pronunciation lexicons and the grapheme-to-IPA front-end.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diamoe/error.hpp"
#include "diamoe/phoneme.hpp"

namespace diamoe {

using DialectId = std::uint32_t;

enum class LexiconErrorKind {
    MalformedLine,
    UnknownIpaSymbol,
    DuplicatePriority,
    NoPronunciation,
    BadDialect,
};
using LexiconError = KindedError<LexiconErrorKind>;

/// Dense dialect ids 0..K-1, read from `id<TAB>name` lines.
class DialectRegistry {
public:
    DialectRegistry() = default;
    explicit DialectRegistry(std::vector<std::string> names);

    static DialectRegistry load(const std::filesystem::path& path);
    static DialectRegistry parse(std::string_view contents);

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(DialectId id) const;
    std::optional<DialectId> find(std::string_view name) const;

private:
    std::vector<std::string> names_;
};

struct LexiconEntry {
    std::string grapheme;  // NFC, no whitespace
    DialectId dialect = 0;
    std::vector<std::string> pron;  // IPA symbol texts
    std::vector<SymbolId> pron_ids;
    int priority = 0;
};

class Lexicon {
public:
    /// `dialect_count` bounds dialect ids when known (from a registry);
    /// otherwise K is one past the largest dialect id seen.
    explicit Lexicon(std::optional<std::size_t> dialect_count = std::nullopt);

    /// `grapheme<TAB>dialect<TAB>pron symbols<TAB>priority?` lines, `#` comments.
    /// Error positions are 1-based line numbers.
    static Lexicon parse(std::string_view contents, const PhonemeInventory& inventory,
                         std::optional<std::size_t> dialect_count = std::nullopt);
    static Lexicon load(const std::filesystem::path& path, const PhonemeInventory& inventory,
                        std::optional<std::size_t> dialect_count = std::nullopt);

    /// Validates and inserts one entry. Throws LexiconError.
    void add(LexiconEntry entry, const PhonemeInventory& inventory);

    std::size_t dialect_count() const noexcept { return dialect_count_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::span<const LexiconEntry> entries() const noexcept { return entries_; }

    /// Candidates for an exact grapheme, highest priority first.
    std::vector<const LexiconEntry*> lookup(DialectId dialect, std::string_view grapheme) const;

    struct Match {
        const LexiconEntry* entry = nullptr;
        std::size_t length = 0;  // code points consumed
    };

    /// Longest grapheme matching at `code_points[start..]` within one
    /// dialect; ties on length go to the highest priority entry.
    std::optional<Match> longest_match(DialectId dialect, std::span<const std::string> code_points,
                                       std::size_t start) const;

private:
    struct Node {
        std::map<std::string, std::size_t> children;  // code point -> node index
        std::vector<std::size_t> entries;             // sorted by priority, descending
    };
    struct Trie {
        std::vector<Node> nodes{Node{}};
    };

    void ensure_dialect(DialectId dialect);

    std::optional<std::size_t> fixed_dialect_count_;
    std::size_t dialect_count_ = 0;
    std::vector<Trie> tries_;
    std::vector<LexiconEntry> entries_;
};

/// Greedy longest-match grapheme-to-IPA conversion for one dialect. Word
/// matches are joined with the BOUNDARY symbol. Whitespace in `text` is
/// skipped. Strict mode throws LexiconError{NoPronunciation} at the code
/// point index of the first uncovered character; lenient mode emits UNK for
/// that character and carries on.
IpaSequence g2p(std::string_view text, DialectId dialect, const Lexicon& lexicon,
                const PhonemeInventory& inventory, Policy policy = Policy::Strict);

}  // namespace diamoe
