// SPDX-License-Identifier: Apache-2.0
//
// Unified IPA symbol inventory shared by every dialect, plus greedy
// longest-match tokenization of raw IPA strings into symbol ids.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "diamoe/error.hpp"

namespace diamoe {

using SymbolId = std::uint32_t;

enum class SymbolKind { Consonant, Vowel, Tone, Boundary, Special };

std::string_view to_string(SymbolKind kind);
std::optional<SymbolKind> parse_symbol_kind(std::string_view name);

enum class PhonemeErrorKind {
    DuplicateSymbol,
    EmptySymbol,
    InvalidSymbol,
    UnknownSymbol,
    InvalidId,
    MalformedLine,
};
using PhonemeError = KindedError<PhonemeErrorKind>;

struct IpaSymbol {
    std::string text;  // NFC
    SymbolKind kind = SymbolKind::Consonant;
    SymbolId id = 0;
};

struct SymbolSpec {
    std::string text;
    SymbolKind kind = SymbolKind::Consonant;
};

/// Strict policies raise on unmatched input, lenient ones emit UNK.
enum class Policy { Strict, Lenient };

class PhonemeInventory {
public:
    static constexpr SymbolId kPad = 0;
    static constexpr SymbolId kUnk = 1;
    static constexpr SymbolId kBoundary = 2;
    static constexpr std::string_view kPadText = "<pad>";
    static constexpr std::string_view kUnkText = "<unk>";
    static constexpr std::string_view kBoundaryText = "|";

    /// Reserved symbols first (ids 0..2), then `specs` in order.
    /// Throws PhonemeError{DuplicateSymbol, EmptySymbol, InvalidSymbol}.
    static PhonemeInventory build(std::span<const SymbolSpec> specs);

    /// Reads `text<TAB>kind` lines; `#` starts a comment line.
    static PhonemeInventory load(const std::filesystem::path& path);
    static PhonemeInventory parse(std::string_view contents);

    std::size_t size() const noexcept { return symbols_.size(); }
    std::span<const IpaSymbol> symbols() const noexcept { return symbols_; }

    const IpaSymbol& symbol(SymbolId id) const;
    bool contains(SymbolId id) const noexcept { return id < symbols_.size(); }

    /// Lookup of an exact (already NFC) symbol text.
    std::optional<SymbolId> find(std::string_view text) const;

    /// Longest symbol matching a prefix of `code_points[start..]`.
    /// Returns the symbol id and the number of code points consumed.
    std::optional<std::pair<SymbolId, std::size_t>> longest_match(
        std::span<const std::string> code_points, std::size_t start) const;

    std::size_t max_symbol_code_points() const noexcept { return max_code_points_; }

private:
    PhonemeInventory() = default;
    void add(std::string text, SymbolKind kind);

    std::vector<IpaSymbol> symbols_;
    std::unordered_map<std::string, SymbolId> index_;
    std::size_t max_code_points_ = 0;
};

struct IpaSequence {
    std::vector<SymbolId> ids;

    bool empty() const noexcept { return ids.empty(); }
    std::size_t size() const noexcept { return ids.size(); }
    friend bool operator==(const IpaSequence&, const IpaSequence&) = default;
};

/// Greedy left-to-right longest-match segmentation of `raw` (NFC-normalized
/// first). Whitespace separates symbols and never produces a token.
/// Strict mode throws PhonemeError{UnknownSymbol} whose position is the code
/// point index of the first unmatched character.
IpaSequence tokenize_ipa(std::string_view raw, const PhonemeInventory& inventory,
                         Policy policy = Policy::Strict);

/// Symbol texts joined by single spaces.
std::string detokenize(const IpaSequence& seq, const PhonemeInventory& inventory);

}  // namespace diamoe
