// SPDX-License-Identifier: Apache-2.0
//
// Word and character error rates.

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diamoe/error.hpp"

namespace diamoe {

enum class MetricsErrorKind { MisalignedInput, MalformedLine };
using MetricsError = KindedError<MetricsErrorKind>;

enum class TokenMode { Word, Character };

/// Words split on Unicode whitespace, or single code points with whitespace dropped.
std::vector<std::string> tokenize(std::string_view text, TokenMode mode);

struct WerResult {
    double rate = 0.0;
    std::size_t substitutions = 0;
    std::size_t insertions = 0;
    std::size_t deletions = 0;
    std::size_t reference_length = 0;
    /// Set when the reference is empty but the hypothesis is not; `rate` is then +inf.
    bool undefined = false;

    std::size_t errors() const noexcept { return substitutions + insertions + deletions; }
};

/// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
/// prefers match/substitution, then deletion, then insertion.
WerResult wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);

/// Plain edit distance.
std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);

struct UtteranceWer {
    std::string id;
    WerResult result;
};

/// Both inputs are `id<TAB>text` lines with the same ids in the same order.
std::vector<UtteranceWer> wer_lines(std::string_view reference, std::string_view hypothesis,
                                    TokenMode mode);
std::vector<UtteranceWer> wer_files(const std::filesystem::path& reference,
                                    const std::filesystem::path& hypothesis, TokenMode mode);

/// `id,rate,S,I,D` with a header row; undefined rates print as `inf`.
std::string wer_csv(std::span<const UtteranceWer> rows);

}  // namespace diamoe
