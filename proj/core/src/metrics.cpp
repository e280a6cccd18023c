// SPDX-License-Identifier: Apache-2.0
#include "diamoe/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "diamoe/unicode.hpp"

namespace diamoe {
namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::pair<std::string, std::string>> id_lines(std::string_view contents) {
    std::vector<std::pair<std::string, std::string>> rows;
    std::size_t start = 0;
    std::size_t line_number = 0;
    while (start < contents.size()) {
        ++line_number;
        std::size_t end = contents.find('\n', start);
        if (end == std::string_view::npos) {
            end = contents.size();
        }
        std::string_view line = contents.substr(start, end - start);
        start = end + 1;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) {
            // An id with no text is an empty utterance.
            rows.emplace_back(std::string(line), std::string());
            continue;
        }
        if (tab == 0) {
            throw MetricsError(MetricsErrorKind::MalformedLine,
                               "line " + std::to_string(line_number) + ": empty id", line_number);
        }
        rows.emplace_back(std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)));
    }
    return rows;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, TokenMode mode) {
    if (mode == TokenMode::Word) {
        return unicode::split_whitespace(text);
    }
    std::vector<std::string> out;
    for (auto& cp : unicode::code_points(text)) {
        if (!unicode::is_whitespace(cp)) {
            out.push_back(std::move(cp));
        }
    }
    return out;
}

WerResult wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
    const std::size_t n = ref.size();
    const std::size_t m = hyp.size();
    std::vector<std::size_t> d((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
        }
    }

    WerResult r;
    r.reference_length = n;
    std::size_t i = n;
    std::size_t j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            if (ref[i - 1] != hyp[j - 1]) ++r.substitutions;
            --i;
            --j;
        } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
            ++r.deletions;
            --i;
        } else {
            ++r.insertions;
            --j;
        }
    }
    if (n == 0) {
        r.undefined = m > 0;
        r.rate = m > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    } else {
        r.rate = static_cast<double>(r.errors()) / static_cast<double>(n);
    }
    return r;
}

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
    return wer(a, b).errors();
}

std::vector<UtteranceWer> wer_lines(std::string_view reference, std::string_view hypothesis,
                                    TokenMode mode) {
    const auto refs = id_lines(reference);
    const auto hyps = id_lines(hypothesis);
    if (refs.size() != hyps.size()) {
        throw MetricsError(MetricsErrorKind::MisalignedInput,
                           "reference has " + std::to_string(refs.size()) +
                               " lines, hypothesis has " + std::to_string(hyps.size()));
    }
    std::vector<UtteranceWer> rows;
    rows.reserve(refs.size());
    for (std::size_t k = 0; k < refs.size(); ++k) {
        if (refs[k].first != hyps[k].first) {
            throw MetricsError(MetricsErrorKind::MisalignedInput,
                               "id mismatch at entry " + std::to_string(k + 1) + ": '" +
                                   refs[k].first + "' vs '" + hyps[k].first + "'",
                               k + 1);
        }
        const auto r = tokenize(refs[k].second, mode);
        const auto h = tokenize(hyps[k].second, mode);
        rows.push_back({refs[k].first, wer(r, h)});
    }
    return rows;
}

std::vector<UtteranceWer> wer_files(const std::filesystem::path& reference,
                                    const std::filesystem::path& hypothesis, TokenMode mode) {
    return wer_lines(slurp(reference), slurp(hypothesis), mode);
}

std::string wer_csv(std::span<const UtteranceWer> rows) {
    std::string out = "id,rate,S,I,D\n";
    for (const auto& row : rows) {
        out += row.id;
        out += ',';
        if (row.result.undefined) {
            out += "inf";
        } else {
            char buf[32];
            const auto res = std::to_chars(buf, buf + sizeof buf, row.result.rate);
            out.append(buf, res.ptr);
        }
        out += ',' + std::to_string(row.result.substitutions) + ',' +
               std::to_string(row.result.insertions) + ',' + std::to_string(row.result.deletions) +
               '\n';
    }
    return out;
}

}  // namespace diamoe
