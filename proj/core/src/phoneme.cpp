// SPDX-License-Identifier: Apache-2.0
#include "diamoe/phoneme.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "diamoe/unicode.hpp"

namespace diamoe {
namespace {

constexpr std::array<std::pair<std::string_view, SymbolKind>, 5> kKindNames{{
    {"consonant", SymbolKind::Consonant},
    {"vowel", SymbolKind::Vowel},
    {"tone", SymbolKind::Tone},
    {"boundary", SymbolKind::Boundary},
    {"special", SymbolKind::Special},
}};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

std::string_view to_string(SymbolKind kind) {
    for (const auto& [name, k] : kKindNames) {
        if (k == kind) {
            return name;
        }
    }
    return "unknown";
}

std::optional<SymbolKind> parse_symbol_kind(std::string_view name) {
    for (const auto& [n, k] : kKindNames) {
        if (n == name) {
            return k;
        }
    }
    return std::nullopt;
}

void PhonemeInventory::add(std::string text, SymbolKind kind) {
    const auto id = static_cast<SymbolId>(symbols_.size());
    const auto cps = unicode::code_points(text);
    max_code_points_ = std::max(max_code_points_, cps.size());
    index_.emplace(text, id);
    symbols_.push_back(IpaSymbol{std::move(text), kind, id});
}

PhonemeInventory PhonemeInventory::build(std::span<const SymbolSpec> specs) {
    PhonemeInventory inv;
    inv.add(std::string(kPadText), SymbolKind::Special);
    inv.add(std::string(kUnkText), SymbolKind::Special);
    inv.add(std::string(kBoundaryText), SymbolKind::Special);

    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        std::string text = unicode::nfc(spec.text);
        if (text.empty()) {
            throw PhonemeError(PhonemeErrorKind::EmptySymbol,
                               "symbol spec " + std::to_string(i) + " is empty", i);
        }
        if (spec.kind == SymbolKind::Special) {
            throw PhonemeError(PhonemeErrorKind::InvalidSymbol,
                               "kind 'special' is reserved: " + text, i);
        }
        for (const auto& cp : unicode::code_points(text)) {
            if (unicode::is_whitespace(cp)) {
                throw PhonemeError(PhonemeErrorKind::InvalidSymbol,
                                   "symbol contains whitespace: '" + text + "'", i);
            }
        }
        if (inv.index_.contains(text)) {
            throw PhonemeError(PhonemeErrorKind::DuplicateSymbol,
                               "duplicate symbol '" + text + "'", i);
        }
        inv.add(std::move(text), spec.kind);
    }
    return inv;
}

PhonemeInventory PhonemeInventory::parse(std::string_view contents) {
    std::vector<SymbolSpec> specs;
    std::vector<std::size_t> line_of_spec;
    std::istringstream in{std::string(contents)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') {
            continue;
        }
        const auto tab = body.find('\t');
        if (tab == std::string_view::npos) {
            throw PhonemeError(PhonemeErrorKind::MalformedLine,
                               "line " + std::to_string(lineno) + ": expected text<TAB>kind", lineno);
        }
        const auto kind_name = trim(body.substr(tab + 1));
        const auto kind = parse_symbol_kind(kind_name);
        if (!kind) {
            throw PhonemeError(PhonemeErrorKind::MalformedLine,
                               "line " + std::to_string(lineno) + ": unknown kind '" +
                                   std::string(kind_name) + "'",
                               lineno);
        }
        specs.push_back(SymbolSpec{std::string(body.substr(0, tab)), *kind});
        line_of_spec.push_back(lineno);
    }
    try {
        return build(specs);
    } catch (const PhonemeError& e) {
        // Report file line numbers rather than spec indices.
        const std::size_t line_no = e.has_position() ? line_of_spec.at(e.position()) : 0;
        throw PhonemeError(e.kind(), "line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
}

PhonemeInventory PhonemeInventory::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open inventory file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

const IpaSymbol& PhonemeInventory::symbol(SymbolId id) const {
    if (!contains(id)) {
        throw PhonemeError(PhonemeErrorKind::InvalidId, "invalid symbol id " + std::to_string(id), id);
    }
    return symbols_[id];
}

std::optional<SymbolId> PhonemeInventory::find(std::string_view text) const {
    const auto it = index_.find(std::string(text));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::pair<SymbolId, std::size_t>> PhonemeInventory::longest_match(
    std::span<const std::string> code_points, std::size_t start) const {
    const std::size_t available = code_points.size() - std::min(start, code_points.size());
    const std::size_t max_len = std::min(max_code_points_, available);
    std::string candidate;
    for (std::size_t i = 0; i < max_len; ++i) {
        candidate += code_points[start + i];
    }
    // Shrink from the longest candidate until a symbol matches.
    for (std::size_t len = max_len; len > 0; --len) {
        if (const auto id = find(candidate)) {
            return std::make_pair(*id, len);
        }
        candidate.resize(candidate.size() - code_points[start + len - 1].size());
    }
    return std::nullopt;
}

IpaSequence tokenize_ipa(std::string_view raw, const PhonemeInventory& inventory, Policy policy) {
    const auto cps = unicode::code_points(unicode::nfc(raw));
    IpaSequence seq;
    std::size_t pos = 0;
    while (pos < cps.size()) {
        if (unicode::is_whitespace(cps[pos])) {
            ++pos;
            continue;
        }
        if (const auto match = inventory.longest_match(cps, pos)) {
            seq.ids.push_back(match->first);
            pos += match->second;
            continue;
        }
        if (policy == Policy::Strict) {
            throw PhonemeError(PhonemeErrorKind::UnknownSymbol,
                               "no inventory symbol matches '" + cps[pos] + "' at position " +
                                   std::to_string(pos),
                               pos);
        }
        seq.ids.push_back(PhonemeInventory::kUnk);
        ++pos;
    }
    return seq;
}

std::string detokenize(const IpaSequence& seq, const PhonemeInventory& inventory) {
    std::string out;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += inventory.symbol(seq.ids[i]).text;
    }
    return out;
}

}  // namespace diamoe
