// SPDX-License-Identifier: Apache-2.0
#include "diamoe/lexicon.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "diamoe/unicode.hpp"

namespace diamoe {
namespace {

std::string read_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(std::string("cannot open ") + what + ": " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab - start));
        if (tab == std::string_view::npos) {
            break;
        }
        start = tab + 1;
    }
    return fields;
}

std::string_view strip_cr(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) {
        s.remove_suffix(1);
    }
    return s;
}

bool is_blank_or_comment(std::string_view line) {
    const auto first = line.find_first_not_of(" \t");
    return first == std::string_view::npos || line[first] == '#';
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    Int value{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        return std::nullopt;
    }
    return value;
}

LexiconError malformed(std::size_t lineno, const std::string& why) {
    return LexiconError(LexiconErrorKind::MalformedLine,
                        "line " + std::to_string(lineno) + ": " + why, lineno);
}

}  // namespace

DialectRegistry::DialectRegistry(std::vector<std::string> names) : names_(std::move(names)) {}

DialectRegistry DialectRegistry::parse(std::string_view contents) {
    std::map<DialectId, std::string> by_id;
    std::istringstream in{std::string(contents)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto line = strip_cr(raw);
        if (is_blank_or_comment(line)) {
            continue;
        }
        const auto fields = split_tabs(line);
        if (fields.size() != 2 || fields[1].empty()) {
            throw malformed(lineno, "expected id<TAB>name");
        }
        const auto id = parse_int<DialectId>(fields[0]);
        if (!id) {
            throw malformed(lineno, "bad dialect id '" + std::string(fields[0]) + "'");
        }
        if (!by_id.emplace(*id, std::string(fields[1])).second) {
            throw malformed(lineno, "duplicate dialect id " + std::to_string(*id));
        }
    }
    std::vector<std::string> names;
    for (const auto& [id, name] : by_id) {
        if (id != names.size()) {
            throw LexiconError(LexiconErrorKind::BadDialect,
                               "dialect ids must be dense 0..K-1; missing " +
                                   std::to_string(names.size()));
        }
        names.push_back(name);
    }
    return DialectRegistry(std::move(names));
}

DialectRegistry DialectRegistry::load(const std::filesystem::path& path) {
    return parse(read_file(path, "dialect registry"));
}

const std::string& DialectRegistry::name(DialectId id) const {
    if (id >= names_.size()) {
        throw LexiconError(LexiconErrorKind::BadDialect, "unknown dialect id " + std::to_string(id), id);
    }
    return names_[id];
}

std::optional<DialectId> DialectRegistry::find(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
        return std::nullopt;
    }
    return static_cast<DialectId>(it - names_.begin());
}

Lexicon::Lexicon(std::optional<std::size_t> dialect_count) : fixed_dialect_count_(dialect_count) {
    if (fixed_dialect_count_) {
        dialect_count_ = *fixed_dialect_count_;
        tries_.resize(dialect_count_);
    }
}

void Lexicon::ensure_dialect(DialectId dialect) {
    if (fixed_dialect_count_) {
        if (dialect >= *fixed_dialect_count_) {
            throw LexiconError(LexiconErrorKind::BadDialect,
                               "dialect id " + std::to_string(dialect) + " outside registry of size " +
                                   std::to_string(*fixed_dialect_count_),
                               dialect);
        }
        return;
    }
    if (dialect >= tries_.size()) {
        tries_.resize(static_cast<std::size_t>(dialect) + 1);
        dialect_count_ = tries_.size();
    }
}

void Lexicon::add(LexiconEntry entry, const PhonemeInventory& inventory) {
    entry.grapheme = unicode::nfc(entry.grapheme);
    if (entry.grapheme.empty()) {
        throw LexiconError(LexiconErrorKind::MalformedLine, "empty grapheme");
    }
    const auto cps = unicode::code_points(entry.grapheme);
    for (const auto& cp : cps) {
        if (unicode::is_whitespace(cp)) {
            throw LexiconError(LexiconErrorKind::MalformedLine,
                               "grapheme contains whitespace: '" + entry.grapheme + "'");
        }
    }
    if (entry.pron.empty()) {
        throw LexiconError(LexiconErrorKind::MalformedLine,
                           "empty pronunciation for '" + entry.grapheme + "'");
    }
    entry.pron_ids.clear();
    for (auto& symbol : entry.pron) {
        symbol = unicode::nfc(symbol);
        const auto id = inventory.find(symbol);
        if (!id || *id == PhonemeInventory::kPad || *id == PhonemeInventory::kUnk) {
            throw LexiconError(LexiconErrorKind::UnknownIpaSymbol,
                               "unknown IPA symbol '" + symbol + "' in pronunciation of '" +
                                   entry.grapheme + "'");
        }
        entry.pron_ids.push_back(*id);
    }
    ensure_dialect(entry.dialect);

    Trie& trie = tries_[entry.dialect];
    std::size_t node = 0;
    for (const auto& cp : cps) {
        auto it = trie.nodes[node].children.find(cp);
        if (it == trie.nodes[node].children.end()) {
            trie.nodes.emplace_back();
            it = trie.nodes[node].children.emplace(cp, trie.nodes.size() - 1).first;
        }
        node = it->second;
    }
    auto& slot = trie.nodes[node].entries;
    for (const auto idx : slot) {
        if (entries_[idx].priority == entry.priority) {
            throw LexiconError(LexiconErrorKind::DuplicatePriority,
                               "duplicate priority " + std::to_string(entry.priority) + " for '" +
                                   entry.grapheme + "' in dialect " + std::to_string(entry.dialect));
        }
    }
    entries_.push_back(std::move(entry));
    slot.push_back(entries_.size() - 1);
    std::sort(slot.begin(), slot.end(), [this](std::size_t a, std::size_t b) {
        return entries_[a].priority > entries_[b].priority;
    });
}

Lexicon Lexicon::parse(std::string_view contents, const PhonemeInventory& inventory,
                       std::optional<std::size_t> dialect_count) {
    Lexicon lex(dialect_count);
    std::istringstream in{std::string(contents)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto line = strip_cr(raw);
        if (is_blank_or_comment(line)) {
            continue;
        }
        const auto fields = split_tabs(line);
        if (fields.size() < 3 || fields.size() > 4) {
            throw malformed(lineno, "expected grapheme<TAB>dialect<TAB>pron[<TAB>priority]");
        }
        LexiconEntry entry;
        entry.grapheme = std::string(fields[0]);
        const auto dialect = parse_int<DialectId>(fields[1]);
        if (!dialect) {
            throw malformed(lineno, "bad dialect id '" + std::string(fields[1]) + "'");
        }
        entry.dialect = *dialect;
        entry.pron = unicode::split_whitespace(fields[2]);
        if (fields.size() == 4 && !fields[3].empty()) {
            const auto priority = parse_int<int>(fields[3]);
            if (!priority) {
                throw malformed(lineno, "bad priority '" + std::string(fields[3]) + "'");
            }
            entry.priority = *priority;
        }
        try {
            lex.add(std::move(entry), inventory);
        } catch (const LexiconError& e) {
            throw LexiconError(e.kind(), "line " + std::to_string(lineno) + ": " + e.what(), lineno);
        }
    }
    return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path, const PhonemeInventory& inventory,
                      std::optional<std::size_t> dialect_count) {
    return parse(read_file(path, "lexicon"), inventory, dialect_count);
}

std::vector<const LexiconEntry*> Lexicon::lookup(DialectId dialect, std::string_view grapheme) const {
    std::vector<const LexiconEntry*> out;
    if (dialect >= tries_.size()) {
        return out;
    }
    const Trie& trie = tries_[dialect];
    std::size_t node = 0;
    for (const auto& cp : unicode::code_points(unicode::nfc(grapheme))) {
        const auto it = trie.nodes[node].children.find(cp);
        if (it == trie.nodes[node].children.end()) {
            return out;
        }
        node = it->second;
    }
    for (const auto idx : trie.nodes[node].entries) {
        out.push_back(&entries_[idx]);
    }
    return out;
}

std::optional<Lexicon::Match> Lexicon::longest_match(DialectId dialect,
                                                      std::span<const std::string> code_points,
                                                      std::size_t start) const {
    if (dialect >= tries_.size()) {
        return std::nullopt;
    }
    const Trie& trie = tries_[dialect];
    std::optional<Match> best;
    std::size_t node = 0;
    for (std::size_t pos = start; pos < code_points.size(); ++pos) {
        const auto it = trie.nodes[node].children.find(code_points[pos]);
        if (it == trie.nodes[node].children.end()) {
            break;
        }
        node = it->second;
        const auto& here = trie.nodes[node].entries;
        if (!here.empty()) {
            best = Match{&entries_[here.front()], pos - start + 1};
        }
    }
    return best;
}

IpaSequence g2p(std::string_view text, DialectId dialect, const Lexicon& lexicon,
                const PhonemeInventory& inventory, Policy policy) {
    if (dialect >= lexicon.dialect_count()) {
        throw LexiconError(LexiconErrorKind::BadDialect,
                           "dialect " + std::to_string(dialect) + " not in lexicon (K=" +
                               std::to_string(lexicon.dialect_count()) + ")",
                           dialect);
    }
    const auto cps = unicode::code_points(unicode::nfc(text));
    IpaSequence seq;
    bool first_unit = true;
    std::size_t pos = 0;
    while (pos < cps.size()) {
        if (unicode::is_whitespace(cps[pos])) {
            ++pos;
            continue;
        }
        const auto match = lexicon.longest_match(dialect, cps, pos);
        if (!match && policy == Policy::Strict) {
            throw LexiconError(LexiconErrorKind::NoPronunciation,
                               "no pronunciation for '" + cps[pos] + "' at position " +
                                   std::to_string(pos),
                               pos);
        }
        if (!first_unit) {
            seq.ids.push_back(PhonemeInventory::kBoundary);
        }
        first_unit = false;
        if (match) {
            for (const auto& symbol : match->entry->pron) {
                const auto id = inventory.find(symbol);
                if (!id) {
                    throw LexiconError(LexiconErrorKind::UnknownIpaSymbol,
                                       "lexicon symbol '" + symbol + "' missing from inventory");
                }
                seq.ids.push_back(*id);
            }
            pos += match->length;
        } else {
            seq.ids.push_back(PhonemeInventory::kUnk);
            ++pos;
        }
    }
    return seq;
}

}  // namespace diamoe
