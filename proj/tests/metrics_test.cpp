// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "diamoe/metrics.hpp"
#include "oracles.hpp"

using namespace diamoe;

namespace {

std::vector<std::string> words(std::string_view s) { return tokenize(s, TokenMode::Word); }

/// Every sequence over {a, b, c} of length <= max_len.
std::vector<std::vector<std::string>> all_sequences(std::size_t max_len) {
    std::vector<std::vector<std::string>> out{{}};
    std::size_t begin = 0;
    for (std::size_t len = 1; len <= max_len; ++len) {
        const std::size_t end = out.size();
        for (std::size_t i = begin; i < end; ++i) {
            for (const char* s : {"a", "b", "c"}) {
                auto next = out[i];
                next.emplace_back(s);
                out.push_back(std::move(next));
            }
        }
        begin = end;
    }
    return out;
}

}  // namespace

TEST(Tokenize, Modes) {
    EXPECT_EQ(words("  the\tcat　sat \n"), (std::vector<std::string>{"the", "cat", "sat"}));
    EXPECT_EQ(tokenize("你 好吗", TokenMode::Character), (std::vector<std::string>{"你", "好", "吗"}));
    EXPECT_TRUE(words("   ").empty());
}

TEST(Wer, Policies) {
    const auto empty = std::vector<std::string>{};
    const auto r0 = wer(empty, empty);
    EXPECT_EQ(r0.rate, 0.0);
    EXPECT_FALSE(r0.undefined);
    const auto hyp = words("a b");
    const auto r1 = wer(empty, hyp);
    EXPECT_TRUE(r1.undefined);
    EXPECT_TRUE(std::isinf(r1.rate));
    EXPECT_EQ(r1.insertions, 2u);
    const auto ref = words("a b c d");
    const auto r2 = wer(ref, empty);
    EXPECT_EQ(r2.rate, 1.0);
    EXPECT_EQ(r2.deletions, 4u);
}

TEST(Wer, BacktracePreference) {
    // ref "a b", hyp "b": delete a (cost 1); no substitution path is equally short.
    const auto r = wer(words("a b"), words("b"));
    EXPECT_EQ(r.deletions, 1u);
    EXPECT_EQ(r.substitutions, 0u);
    // ref "a", hyp "b c": either S+I; substitution wins over deletion/insertion pairs.
    const auto s = wer(words("a"), words("b c"));
    EXPECT_EQ(s.substitutions, 1u);
    EXPECT_EQ(s.insertions, 1u);
    EXPECT_EQ(s.deletions, 0u);
    const auto t = wer(words("the cat sat"), words("the bat sat down"));
    EXPECT_EQ(t.substitutions, 1u);
    EXPECT_EQ(t.insertions, 1u);
    EXPECT_DOUBLE_EQ(t.rate, 2.0 / 3.0);
}

TEST(Wer, ExhaustiveAgainstOracle) {
    const auto seqs = all_sequences(5);
    for (const auto& a : seqs) {
        for (const auto& b : seqs) {
            const std::size_t expected = oracle::edit_distance(a, b);
            ASSERT_EQ(edit_distance(a, b), expected);
            const auto r = wer(a, b);
            ASSERT_EQ(r.errors(), expected);
            ASSERT_EQ(r.reference_length, a.size());
            // Alignment consistency: ref = S + D + matches, hyp = S + I + matches.
            ASSERT_EQ(a.size() + r.insertions, b.size() + r.deletions);
            if (!a.empty()) ASSERT_DOUBLE_EQ(r.rate, static_cast<double>(expected) / static_cast<double>(a.size()));
        }
    }
}

TEST(Wer, TriangleInequality) {
    const auto seqs = all_sequences(3);
    for (std::size_t i = 0; i < seqs.size(); i += 3) {
        for (std::size_t j = 0; j < seqs.size(); j += 2) {
            for (std::size_t k = 0; k < seqs.size(); k += 5) {
                ASSERT_LE(edit_distance(seqs[i], seqs[k]),
                          edit_distance(seqs[i], seqs[j]) + edit_distance(seqs[j], seqs[k]));
            }
        }
    }
}

TEST(Wer, LinesAndCsv) {
    const auto rows = wer_lines("u1\tthe cat\nu2\t\n", "u1\tthe bat\nu2\tnoise\n", TokenMode::Word);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(wer_csv(rows), "id,rate,S,I,D\nu1,0.5,1,0,0\nu2,inf,0,1,0\n");
    try {
        wer_lines("u1\ta\n", "u2\ta\n", TokenMode::Word);
        FAIL();
    } catch (const MetricsError& e) {
        EXPECT_EQ(e.kind(), MetricsErrorKind::MisalignedInput);
    }
    EXPECT_THROW(wer_lines("u1\ta\nu2\tb\n", "u1\ta\n", TokenMode::Word), MetricsError);
    EXPECT_THROW(wer_lines("\tempty id\n", "\tempty id\n", TokenMode::Word), MetricsError);
    // A bare id is an empty utterance.
    EXPECT_EQ(wer_lines("solo\n", "solo\n", TokenMode::Word).at(0).result.reference_length, 0u);
    const auto chars = wer_lines("c\t你好\n", "c\t你号\n", TokenMode::Character);
    EXPECT_DOUBLE_EQ(chars[0].result.rate, 0.5);
}

TEST(Wer, Files) {
    const auto dir = std::filesystem::temp_directory_path();
    std::ofstream(dir / "diamoe_ref.txt") << "x\ta b c\n";
    std::ofstream(dir / "diamoe_hyp.txt") << "x\ta c\n";
    const auto rows = wer_files(dir / "diamoe_ref.txt", dir / "diamoe_hyp.txt", TokenMode::Word);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].result.deletions, 1u);
    EXPECT_THROW(wer_files(dir / "nope_ref.txt", dir / "nope_hyp.txt", TokenMode::Word), IoError);
}
