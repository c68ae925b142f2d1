#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "curator/error.hpp"
#include "curator/text_metrics.hpp"

using namespace curator;

namespace {

using Tokens = std::vector<std::string>;

// Exhaustive search: walk every alignment of ref against hyp (each step is a
// match/substitution, a deletion or an insertion) with no memoization and
// keep the cheapest.
std::size_t exhaustive_distance(const Tokens& r, const Tokens& h, std::size_t i = 0, std::size_t j = 0) {
    if (i == r.size()) return h.size() - j;
    if (j == h.size()) return r.size() - i;
    const std::size_t diag = (r[i] == h[j] ? 0 : 1) + exhaustive_distance(r, h, i + 1, j + 1);
    const std::size_t del = 1 + exhaustive_distance(r, h, i + 1, j);
    const std::size_t ins = 1 + exhaustive_distance(r, h, i, j + 1);
    return std::min({diag, del, ins});
}

Tokens random_tokens(std::mt19937_64& rng, std::size_t max_len = 8) {
    static const Tokens alphabet = {"a", "b", "c", "d"};
    Tokens t(rng() % (max_len + 1));
    for (auto& s : t) s = alphabet[rng() % alphabet.size()];
    return t;
}

std::u32string decode(const std::string& s) {
    std::u32string out;
    for (std::size_t i = 0; i < s.size();) {
        const unsigned char c = s[i];
        const int len = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
        char32_t cp = len == 1 ? c : c & (0x7F >> len);
        for (int k = 1; k < len; ++k) cp = (cp << 6) | (s[i + k] & 0x3F);
        out.push_back(cp);
        i += len;
    }
    return out;
}

}  // namespace

TEST(Normalize, CollapsesWhitespace) {
    EXPECT_EQ(normalize_text("a b  c", {}), (Tokens{"a", "b", "c"}));
    EXPECT_EQ(normalize_text("  a\tb\n", {}), (Tokens{"a", "b"}));
    EXPECT_TRUE(normalize_text("", {}).empty());
    EXPECT_TRUE(normalize_text("   ", {}).empty());
}

TEST(Normalize, StripDiacriticsRemovesCombiningMarks) {
    NormalizerConfig cfg;
    cfg.strip_diacritics = true;
    const std::string text = "ٱلْحَمْدُ لِلَّهِ رَبِّ ٱلْعَٰلَمِينَ";
    const auto tokens = normalize_text(text, cfg);
    ASSERT_EQ(tokens.size(), 4u);
    for (const auto& t : tokens) {
        for (char32_t cp : decode(t)) {
            EXPECT_FALSE(cp >= 0x064B && cp <= 0x065F) << std::hex << static_cast<unsigned>(cp);
            EXPECT_NE(cp, 0x0670u);
        }
    }
    EXPECT_EQ(normalize_text("كَتَبَ", cfg), (Tokens{"كتب"}));
    // Without the flag the marks stay.
    EXPECT_EQ(normalize_text("كَتَبَ", {}), (Tokens{"كَتَبَ"}));
}

TEST(Normalize, DiacriticPredicate) {
    for (char32_t cp : {0x064Bu, 0x0650u, 0x0652u, 0x0670u, 0x0610u, 0x06D6u}) EXPECT_TRUE(is_arabic_diacritic(cp));
    for (char32_t cp : {0x0627u, 0x0628u, 0x0041u, 0x06D5u, 0x08E2u}) EXPECT_FALSE(is_arabic_diacritic(cp));
}

TEST(Normalize, AlefUnification) {
    NormalizerConfig cfg;
    cfg.unify_alef_forms = true;
    EXPECT_EQ(normalize_text("أحمد إلى آخر", cfg), (Tokens{"احمد", "الى", "اخر"}));
}

TEST(Normalize, PunctuationRemoval) {
    NormalizerConfig cfg;
    cfg.remove_punctuation = true;
    EXPECT_EQ(normalize_text("مرحبا، كيف الحال؟ hi!", cfg), (Tokens{"مرحبا", "كيف", "الحال", "hi"}));
    EXPECT_EQ(normalize_text("؟ ،", cfg), Tokens{});
}

TEST(Normalize, NfcMakesCanonicalEquivalentsEqual) {
    const std::string composed = "\u0622";            // alef with madda above
    const std::string decomposed = "\u0627\u0653";    // alef + combining madda
    EXPECT_EQ(wer(composed, decomposed), 0.0);
    NormalizerConfig raw;
    raw.unicode_normalize = false;
    EXPECT_EQ(wer(composed, decomposed, raw), 1.0);
}

TEST(Normalize, InvalidUtf8BecomesReplacementCharacter) {
    const auto t = normalize_text(std::string("a\xff" "b"), {});
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0], "a\uFFFDb");
}

TEST(EditDistance, Identity) {
    const Tokens a{"a", "b", "c"};
    EXPECT_EQ(word_edit_distance(a, a), (EditCounts{0, 0, 0, 3}));
}

TEST(EditDistance, HandRunTable) {
    const Tokens ref{"a", "b", "c"}, hyp{"a", "x", "c", "d"};
    EXPECT_EQ(word_edit_distance(ref, hyp), (EditCounts{1, 0, 1, 3}));
}

TEST(EditDistance, PureInsertionAndDeletion) {
    EXPECT_EQ(word_edit_distance(Tokens{}, Tokens{"a"}), (EditCounts{0, 0, 1, 0}));
    EXPECT_EQ(word_edit_distance(Tokens{"a", "b"}, Tokens{}), (EditCounts{0, 2, 0, 2}));
    EXPECT_EQ(word_edit_distance(Tokens{}, Tokens{}), (EditCounts{0, 0, 0, 0}));
}

TEST(EditDistance, TieBreakPrefersSubstitution) {
    // Either two substitutions or delete-a/match-b/insert-c; both cost 2.
    EXPECT_EQ(word_edit_distance(Tokens{"a", "b"}, Tokens{"b", "c"}), (EditCounts{2, 0, 0, 2}));
}

TEST(Wer, Examples) {
    EXPECT_EQ(wer("a b c", "a b c"), 0.0);
    EXPECT_NEAR(wer("a b c", "a x c d"), 2.0 / 3.0, 1e-12);
    EXPECT_TRUE(std::isinf(wer("", "a")));
    EXPECT_GT(wer("", "a"), 0.0);
    EXPECT_EQ(wer("", ""), 0.0);
    EXPECT_DOUBLE_EQ(wer("a b c d", "a b x d"), 0.25);
}

TEST(WerOracle, DpEqualsExhaustiveSearch) {
    std::mt19937_64 rng(0x5eed);
    const auto start = std::chrono::steady_clock::now();
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1500; ++trial) {
        const auto r = random_tokens(rng), h = random_tokens(rng);
        const auto c = word_edit_distance(r, h);
        if (c.errors() != exhaustive_distance(r, h)) ++mismatches;
        // Counts describe a real alignment.
        ASSERT_EQ(c.reference_length, r.size());
        ASSERT_LE(c.substitutions + c.deletions, r.size());
        ASSERT_EQ(r.size() - c.deletions + c.insertions, h.size());
    }
    EXPECT_EQ(mismatches, 0u);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
}

TEST(WerProperty, SwapExchangesDeletionsAndInsertions) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto a = random_tokens(rng), b = random_tokens(rng);
        const auto ab = word_edit_distance(a, b), ba = word_edit_distance(b, a);
        ASSERT_EQ(ab.errors(), ba.errors());
        if (ab.substitutions == ba.substitutions) {
            ASSERT_EQ(ab.deletions, ba.insertions);
            ASSERT_EQ(ab.insertions, ba.deletions);
        }
    }
}

TEST(WerProperty, TriangleInequality) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto a = random_tokens(rng), b = random_tokens(rng), c = random_tokens(rng);
        ASSERT_LE(word_edit_distance(a, c).errors(),
                  word_edit_distance(a, b).errors() + word_edit_distance(b, c).errors());
    }
}

TEST(WerProperty, ZeroIffTokensEqual) {
    std::mt19937_64 rng(29);
    const std::vector<std::string> words = {"كتب", "a", "b", "قلم", "  ", "\t"};
    for (int trial = 0; trial < 2000; ++trial) {
        std::string r, h;
        for (auto n = rng() % 5; n > 0; --n) r += words[rng() % words.size()] + " ";
        for (auto n = rng() % 5; n > 0; --n) h += words[rng() % words.size()] + " ";
        const bool equal = normalize_text(r, {}) == normalize_text(h, {});
        ASSERT_EQ(wer(r, h) == 0.0, equal) << r << " | " << h;
    }
}

TEST(ErrorRate, PooledCountsDivideTotals) {
    EditCounts a{1, 0, 0, 4}, b{0, 1, 1, 6};
    a += b;
    EXPECT_DOUBLE_EQ(error_rate(a), 3.0 / 10.0);
}
