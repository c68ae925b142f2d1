#include "curator/text_metrics.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <limits>

#include "curator/error.hpp"

namespace curator {

bool is_arabic_diacritic(char32_t cp) {
    return (cp >= 0x0610 && cp <= 0x061A) || (cp >= 0x064B && cp <= 0x065F) || cp == 0x0670 ||
           (cp >= 0x06D6 && cp <= 0x06DC) || (cp >= 0x06DF && cp <= 0x06E4) ||
           (cp >= 0x06E7 && cp <= 0x06E8) || (cp >= 0x06EA && cp <= 0x06ED) ||
           (cp >= 0x08D3 && cp <= 0x08FF && cp != 0x08E2);
}

namespace {

char32_t unify_alef(char32_t cp) {
    switch (cp) {
        case 0x0622:  // alef with madda above
        case 0x0623:  // alef with hamza above
        case 0x0625:  // alef with hamza below
        case 0x0671:  // alef wasla
            return 0x0627;
        default:
            return cp;
    }
}

std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    const auto* p = reinterpret_cast<const uint8_t*>(s.data());
    int32_t i = 0;
    const auto n = static_cast<int32_t>(s.size());
    while (i < n) {
        UChar32 c;
        U8_NEXT(p, i, n, c);
        out.push_back(c < 0 ? U'\uFFFD' : static_cast<char32_t>(c));
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    char buf[U8_MAX_LENGTH];
    int32_t len = 0;
    UBool err = false;
    U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, U8_MAX_LENGTH, static_cast<UChar32>(cp), err);
    if (err) {
        out += "\xEF\xBF\xBD";
        return;
    }
    out.append(buf, static_cast<std::size_t>(len));
}

std::string nfc(std::string_view text) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error(std::string("ICU NFC unavailable: ") + u_errorName(status));
    icu::UnicodeString src = icu::UnicodeString::fromUTF8(
        icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    icu::UnicodeString dst = norm->normalize(src, status);
    if (U_FAILURE(status)) throw Error(std::string("NFC normalization failed: ") + u_errorName(status));
    std::string out;
    dst.toUTF8String(out);
    return out;
}

}  // namespace

std::vector<std::string> normalize_text(std::string_view text, const NormalizerConfig& cfg) {
    std::string composed;
    if (cfg.unicode_normalize) {
        composed = nfc(text);
        text = composed;
    }
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    for (char32_t cp : decode_utf8(text)) {
        if (u_isUWhiteSpace(static_cast<UChar32>(cp))) {
            flush();
            continue;
        }
        if (cfg.strip_diacritics && is_arabic_diacritic(cp)) continue;
        if (cfg.remove_punctuation && u_ispunct(static_cast<UChar32>(cp))) continue;
        if (cfg.unify_alef_forms) cp = unify_alef(cp);
        append_utf8(current, cp);
    }
    flush();
    return tokens;
}

EditCounts word_edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    const std::size_t w = m + 1;
    std::vector<std::size_t> d((n + 1) * w);
    for (std::size_t i = 0; i <= n; ++i) d[i * w] = i;
    for (std::size_t j = 0; j <= m; ++j) d[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t diag = d[(i - 1) * w + j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            const std::size_t up = d[(i - 1) * w + j] + 1;
            const std::size_t left = d[i * w + j - 1] + 1;
            d[i * w + j] = std::min({diag, up, left});
        }
    }

    EditCounts c;
    c.reference_length = n;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        const std::size_t here = d[i * w + j];
        if (i > 0 && j > 0) {
            const bool same = ref[i - 1] == hyp[j - 1];
            if (d[(i - 1) * w + j - 1] + (same ? 0 : 1) == here) {
                if (!same) ++c.substitutions;
                --i;
                --j;
                continue;
            }
        }
        if (i > 0 && d[(i - 1) * w + j] + 1 == here) {
            ++c.deletions;
            --i;
            continue;
        }
        ++c.insertions;
        --j;
    }
    return c;
}

double error_rate(const EditCounts& counts) {
    if (counts.reference_length == 0) {
        return counts.insertions == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return static_cast<double>(counts.errors()) / static_cast<double>(counts.reference_length);
}

double wer(std::string_view ref, std::string_view hyp, const NormalizerConfig& cfg) {
    const auto r = normalize_text(ref, cfg);
    const auto h = normalize_text(hyp, cfg);
    return error_rate(word_edit_distance(r, h));
}

}  // namespace curator
