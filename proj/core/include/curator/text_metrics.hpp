#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace curator {

/// Transforms applied before splitting text into words. The default profile
/// only applies canonical composition (NFC), so WER = 0 means the two texts
/// are the same word sequence up to Unicode canonical equivalence.
struct NormalizerConfig {
    bool strip_diacritics = false;
    bool unify_alef_forms = false;
    bool remove_punctuation = false;
    bool unicode_normalize = true;

    friend bool operator==(const NormalizerConfig&, const NormalizerConfig&) = default;
};

/// True for Arabic combining marks removed by strip_diacritics (harakat,
/// tanween, shadda, sukun, superscript alef, Quranic annotation marks).
bool is_arabic_diacritic(char32_t cp);

/// Applies the configured transforms and splits on Unicode white space.
/// Never yields empty tokens. Invalid UTF-8 sequences become U+FFFD.
std::vector<std::string> normalize_text(std::string_view text, const NormalizerConfig& cfg);

struct EditCounts {
    std::size_t substitutions = 0;
    std::size_t deletions = 0;
    std::size_t insertions = 0;
    std::size_t reference_length = 0;

    std::size_t errors() const noexcept { return substitutions + deletions + insertions; }

    EditCounts& operator+=(const EditCounts& o) {
        substitutions += o.substitutions;
        deletions += o.deletions;
        insertions += o.insertions;
        reference_length += o.reference_length;
        return *this;
    }
    friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

/// Levenshtein alignment over words with unit costs. The backtrace prefers a
/// substitution (or match), then a deletion, then an insertion when several
/// moves reach the same minimum, so the S/D/I split is deterministic.
EditCounts word_edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);

/// errors / reference_length, with the empty-reference convention: 0 when the
/// hypothesis is also empty, +infinity otherwise.
double error_rate(const EditCounts& counts);

double wer(std::string_view ref, std::string_view hyp, const NormalizerConfig& cfg = {});

}  // namespace curator
