#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "curator/dialect.hpp"

namespace curator {

using TokenId = std::int32_t;

inline constexpr std::string_view kBeginText = "[bots]";
inline constexpr std::string_view kEndText = "[eots]";
inline constexpr std::string_view kBeginAudio = "[boas]";
inline constexpr std::string_view kEndAudio = "[eoas]";

/// "[ar]", "[en]", ...
std::string language_token(std::string_view language);
/// "[dialect:EGY]". The bracketed form cannot be produced by BPE merges of
/// ordinary text, so it never collides with a text token.
std::string dialect_token(const DialectLabel& label);

/// Dense, injective token-string -> id map. Ids are positions in the token
/// list and are never renumbered.
class Vocabulary {
public:
    Vocabulary() = default;
    /// Throws ValidationError on duplicates.
    static Vocabulary from_tokens(std::vector<std::string> tokens);
    /// One token per line; a line is the token verbatim (no trimming).
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    std::optional<TokenId> find(std::string_view token) const;
    const std::string& token(TokenId id) const;
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// Appends with the next free id. Throws ValidationError if present.
    TokenId append(std::string token);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

/// Appends one dialect token per label, in label order, after every existing
/// id. Throws ValidationError for duplicate labels or a token already present.
Vocabulary extend_vocabulary(const Vocabulary& base, std::span<const DialectLabel> labels);

/// Writes the extended vocabulary and a `<path>.meta.json` sidecar recording
/// base size, extended size and the appended tokens.
void save_extended_vocabulary(const std::filesystem::path& path, const Vocabulary& extended, std::size_t base_size);

struct TextPart {
    std::string language;
    std::optional<DialectLabel> dialect;
    std::vector<TokenId> text;

    friend bool operator==(const TextPart&, const TextPart&) = default;
};

struct AudioPart {
    std::vector<std::int32_t> codes;

    friend bool operator==(const AudioPart&, const AudioPart&) = default;
};

/// s1..sk [bots] [lang] ([dialect]) t1..tn [eots] ([boas] a1..al [eoas])
struct TokenSequence {
    std::size_t speaker_slots = 0;
    TextPart text;
    std::optional<AudioPart> audio;

    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Which embedding table a flat id indexes. Speaker slots are opaque
/// placeholders numbered 0..k-1; text ids index the Vocabulary; audio ids are
/// codebook entries.
enum class Stream : std::uint8_t { speaker = 0, text = 1, audio = 2 };

struct FlatToken {
    Stream stream = Stream::text;
    std::int32_t id = 0;

    friend bool operator==(const FlatToken&, const FlatToken&) = default;
};

/// Little-endian (stream byte, int32 id) pairs; used to compare sequences
/// byte for byte.
std::string encode_bytes(std::span<const FlatToken> tokens);

/// Languages with a "[code]" token in the multilingual base vocabulary.
const std::vector<std::string>& default_languages();

/// Builds and parses sequences against one vocabulary. Marker, language and
/// dialect ids are resolved once at construction.
class SequenceCodec {
public:
    /// Throws ValidationError if the vocabulary lacks any of the four markers.
    explicit SequenceCodec(const Vocabulary& vocab, const DialectCatalog& catalog = DialectCatalog::default_catalog(),
                           std::span<const std::string> languages = default_languages());

    /// Throws ValidationError for an unknown language or dialect, or a text
    /// id that is out of range or reserved.
    TokenSequence build_text_sequence(std::span<const TokenId> text_ids, std::string_view language,
                                      const std::optional<DialectLabel>& dialect = std::nullopt) const;

    /// Throws ValidationError when speaker_slots == 0, audio is empty, or the
    /// text sequence already has audio.
    TokenSequence build_training_sequence(std::size_t speaker_slots, const TokenSequence& text_sequence,
                                          std::span<const std::int32_t> audio_codes) const;

    std::vector<FlatToken> flatten(const TokenSequence& sequence) const;

    /// Inverse of flatten. Throws ValidationError naming the position and the
    /// first violated rule ("marker order", "dialect position", ...).
    TokenSequence parse(std::span<const FlatToken> flat) const;

    bool has_dialect_tokens() const noexcept { return !dialect_ids_.empty(); }
    const Vocabulary& vocabulary() const noexcept { return *vocab_; }

private:
    bool reserved(TokenId id) const;

    const Vocabulary* vocab_;
    TokenId bots_, eots_, boas_, eoas_;
    std::unordered_map<std::string, TokenId> language_ids_;
    std::unordered_map<TokenId, std::string> language_by_id_;
    std::unordered_map<std::string, TokenId> dialect_ids_;
    std::unordered_map<TokenId, DialectLabel> dialect_by_id_;
};

/// Character-level stand-in for a BPE tokenizer: one token per code point,
/// spaces map to "[SPACE]" when present, unknown characters to "[UNK]".
/// Throws ValidationError for an unknown character if there is no "[UNK]".
std::vector<TokenId> char_tokenize(std::string_view text, const Vocabulary& vocab);

struct EmbeddingInitSpec {
    std::size_t row_count = 0;
    std::size_t dim = 0;
    std::uint64_t seed = 0;
};

struct EmbeddingRows {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<float> values;  // row-major

    friend bool operator==(const EmbeddingRows&, const EmbeddingRows&) = default;
};

/// Standard-normal draws for the rows of newly added tokens. Throws
/// ValidationError when either dimension is zero.
EmbeddingRows init_embedding_rows(const EmbeddingInitSpec& spec);

}  // namespace curator
