#include "curator/sequence.hpp"

#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "curator/error.hpp"
#include "curator/file_util.hpp"

namespace curator {

std::string language_token(std::string_view language) { return "[" + std::string(language) + "]"; }

std::string dialect_token(const DialectLabel& label) { return "[dialect:" + label.code() + "]"; }

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    v.tokens_.reserve(tokens.size());
    for (auto& t : tokens) v.append(std::move(t));
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open vocabulary " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(std::move(line));
    }
    return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::append(std::string token) {
    if (token.find('\n') != std::string::npos) throw ValidationError("token contains a newline");
    const auto id = static_cast<TokenId>(tokens_.size());
    auto [it, inserted] = ids_.emplace(token, id);
    if (!inserted) throw ValidationError("token '" + token + "' already in vocabulary at id " + std::to_string(it->second));
    tokens_.push_back(std::move(token));
    return id;
}

Vocabulary extend_vocabulary(const Vocabulary& base, std::span<const DialectLabel> labels) {
    std::set<std::string> seen;
    for (const auto& l : labels) {
        if (!seen.insert(l.code()).second) throw ValidationError("duplicate dialect label '" + l.code() + "'");
    }
    Vocabulary extended = base;
    for (const auto& l : labels) extended.append(dialect_token(l));
    return extended;
}

void save_extended_vocabulary(const std::filesystem::path& path, const Vocabulary& extended, std::size_t base_size) {
    extended.save(path);
    std::vector<std::string> added(extended.tokens().begin() + static_cast<std::ptrdiff_t>(base_size),
                                   extended.tokens().end());
    nlohmann::json meta = {{"base_size", base_size}, {"extended_size", extended.size()}, {"added", added}};
    auto sidecar = path;
    sidecar += ".meta.json";
    write_file_atomic(sidecar, meta.dump(2) + "\n");
}

std::string encode_bytes(std::span<const FlatToken> tokens) {
    std::string out;
    out.reserve(tokens.size() * 5);
    for (const auto& t : tokens) {
        out.push_back(static_cast<char>(t.stream));
        const auto u = static_cast<std::uint32_t>(t.id);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
    return out;
}

const std::vector<std::string>& default_languages() {
    static const std::vector<std::string> langs = {"en", "es", "fr", "de", "it", "pt", "pl", "tr", "ru",
                                                   "nl", "cs", "ar", "zh-cn", "hu", "ko", "ja", "hi"};
    return langs;
}

namespace {

TokenId require_marker(const Vocabulary& v, std::string_view marker) {
    auto id = v.find(marker);
    if (!id) throw ValidationError("vocabulary lacks marker " + std::string(marker));
    return *id;
}

[[noreturn]] void parse_fail(std::size_t pos, const std::string& rule, const std::string& what) {
    throw ValidationError(rule + " at position " + std::to_string(pos) + ": " + what);
}

}  // namespace

SequenceCodec::SequenceCodec(const Vocabulary& vocab, const DialectCatalog& catalog,
                             std::span<const std::string> languages)
    : vocab_(&vocab),
      bots_(require_marker(vocab, kBeginText)),
      eots_(require_marker(vocab, kEndText)),
      boas_(require_marker(vocab, kBeginAudio)),
      eoas_(require_marker(vocab, kEndAudio)) {
    for (const auto& lang : languages) {
        if (auto id = vocab.find(language_token(lang))) {
            language_ids_.emplace(lang, *id);
            language_by_id_.emplace(*id, lang);
        }
    }
    for (const auto& label : catalog.labels()) {
        if (auto id = vocab.find(dialect_token(label))) {
            dialect_ids_.emplace(label.code(), *id);
            dialect_by_id_.emplace(*id, label);
        }
    }
}

bool SequenceCodec::reserved(TokenId id) const {
    return id == bots_ || id == eots_ || id == boas_ || id == eoas_ || language_by_id_.contains(id) ||
           dialect_by_id_.contains(id);
}

TokenSequence SequenceCodec::build_text_sequence(std::span<const TokenId> text_ids, std::string_view language,
                                                 const std::optional<DialectLabel>& dialect) const {
    if (!language_ids_.contains(std::string(language))) {
        throw ValidationError("unknown language code '" + std::string(language) + "'");
    }
    if (dialect && !dialect_ids_.contains(dialect->code())) {
        throw ValidationError("unknown dialect code '" + dialect->code() + "' (vocabulary has no token for it)");
    }
    for (std::size_t i = 0; i < text_ids.size(); ++i) {
        const TokenId id = text_ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_->size()) {
            throw ValidationError("text token " + std::to_string(i) + " has id " + std::to_string(id) +
                                  " outside the vocabulary");
        }
        if (reserved(id)) {
            throw ValidationError("text token " + std::to_string(i) + " is the reserved token " + vocab_->token(id));
        }
    }
    TokenSequence seq;
    seq.text.language = std::string(language);
    seq.text.dialect = dialect;
    seq.text.text.assign(text_ids.begin(), text_ids.end());
    return seq;
}

TokenSequence SequenceCodec::build_training_sequence(std::size_t speaker_slots, const TokenSequence& text_sequence,
                                                     std::span<const std::int32_t> audio_codes) const {
    if (speaker_slots == 0) throw ValidationError("speaker conditioning needs at least one latent slot");
    if (audio_codes.empty()) throw ValidationError("training sequence needs at least one audio token");
    if (text_sequence.audio) throw ValidationError("text sequence already carries audio tokens");
    for (auto code : audio_codes) {
        if (code < 0) throw ValidationError("audio token ids must be non-negative");
    }
    TokenSequence seq = text_sequence;
    seq.speaker_slots = speaker_slots;
    seq.audio = AudioPart{{audio_codes.begin(), audio_codes.end()}};
    return seq;
}

std::vector<FlatToken> SequenceCodec::flatten(const TokenSequence& seq) const {
    std::vector<FlatToken> out;
    out.reserve(seq.speaker_slots + seq.text.text.size() + 6 + (seq.audio ? seq.audio->codes.size() : 0));
    for (std::size_t k = 0; k < seq.speaker_slots; ++k) out.push_back({Stream::speaker, static_cast<std::int32_t>(k)});
    out.push_back({Stream::text, bots_});
    auto lang = language_ids_.find(seq.text.language);
    if (lang == language_ids_.end()) throw ValidationError("unknown language code '" + seq.text.language + "'");
    out.push_back({Stream::text, lang->second});
    if (seq.text.dialect) {
        auto d = dialect_ids_.find(seq.text.dialect->code());
        if (d == dialect_ids_.end()) throw ValidationError("unknown dialect code '" + seq.text.dialect->code() + "'");
        out.push_back({Stream::text, d->second});
    }
    for (auto id : seq.text.text) out.push_back({Stream::text, id});
    out.push_back({Stream::text, eots_});
    if (seq.audio) {
        out.push_back({Stream::text, boas_});
        for (auto code : seq.audio->codes) out.push_back({Stream::audio, code});
        out.push_back({Stream::text, eoas_});
    }
    return out;
}

TokenSequence SequenceCodec::parse(std::span<const FlatToken> flat) const {
    TokenSequence seq;
    std::size_t pos = 0;
    const std::size_t n = flat.size();

    auto describe = [&](const FlatToken& t) -> std::string {
        switch (t.stream) {
            case Stream::speaker: return "speaker slot " + std::to_string(t.id);
            case Stream::audio: return "audio token " + std::to_string(t.id);
            case Stream::text:
                if (t.id >= 0 && static_cast<std::size_t>(t.id) < vocab_->size()) return vocab_->token(t.id);
                return "text id " + std::to_string(t.id);
        }
        return "?";
    };
    auto is_text = [&](std::size_t p, TokenId id) { return flat[p].stream == Stream::text && flat[p].id == id; };

    while (pos < n && flat[pos].stream == Stream::speaker) {
        if (flat[pos].id != static_cast<std::int32_t>(pos)) {
            parse_fail(pos, "speaker slots", "expected slot " + std::to_string(pos) + ", got " + describe(flat[pos]));
        }
        ++pos;
    }
    seq.speaker_slots = pos;

    if (pos >= n) parse_fail(pos, "marker order", "missing [bots]");
    if (!is_text(pos, bots_)) parse_fail(pos, "marker order", "expected [bots], got " + describe(flat[pos]));
    ++pos;

    if (pos >= n || flat[pos].stream != Stream::text || !language_by_id_.contains(flat[pos].id)) {
        parse_fail(pos, "marker order", "expected a language token after [bots]" +
                                            (pos < n ? ", got " + describe(flat[pos]) : std::string()));
    }
    seq.text.language = language_by_id_.at(flat[pos].id);
    ++pos;

    if (pos < n && flat[pos].stream == Stream::text && dialect_by_id_.contains(flat[pos].id)) {
        seq.text.dialect = dialect_by_id_.at(flat[pos].id);
        ++pos;
    }

    bool closed = false;
    for (; pos < n; ++pos) {
        const auto& t = flat[pos];
        if (t.stream != Stream::text) parse_fail(pos, "marker order", describe(t) + " inside the text part");
        if (t.id == eots_) {
            closed = true;
            ++pos;
            break;
        }
        if (dialect_by_id_.contains(t.id)) {
            parse_fail(pos, "dialect position", "dialect token must immediately follow the language token");
        }
        if (t.id < 0 || static_cast<std::size_t>(t.id) >= vocab_->size()) {
            parse_fail(pos, "token range", describe(t) + " outside the vocabulary");
        }
        if (reserved(t.id)) parse_fail(pos, "marker order", describe(t) + " inside the text part");
        seq.text.text.push_back(t.id);
    }
    if (!closed) parse_fail(pos, "marker order", "missing [eots]");

    if (pos == n) return seq;

    if (!is_text(pos, boas_)) parse_fail(pos, "marker order", "expected [boas] or end, got " + describe(flat[pos]));
    ++pos;
    AudioPart audio;
    for (; pos < n && flat[pos].stream == Stream::audio; ++pos) audio.codes.push_back(flat[pos].id);
    if (audio.codes.empty()) parse_fail(pos, "audio part", "no audio tokens between [boas] and [eoas]");
    if (pos >= n) parse_fail(pos, "marker order", "missing [eoas]");
    if (!is_text(pos, eoas_)) parse_fail(pos, "marker order", "expected [eoas], got " + describe(flat[pos]));
    ++pos;
    if (pos != n) parse_fail(pos, "marker order", "trailing " + describe(flat[pos]) + " after [eoas]");
    seq.audio = std::move(audio);
    return seq;
}

std::vector<TokenId> char_tokenize(std::string_view text, const Vocabulary& vocab) {
    const auto unk = vocab.find("[UNK]");
    const auto space = vocab.find("[SPACE]");
    std::vector<TokenId> ids;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = lead < 0x80 ? 1 : (lead >> 5) == 0x6 ? 2 : (lead >> 4) == 0xE ? 3 : (lead >> 3) == 0x1E ? 4 : 1;
        len = std::min(len, text.size() - i);
        const std::string_view ch = text.substr(i, len);
        i += len;
        if (ch == " " && space) {
            ids.push_back(*space);
            continue;
        }
        if (auto id = vocab.find(ch)) {
            ids.push_back(*id);
        } else if (unk) {
            ids.push_back(*unk);
        } else {
            throw ValidationError("character '" + std::string(ch) + "' not in vocabulary and no [UNK] token");
        }
    }
    return ids;
}

EmbeddingRows init_embedding_rows(const EmbeddingInitSpec& spec) {
    if (spec.row_count == 0 || spec.dim == 0) throw ValidationError("embedding rows need row_count > 0 and dim > 0");
    EmbeddingRows rows;
    rows.rows = spec.row_count;
    rows.dim = spec.dim;
    rows.values.resize(spec.row_count * spec.dim);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : rows.values) v = static_cast<float>(normal(rng));
    return rows;
}

}  // namespace curator
