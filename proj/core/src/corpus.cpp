#include "curator/corpus.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "curator/error.hpp"
#include "curator/file_util.hpp"

namespace curator {

using nlohmann::json;

std::string_view to_string(Gender g) {
    switch (g) {
        case Gender::male: return "male";
        case Gender::female: return "female";
        case Gender::unknown: return "unknown";
    }
    return "unknown";
}

std::optional<Gender> parse_gender(std::string_view s) {
    if (s == "male") return Gender::male;
    if (s == "female") return Gender::female;
    if (s == "unknown") return Gender::unknown;
    return std::nullopt;
}

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

CorpusManifest CorpusManifest::derive(std::vector<SegmentRecord> new_segments,
                                      ProvenanceEntry entry) const {
    CorpusManifest out;
    out.segments = std::move(new_segments);
    out.metadata = metadata;
    out.metadata.provenance.append(std::move(entry));
    return out;
}

namespace {

// Field order of a record line. Optional fields follow in a trailing object.
constexpr const char* kFields[] = {"segment_id",     "audio_path", "speaker_id", "duration_s",
                                   "sample_rate_hz", "gender",     "transcript"};
constexpr std::size_t kFixedFields = std::size(kFields);

json encode_wer(double w) {
    if (std::isinf(w)) return "inf";
    return w;
}

json record_to_json(const SegmentRecord& s) {
    json row = json::array({s.segment_id, s.audio_path, s.speaker_id, s.duration_s,
                            s.sample_rate_hz, to_string(s.gender), s.transcript});
    json opt = json::object();
    if (s.dialect) opt["dialect"] = s.dialect->code();
    if (s.hypothesis_transcript) opt["hypothesis_transcript"] = *s.hypothesis_transcript;
    if (s.wer) opt["wer"] = encode_wer(*s.wer);
    if (!opt.empty()) row.push_back(std::move(opt));
    return row;
}

const std::string& expect_string(const json& v, std::size_t line, const char* field) {
    if (!v.is_string()) throw ParseError(line, field, "expected a string");
    return v.get_ref<const std::string&>();
}

SegmentRecord record_from_json(const json& row, std::size_t line, const DialectCatalog& catalog) {
    if (!row.is_array()) throw ParseError(line, "", "record must be a JSON array");
    if (row.size() < kFixedFields || row.size() > kFixedFields + 1) {
        throw ParseError(line, "", "expected " + std::to_string(kFixedFields) +
                                       " positional fields plus optional object, got " +
                                       std::to_string(row.size()) + " elements");
    }
    SegmentRecord s;
    s.segment_id = expect_string(row[0], line, kFields[0]);
    if (s.segment_id.empty()) throw ParseError(line, kFields[0], "must not be empty");
    s.audio_path = expect_string(row[1], line, kFields[1]);
    s.speaker_id = expect_string(row[2], line, kFields[2]);
    if (s.speaker_id.empty()) throw ParseError(line, kFields[2], "must not be empty");

    if (!row[3].is_number()) throw ParseError(line, kFields[3], "expected a number");
    s.duration_s = row[3].get<double>();
    if (!std::isfinite(s.duration_s) || s.duration_s < 0.0) {
        throw ParseError(line, kFields[3], "must be a finite value >= 0");
    }
    if (!row[4].is_number_integer()) throw ParseError(line, kFields[4], "expected an integer");
    auto sr = row[4].get<std::int64_t>();
    if (sr <= 0 || sr > std::numeric_limits<std::int32_t>::max()) {
        throw ParseError(line, kFields[4], "must be a positive integer");
    }
    s.sample_rate_hz = static_cast<std::int32_t>(sr);
    auto g = parse_gender(expect_string(row[5], line, kFields[5]));
    if (!g) throw ParseError(line, kFields[5], "expected male, female or unknown");
    s.gender = *g;
    s.transcript = expect_string(row[6], line, kFields[6]);

    if (row.size() == kFixedFields + 1) {
        const json& opt = row[kFixedFields];
        if (!opt.is_object()) throw ParseError(line, "", "optional fields must be an object");
        for (auto it = opt.begin(); it != opt.end(); ++it) {
            const std::string& key = it.key();
            if (key == "dialect") {
                const auto& code = expect_string(*it, line, "dialect");
                auto label = catalog.find(code);
                if (!label) throw ParseError(line, "dialect", "unknown dialect code '" + code + "'");
                s.dialect = *label;
            } else if (key == "hypothesis_transcript") {
                s.hypothesis_transcript = expect_string(*it, line, "hypothesis_transcript");
            } else if (key == "wer") {
                if (it->is_string() && it->get_ref<const std::string&>() == "inf") {
                    s.wer = std::numeric_limits<double>::infinity();
                } else if (it->is_number() && it->get<double>() >= 0.0) {
                    s.wer = it->get<double>();
                } else {
                    throw ParseError(line, "wer", "expected a number >= 0 or \"inf\"");
                }
            } else {
                throw ParseError(line, key, "unknown optional field");
            }
        }
    }
    return s;
}

ManifestMetadata header_from_json(const json& h) {
    if (!h.is_object()) throw ParseError(1, "", "header must be a JSON object");
    auto fmt = h.find("format");
    if (fmt == h.end() || !fmt->is_string() || fmt->get<std::string>() != kManifestFormat) {
        throw ParseError(1, "format", "expected format \"" + std::string(kManifestFormat) + "\"");
    }
    ManifestMetadata meta;
    if (auto c = h.find("created_at"); c != h.end()) meta.created_at = expect_string(*c, 1, "created_at");
    if (auto p = h.find("provenance"); p != h.end()) {
        if (!p->is_array()) throw ParseError(1, "provenance", "expected an array");
        for (const auto& e : *p) {
            if (!e.is_object()) throw ParseError(1, "provenance", "entries must be objects");
            ProvenanceEntry entry;
            entry.stage = e.value("stage", "");
            entry.timestamp = e.value("timestamp", "");
            entry.detail = e.value("detail", "");
            meta.provenance.append(std::move(entry));
        }
    }
    return meta;
}

// Ordered so "format" leads the first line.
nlohmann::ordered_json header_to_json(const ManifestMetadata& meta) {
    nlohmann::ordered_json prov = nlohmann::ordered_json::array();
    for (const auto& e : meta.provenance.entries()) {
        prov.push_back({{"stage", e.stage}, {"timestamp", e.timestamp}, {"detail", e.detail}});
    }
    return nlohmann::ordered_json{{"format", kManifestFormat}, {"created_at", meta.created_at}, {"provenance", prov}};
}

}  // namespace

CorpusManifest parse_manifest(std::istream& in, const DialectCatalog& catalog) {
    CorpusManifest m;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    std::unordered_set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(lineno, "", std::string("malformed JSON: ") + e.what());
        }
        if (!have_header) {
            if (lineno != 1) throw ParseError(lineno, "format", "header must be the first line");
            m.metadata = header_from_json(j);
            have_header = true;
            continue;
        }
        auto rec = record_from_json(j, lineno, catalog);
        if (!ids.insert(rec.segment_id).second) {
            throw ValidationError("line " + std::to_string(lineno) + ": duplicate segment_id '" +
                                  rec.segment_id + "'");
        }
        m.segments.push_back(std::move(rec));
    }
    return m;
}

CorpusManifest parse_manifest(std::string_view text, const DialectCatalog& catalog) {
    std::istringstream in{std::string(text)};
    return parse_manifest(in, catalog);
}

void write_manifest(const CorpusManifest& manifest, std::ostream& out) {
    out << header_to_json(manifest.metadata).dump() << '\n';
    for (const auto& s : manifest.segments) out << record_to_json(s).dump() << '\n';
}

std::string write_manifest(const CorpusManifest& manifest) {
    std::ostringstream out;
    write_manifest(manifest, out);
    return out.str();
}

CorpusManifest load_manifest(const std::string& path, const DialectCatalog& catalog) {
    return parse_manifest(read_file(path), catalog);
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
    write_file_atomic(path, write_manifest(manifest));
}

std::optional<std::string> admission_problem(const SegmentRecord& segment) {
    if (!(segment.duration_s > 0.0)) return "duration_s must be > 0";
    if (segment.sample_rate_hz != kPipelineSampleRate) {
        return "sample_rate_hz " + std::to_string(segment.sample_rate_hz) + " != 16000";
    }
    return std::nullopt;
}

CorpusStats corpus_stats(const CorpusManifest& manifest) {
    CorpusStats st;
    st.segment_count = manifest.segments.size();
    std::map<Gender, std::size_t> gender_counts{
        {Gender::male, 0}, {Gender::female, 0}, {Gender::unknown, 0}};
    std::set<std::string_view> speakers;
    double seconds = 0.0;
    for (const auto& s : manifest.segments) {
        seconds += s.duration_s;
        speakers.insert(s.speaker_id);
        ++gender_counts[s.gender];
        ++st.dialect_histogram[s.dialect ? s.dialect->code() : std::string(kUnlabeledBucket)];
    }
    st.total_hours = seconds / 3600.0;
    st.speaker_count = speakers.size();
    for (auto [g, n] : gender_counts) {
        st.gender_fractions[g] =
            st.segment_count == 0 ? 0.0
                                  : static_cast<double>(n) / static_cast<double>(st.segment_count);
    }
    return st;
}

}  // namespace curator
