#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "curator/dialect.hpp"

namespace curator {

enum class Gender { male, female, unknown };

std::string_view to_string(Gender g);
std::optional<Gender> parse_gender(std::string_view s);

inline constexpr std::string_view kManifestFormat = "dfm/1";
inline constexpr std::int32_t kPipelineSampleRate = 16000;

struct SegmentRecord {
    std::string segment_id;
    std::string audio_path;
    std::string transcript;
    std::string speaker_id;
    double duration_s = 0.0;
    std::int32_t sample_rate_hz = kPipelineSampleRate;
    Gender gender = Gender::unknown;
    std::optional<DialectLabel> dialect;
    std::optional<std::string> hypothesis_transcript;
    std::optional<double> wer;

    friend bool operator==(const SegmentRecord&, const SegmentRecord&) = default;
};

/// One stage's record in a manifest's history. `detail` is free-form JSON
/// text so stages can attach audit data (original paths, tie lists, seeds).
struct ProvenanceEntry {
    std::string stage;
    std::string timestamp;
    std::string detail;

    friend bool operator==(const ProvenanceEntry&, const ProvenanceEntry&) = default;
};

/// Ordered, append-only stage history.
class Provenance {
public:
    Provenance() = default;
    explicit Provenance(std::vector<ProvenanceEntry> entries) : entries_(std::move(entries)) {}

    void append(ProvenanceEntry entry) { entries_.push_back(std::move(entry)); }
    const std::vector<ProvenanceEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    friend bool operator==(const Provenance&, const Provenance&) = default;

private:
    std::vector<ProvenanceEntry> entries_;
};

struct ManifestMetadata {
    std::string created_at;
    Provenance provenance;

    friend bool operator==(const ManifestMetadata&, const ManifestMetadata&) = default;
};

struct CorpusManifest {
    std::vector<SegmentRecord> segments;
    ManifestMetadata metadata;

    /// Copy with the same history plus one new entry. Stage outputs are
    /// derived this way so an input manifest is never mutated.
    CorpusManifest derive(std::vector<SegmentRecord> new_segments, ProvenanceEntry entry) const;

    friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

/// Reads a `dfm/1` manifest. Dialect codes are checked against `catalog`.
/// Throws ParseError naming the line and field for malformed input,
/// ValidationError for duplicate segment ids.
CorpusManifest parse_manifest(std::istream& in, const DialectCatalog& catalog);
CorpusManifest parse_manifest(std::string_view text, const DialectCatalog& catalog);

void write_manifest(const CorpusManifest& manifest, std::ostream& out);
std::string write_manifest(const CorpusManifest& manifest);

CorpusManifest load_manifest(const std::string& path, const DialectCatalog& catalog);
/// Atomic: writes a sibling temp file and renames it over `path`.
void save_manifest(const CorpusManifest& manifest, const std::string& path);

/// Reasons a segment would be refused by the pipeline's admission check, or
/// nullopt when it is admissible (positive duration, 16 kHz).
std::optional<std::string> admission_problem(const SegmentRecord& segment);

inline constexpr std::string_view kUnlabeledBucket = "unlabeled";

struct CorpusStats {
    std::size_t segment_count = 0;
    double total_hours = 0.0;
    std::size_t speaker_count = 0;
    std::map<Gender, double> gender_fractions;
    /// Keyed by dialect code, plus kUnlabeledBucket for segments without one.
    std::map<std::string, std::size_t> dialect_histogram;
};

CorpusStats corpus_stats(const CorpusManifest& manifest);

std::string utc_timestamp();

}  // namespace curator
