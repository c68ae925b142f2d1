#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "curator/adapters.hpp"
#include "curator/corpus.hpp"
#include "curator/dialect.hpp"
#include "curator/error.hpp"
#include "curator/text_metrics.hpp"

namespace curator {

/// A stage could not complete; earlier snapshots remain valid.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Bridges each classifier's native label inventory onto the dialect catalog.
/// File format: {"<classifier name>": {"<native label>": "<dialect code>", ...}, ...}
class LabelMapping {
public:
    static LabelMapping from_json(const nlohmann::json& j, const DialectCatalog& catalog);
    static LabelMapping load(const std::filesystem::path& path, const DialectCatalog& catalog);

    void add(const std::string& classifier, const std::string& native, DialectLabel label);
    std::optional<DialectLabel> lookup(const std::string& classifier, const std::string& native) const;

    /// Every label a classify adapter declares must be mapped. Throws
    /// ConfigError listing the first gap.
    void check_covers(std::span<const AdapterSpec> classifiers) const;

private:
    std::map<std::pair<std::string, std::string>, DialectLabel> entries_;
};

struct Rejection {
    std::string segment_id;
    std::string stage;
    std::string reason;
    std::optional<double> value;

    friend bool operator==(const Rejection&, const Rejection&) = default;
};

struct RejectionLog {
    std::vector<Rejection> entries;

    void add(std::string segment_id, std::string stage, std::string reason,
             std::optional<double> value = std::nullopt) {
        entries.push_back({std::move(segment_id), std::move(stage), std::move(reason), value});
    }
    void append(const RejectionLog& other) {
        entries.insert(entries.end(), other.entries.begin(), other.entries.end());
    }
    std::size_t size() const noexcept { return entries.size(); }

    /// Tab-separated: segment_id, stage, reason, value (empty when absent).
    std::string to_tsv() const;
};

/// Output of a single stage: surviving segments plus everything it dropped.
struct StageOutput {
    CorpusManifest manifest;
    RejectionLog rejections;
};

/// Admission check: drops segments with non-positive duration or a sample
/// rate other than 16 kHz.
StageOutput ingest_stage(const CorpusManifest& manifest);

/// Replaces each audio_path with the denoiser's output; the original paths are
/// kept in the provenance entry. Throws StageError if the adapter cannot start.
StageOutput denoise_stage(const CorpusManifest& manifest, const AdapterSpec& denoiser,
                          const std::string& output_dir, const InvokeOptions& options = {});

/// Attaches ASR hypotheses. Throws StageError if the adapter cannot start.
StageOutput transcribe_stage(const CorpusManifest& manifest, const AdapterSpec& asr,
                             const InvokeOptions& options = {});

/// Keeps segments whose WER against their ASR hypothesis is <= threshold and
/// records that WER on them. Segments without a hypothesis are rejected.
StageOutput filter_mismatched(const CorpusManifest& manifest, const NormalizerConfig& normalizer,
                              double threshold = 0.0);

struct VoteOutcome {
    std::optional<DialectLabel> label;
    /// Dialect code -> summed confidence. Only codes that received mass appear.
    std::map<std::string, double> cumulative;
    /// Codes sharing the maximum when more than one does.
    std::vector<std::string> tied;
};

/// Sums each verdict's confidences per mapped dialect and takes the argmax,
/// breaking ties by the lexicographically smallest code. Contributions are
/// summed in sorted order so the outcome does not depend on verdict order.
/// Throws ConfigError for an unmapped native label.
VoteOutcome aggregate_dialect_votes(std::span<const ClassifierVerdict> verdicts, const LabelMapping& mapping);

struct LabelingResult {
    CorpusManifest manifest;
    std::map<std::string, std::size_t> histogram;
    std::vector<std::pair<std::string, std::vector<std::string>>> ties;
    std::size_t classifier_failures = 0;
};

LabelingResult assign_dialects(const CorpusManifest& manifest, std::span<const AdapterSpec> classifiers,
                               const LabelMapping& mapping, const InvokeOptions& options = {});

struct SplitResult {
    CorpusManifest train;
    CorpusManifest eval;
    std::uint64_t seed = 0;
    std::vector<std::string> holdout_speakers;
};

/// Holds out `holdout_count` speakers drawn uniformly without replacement
/// (seeded) from the sorted distinct speaker list. Throws ValidationError
/// unless holdout_count < number of speakers.
SplitResult speaker_disjoint_split(const CorpusManifest& manifest, std::size_t holdout_count,
                                   std::uint64_t seed);

struct StageToggles {
    bool denoise = true;
    bool asr = true;
    bool filter = true;
    bool label = true;
    bool split = true;
};

struct PipelineConfig {
    std::filesystem::path input_manifest;
    std::filesystem::path output_dir;
    StageToggles stages;
    std::optional<AdapterSpec> denoiser;
    std::optional<AdapterSpec> asr;
    std::vector<AdapterSpec> classifiers;
    NormalizerConfig normalizer;
    double filter_threshold = 0.0;
    std::filesystem::path label_mapping;
    std::filesystem::path dialect_list;  // empty: built-in catalog
    std::size_t holdout_count = 31;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    /// Relative paths resolve against `base_dir`.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    /// Checks that every enabled stage has what it needs. Throws ConfigError.
    void validate() const;
};

NormalizerConfig normalizer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NormalizerConfig& cfg);

struct StageReport {
    std::string name;
    bool enabled = true;
    std::size_t input = 0;
    std::size_t output = 0;
    std::size_t rejected = 0;
    double seconds = 0.0;
    std::string snapshot;
};

struct PipelineReport {
    std::vector<StageReport> stages;
    bool completed = false;
    std::string halted_stage;
    std::string error;
    double retained_hours = 0.0;

    nlohmann::json to_json() const;
};

struct PipelineResult {
    std::optional<SplitResult> split;
    CorpusManifest final_manifest;
    RejectionLog rejections;
    CorpusStats stats;
    PipelineReport report;
};

/// Runs ingest -> denoise -> asr -> filter -> label -> split, writing a
/// snapshot per stage under output_dir, plus rejections.tsv and report.json.
/// A stage failure stops the run (report.completed == false) without
/// touching earlier snapshots.
PipelineResult run_pipeline(const PipelineConfig& config);

nlohmann::json to_json(const CorpusStats& stats);

}  // namespace curator
