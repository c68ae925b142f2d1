#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "curator/adapters.hpp"
#include "curator/audio.hpp"
#include "curator/corpus.hpp"
#include "curator/text_metrics.hpp"

namespace curator {

enum class EmbedderSource { spectral, adapter };

std::string_view to_string(EmbedderSource s);

/// Unit-length speaker embedding.
struct SpeakerEmbedding {
    std::vector<double> vector;
    EmbedderSource source = EmbedderSource::spectral;
};

/// L2-normalizes `raw`. Throws ValidationError for empty or zero vectors.
SpeakerEmbedding make_embedding(std::vector<double> raw, EmbedderSource source);

/// Per-band mean and population standard deviation of a log-mel matrix over
/// time (2 * n_mels values), L2-normalized. Needs at least two frames.
SpeakerEmbedding spectral_speaker_embedding(const MelMatrix& mel);

/// Dot product of unit vectors, clamped to [-1, 1]. Throws ValidationError
/// on a dimension mismatch.
double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

class SpeakerEmbedder {
public:
    virtual ~SpeakerEmbedder() = default;
    /// Throws IoError/ValidationError when the audio cannot be embedded.
    virtual SpeakerEmbedding embed(const std::string& audio_path) = 0;
};

/// Deterministic mel-statistics embedder; no external dependencies.
class SpectralEmbedder : public SpeakerEmbedder {
public:
    explicit SpectralEmbedder(MelConfig config = {}) : config_(config) {}
    SpeakerEmbedding embed(const std::string& audio_path) override;

private:
    MelConfig config_;
};

/// Asks an `embed` adapter for each file.
class AdapterEmbedder : public SpeakerEmbedder {
public:
    explicit AdapterEmbedder(AdapterSpec spec) : spec_(std::move(spec)) {}
    SpeakerEmbedding embed(const std::string& audio_path) override;
    /// Embeds many files with batched adapter calls and fills the cache.
    void prefetch(std::span<const std::string> audio_paths, const InvokeOptions& options = {});

private:
    AdapterSpec spec_;
    std::mutex mu_;
    std::unordered_map<std::string, SpeakerEmbedding> cache_;
};

/// Memoizes another embedder by path (thread-safe).
class CachingEmbedder : public SpeakerEmbedder {
public:
    explicit CachingEmbedder(SpeakerEmbedder& inner) : inner_(inner) {}
    SpeakerEmbedding embed(const std::string& audio_path) override;

private:
    SpeakerEmbedder& inner_;
    std::mutex mu_;
    std::unordered_map<std::string, SpeakerEmbedding> cache_;
};

/// Uniform seeded choice among the speaker's segments lasting at least
/// `min_duration_s`, taken over candidates sorted by segment_id. Throws
/// ValidationError if the speaker is absent or has no qualifying segment.
SegmentRecord select_reference(const CorpusManifest& manifest, const std::string& speaker_id,
                               double min_duration_s, std::uint64_t seed);

enum class ReferenceMode {
    independent,   // draw a reference per item and run with select_reference
    conditioning,  // compare against the clip that conditioned synthesis
};

struct EvalRunConfig {
    std::size_t runs = 3;
    double min_reference_s = 5.0;
    std::uint64_t seed = 0;
    ReferenceMode reference_mode = ReferenceMode::independent;

    void validate() const;
};

/// One synthesized utterance: the eval segment whose transcript was spoken and
/// the produced file.
struct SynthItem {
    std::string segment_id;
    std::string audio_path;
    /// Audio used to condition synthesis; needed in conditioning mode.
    std::string conditioning_reference;
};

using SynthSet = std::vector<SynthItem>;

/// Chooses the reference audio path for one item in one run. The default
/// (independent mode) calls select_reference with a seed derived from the
/// run seed (config seed + run index) and the segment id.
using ReferencePicker =
    std::function<std::string(const SynthItem& item, const SegmentRecord& target, std::size_t run_index)>;

struct SecsRun {
    double mean = 0.0;
    std::vector<std::pair<std::string, double>> item_scores;  // by segment_id
    std::vector<std::string> skipped;                         // unreadable audio
};

/// Mean SECS over the synth set for one run. Items are folded in segment_id
/// order. Throws ValidationError for an empty set, an item missing from the
/// manifest, or when no item could be embedded.
SecsRun secs_run(const SynthSet& synth, const CorpusManifest& eval_manifest, const EvalRunConfig& config,
                 std::size_t run_index, SpeakerEmbedder& embedder, const ReferencePicker& picker = {});

/// Arithmetic mean of per-run values (no weighting).
double average_runs(std::span<const double> per_run);

struct SynthesisOptions {
    std::string language = "ar";
    /// Forward each segment's dialect label to the synthesizer.
    bool pass_dialect = false;
    std::string output_dir;
};

struct SynthesisResult {
    SynthSet items;  // segment_id order
    std::vector<std::string> failed;
};

/// Asks a synthesize adapter to speak every eval transcript, conditioned on a
/// reference clip of the same speaker chosen with select_reference under a
/// seed derived from config.seed and the segment id. Items the adapter fails
/// on are listed in `failed`. Throws ValidationError for an empty manifest.
SynthesisResult synthesize_set(const AdapterSpec& synthesizer, const CorpusManifest& eval_manifest,
                               const EvalRunConfig& config, const SynthesisOptions& synthesis,
                               const InvokeOptions& options = {});

nlohmann::json to_json(const SynthSet& set);
/// Reads [{segment_id, audio_path, conditioning_reference?}, ...].
SynthSet synth_set_from_json(const nlohmann::json& j);

struct MosRow {
    std::optional<double> mos;  // absent: no ratings
    std::size_t count = 0;
    std::optional<double> stddev;
};

using MosTable = std::map<std::string, MosRow>;

/// Reads the annotation export: header `model_name,mos,count,std`, one row
/// per model, empty mos/std for models without ratings.
MosTable parse_mos_csv(std::string_view text);

struct ModelSynth {
    std::string name;
    SynthSet items;
};

struct ReportRow {
    std::string model;
    std::optional<double> wer;
    std::optional<EditCounts> wer_counts;
    std::optional<double> secs;
    std::vector<double> secs_runs;
    std::optional<double> mos;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    EvalRunConfig config;
    std::vector<std::string> annotations;

    bool has_mos() const;
};

struct EvalOptions {
    std::optional<AdapterSpec> asr;  // absent: WER column disabled
    NormalizerConfig normalizer;
    std::optional<MosTable> mos;
    ReferencePicker picker;  // empty: default per reference mode
    InvokeOptions invoke;
};

/// SECS averaged over `config.runs` runs, corpus-level WER (pooled edit
/// counts) of ASR output against the eval transcripts, and MOS merged from an
/// annotation export. A failed branch leaves its column empty and adds an
/// annotation. Rows keep input order except that a model named "baseline"
/// goes first.
EvalReport evaluate(std::span<const ModelSynth> models, const CorpusManifest& eval_manifest,
                    const EvalRunConfig& config, SpeakerEmbedder& embedder, const EvalOptions& options = {});

/// Fills the MOS column from an annotation export; models without data get
/// an annotation instead of a value.
void merge_mos(EvalReport& report, const MosTable& mos);

/// Full report including per-run SECS, edit counts, config and notes.
nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

enum class ReportFormat { markdown, csv };

/// Markdown: Model | WER | SECS [| MOS], WER in percent with two decimals,
/// SECS with three, MOS with two. CSV: model,wer,secs[,mos] with WER as a
/// fraction at full precision so it can be read back exactly.
std::string render_report(const EvalReport& report, ReportFormat format);

/// Reads the CSV produced by render_report back into rows (model, wer, secs,
/// mos only).
std::vector<ReportRow> parse_report_csv(std::string_view text);

}  // namespace curator
