#include "curator/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "curator/file_util.hpp"
#include "curator/random.hpp"

namespace curator {

using nlohmann::json;

namespace {

constexpr const char* kIngest = "ingest";
constexpr const char* kDenoise = "denoise";
constexpr const char* kAsr = "asr";
constexpr const char* kFilter = "filter";
constexpr const char* kLabel = "label";
constexpr const char* kSplit = "split";

ProvenanceEntry entry(const std::string& stage, const json& detail) {
    return {stage, utc_timestamp(), detail.dump()};
}

std::string format_value(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Label mapping

LabelMapping LabelMapping::from_json(const json& j, const DialectCatalog& catalog) {
    if (!j.is_object()) throw ConfigError("label mapping must be an object keyed by classifier name");
    LabelMapping m;
    for (auto c = j.begin(); c != j.end(); ++c) {
        if (!c->is_object()) throw ConfigError("label mapping for '" + c.key() + "' must be an object");
        for (auto n = c->begin(); n != c->end(); ++n) {
            if (!n->is_string()) {
                throw ConfigError("label mapping " + c.key() + "/" + n.key() + " must be a dialect code");
            }
            auto label = catalog.find(n->get<std::string>());
            if (!label) {
                throw ConfigError("label mapping " + c.key() + "/" + n.key() + " names unknown dialect '" +
                                  n->get<std::string>() + "'");
            }
            m.add(c.key(), n.key(), *label);
        }
    }
    return m;
}

LabelMapping LabelMapping::load(const std::filesystem::path& path, const DialectCatalog& catalog) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError("label mapping " + path.string() + " is not valid JSON");
    return from_json(j, catalog);
}

void LabelMapping::add(const std::string& classifier, const std::string& native, DialectLabel label) {
    entries_[{classifier, native}] = std::move(label);
}

std::optional<DialectLabel> LabelMapping::lookup(const std::string& classifier, const std::string& native) const {
    auto it = entries_.find({classifier, native});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void LabelMapping::check_covers(std::span<const AdapterSpec> classifiers) const {
    for (const auto& spec : classifiers) {
        for (const auto& native : spec.labels) {
            if (!lookup(spec.name, native)) {
                throw ConfigError("label mapping has no entry for classifier '" + spec.name + "' label '" +
                                  native + "'");
            }
        }
    }
}

std::string RejectionLog::to_tsv() const {
    std::string out;
    for (const auto& r : entries) {
        out += r.segment_id;
        out += '\t';
        out += r.stage;
        out += '\t';
        out += r.reason;
        out += '\t';
        if (r.value) out += format_value(*r.value);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stages

StageOutput ingest_stage(const CorpusManifest& manifest) {
    StageOutput out;
    std::vector<SegmentRecord> kept;
    for (const auto& s : manifest.segments) {
        if (auto problem = admission_problem(s)) {
            out.rejections.add(s.segment_id, kIngest, *problem);
        } else {
            kept.push_back(s);
        }
    }
    out.manifest = manifest.derive(std::move(kept), entry(kIngest, {{"rejected", out.rejections.size()}}));
    return out;
}

StageOutput denoise_stage(const CorpusManifest& manifest, const AdapterSpec& denoiser,
                          const std::string& output_dir, const InvokeOptions& options) {
    std::vector<AdapterEnvelope> requests;
    requests.reserve(manifest.segments.size());
    for (const auto& s : manifest.segments) {
        requests.push_back(denoise_request(s.segment_id, s.audio_path, output_dir));
    }
    auto responses = invoke_adapter(denoiser, requests, options);
    if (all_spawn_failures(responses)) {
        throw StageError(kDenoise, "cannot start adapter '" + denoiser.name + "': " +
                                       responses.front().failure->message);
    }

    StageOutput out;
    std::vector<SegmentRecord> kept;
    json originals = json::object();
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const auto& s = manifest.segments[i];
        const auto& r = responses[i];
        const json* path = nullptr;
        if (r.ok()) {
            auto it = r.envelope->payload.find("audio_path");
            if (it != r.envelope->payload.end() && it->is_string()) path = &*it;
        }
        if (!path) {
            out.rejections.add(s.segment_id, kDenoise,
                               "denoise-failed: " + (r.failure ? std::string(to_string(r.failure->kind)) + ": " +
                                                                     r.failure->message
                                                               : std::string("response lacks audio_path")));
            continue;
        }
        SegmentRecord d = s;
        d.audio_path = path->get<std::string>();
        originals[s.segment_id] = s.audio_path;
        kept.push_back(std::move(d));
    }
    out.manifest = manifest.derive(std::move(kept), entry(kDenoise, {{"adapter", denoiser.name},
                                                                      {"original_audio_paths", originals}}));
    return out;
}

StageOutput transcribe_stage(const CorpusManifest& manifest, const AdapterSpec& asr, const InvokeOptions& options) {
    std::vector<AdapterEnvelope> requests;
    requests.reserve(manifest.segments.size());
    for (const auto& s : manifest.segments) requests.push_back(asr_request(s.segment_id, s.audio_path));
    auto responses = invoke_adapter(asr, requests, options);
    if (all_spawn_failures(responses)) {
        throw StageError(kAsr, "cannot start adapter '" + asr.name + "': " + responses.front().failure->message);
    }

    StageOutput out;
    std::vector<SegmentRecord> kept;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const auto& s = manifest.segments[i];
        const auto& r = responses[i];
        const json* text = nullptr;
        if (r.ok()) {
            auto it = r.envelope->payload.find("text");
            if (it != r.envelope->payload.end() && it->is_string()) text = &*it;
        }
        if (!text) {
            out.rejections.add(s.segment_id, kAsr,
                               "asr-failed: " + (r.failure ? std::string(to_string(r.failure->kind)) + ": " +
                                                                 r.failure->message
                                                           : std::string("response lacks text")));
            continue;
        }
        SegmentRecord t = s;
        t.hypothesis_transcript = text->get<std::string>();
        kept.push_back(std::move(t));
    }
    out.manifest = manifest.derive(std::move(kept), entry(kAsr, {{"adapter", asr.name}}));
    return out;
}

StageOutput filter_mismatched(const CorpusManifest& manifest, const NormalizerConfig& normalizer,
                              double threshold) {
    StageOutput out;
    std::vector<SegmentRecord> kept;
    for (const auto& s : manifest.segments) {
        if (!s.hypothesis_transcript) {
            out.rejections.add(s.segment_id, kFilter, "no-hypothesis");
            continue;
        }
        const double w = wer(s.transcript, *s.hypothesis_transcript, normalizer);
        if (w <= threshold) {
            SegmentRecord k = s;
            k.wer = w;
            kept.push_back(std::move(k));
        } else {
            out.rejections.add(s.segment_id, kFilter, "wer-above-threshold", w);
        }
    }
    out.manifest = manifest.derive(std::move(kept),
                                   entry(kFilter, {{"threshold", threshold},
                                                   {"normalizer", to_json(normalizer)},
                                                   {"rejected", out.rejections.size()}}));
    return out;
}

VoteOutcome aggregate_dialect_votes(std::span<const ClassifierVerdict> verdicts, const LabelMapping& mapping) {
    VoteOutcome out;
    if (verdicts.empty()) return out;

    std::map<std::string, std::vector<double>> contributions;
    for (const auto& v : verdicts) {
        for (const auto& [native, confidence] : v.scores) {
            auto label = mapping.lookup(v.classifier_name, native);
            if (!label) {
                throw ConfigError("no label mapping for classifier '" + v.classifier_name + "' label '" +
                                  native + "'");
            }
            contributions[label->code()].push_back(confidence);
        }
    }
    for (auto& [code, values] : contributions) {
        std::sort(values.begin(), values.end());
        double sum = 0.0;
        for (double x : values) sum += x;
        out.cumulative.emplace(code, sum);
    }

    // Map iteration is lexicographic, so the first code at the maximum wins.
    double best = -1.0;
    for (const auto& [code, sum] : out.cumulative) {
        if (sum > best) {
            best = sum;
            out.label = DialectLabel(code);
        }
    }
    for (const auto& [code, sum] : out.cumulative) {
        if (sum == best) out.tied.push_back(code);
    }
    if (out.tied.size() < 2) out.tied.clear();
    return out;
}

LabelingResult assign_dialects(const CorpusManifest& manifest, std::span<const AdapterSpec> classifiers,
                               const LabelMapping& mapping, const InvokeOptions& options) {
    std::vector<std::string> transcripts;
    transcripts.reserve(manifest.segments.size());
    for (const auto& s : manifest.segments) transcripts.push_back(s.transcript);
    auto outcomes = classify_dialect_batch(classifiers, transcripts, options);

    LabelingResult result;
    std::vector<SegmentRecord> labeled;
    labeled.reserve(manifest.segments.size());
    json ties = json::array();
    std::size_t unlabeled = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        SegmentRecord s = manifest.segments[i];
        result.classifier_failures += outcomes[i].failures.size();
        auto vote = aggregate_dialect_votes(outcomes[i].verdicts, mapping);
        s.dialect = vote.label;
        if (!vote.label) ++unlabeled;
        if (!vote.tied.empty()) {
            ties.push_back({{"segment_id", s.segment_id}, {"tied", vote.tied}, {"chosen", vote.label->code()}});
            result.ties.emplace_back(s.segment_id, vote.tied);
        }
        ++result.histogram[s.dialect ? s.dialect->code() : std::string(kUnlabeledBucket)];
        labeled.push_back(std::move(s));
    }

    json names = json::array();
    for (const auto& c : classifiers) names.push_back(c.name);
    result.manifest = manifest.derive(std::move(labeled),
                                      entry(kLabel, {{"classifiers", names},
                                                     {"tie_break", "lexicographic"},
                                                     {"ties", ties},
                                                     {"unlabeled", unlabeled},
                                                     {"classifier_failures", result.classifier_failures},
                                                     {"histogram", result.histogram}}));
    return result;
}

SplitResult speaker_disjoint_split(const CorpusManifest& manifest, std::size_t holdout_count, std::uint64_t seed) {
    std::set<std::string> distinct;
    for (const auto& s : manifest.segments) distinct.insert(s.speaker_id);
    std::vector<std::string> speakers(distinct.begin(), distinct.end());
    if (holdout_count >= speakers.size()) {
        throw ValidationError("holdout count " + std::to_string(holdout_count) + " must be smaller than the " +
                              std::to_string(speakers.size()) + " distinct speakers");
    }

    // Partial Fisher-Yates: the first holdout_count slots are a uniform sample.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < holdout_count; ++i) {
        std::swap(speakers[i], speakers[i + uniform_below(rng, speakers.size() - i)]);
    }
    std::vector<std::string> holdout(speakers.begin(), speakers.begin() + static_cast<std::ptrdiff_t>(holdout_count));
    std::sort(holdout.begin(), holdout.end());
    const std::unordered_set<std::string> held(holdout.begin(), holdout.end());

    std::vector<SegmentRecord> train, eval;
    for (const auto& s : manifest.segments) (held.contains(s.speaker_id) ? eval : train).push_back(s);

    const json detail = {{"seed", seed}, {"holdout_count", holdout_count}, {"holdout_speakers", holdout}};
    SplitResult r;
    r.seed = seed;
    r.holdout_speakers = std::move(holdout);
    json train_detail = detail, eval_detail = detail;
    train_detail["side"] = "train";
    eval_detail["side"] = "eval";
    r.train = manifest.derive(std::move(train), entry(kSplit, train_detail));
    r.eval = manifest.derive(std::move(eval), entry(kSplit, eval_detail));
    return r;
}

// ---------------------------------------------------------------------------
// Configuration

NormalizerConfig normalizer_from_json(const json& j) {
    NormalizerConfig n;
    if (j.is_null()) return n;
    if (!j.is_object()) throw ConfigError("normalizer must be an object");
    n.strip_diacritics = j.value("strip_diacritics", n.strip_diacritics);
    n.unify_alef_forms = j.value("unify_alef_forms", n.unify_alef_forms);
    n.remove_punctuation = j.value("remove_punctuation", n.remove_punctuation);
    n.unicode_normalize = j.value("unicode_normalize", n.unicode_normalize);
    return n;
}

json to_json(const NormalizerConfig& n) {
    return {{"strip_diacritics", n.strip_diacritics},
            {"unify_alef_forms", n.unify_alef_forms},
            {"remove_punctuation", n.remove_punctuation},
            {"unicode_normalize", n.unicode_normalize}};
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

AdapterSpec resolve_adapter(AdapterSpec spec, const std::filesystem::path& base) {
    // Relative program paths ("./bin/x", "tools/x") are relative to the config;
    // bare names go through PATH.
    auto& prog = spec.command.front();
    if (prog.find('/') != std::string::npos && prog.front() != '/') prog = (base / prog).lexically_normal().string();
    return spec;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
    PipelineConfig c;
    try {
        c.input_manifest = resolve(base_dir, j.at("input_manifest").get<std::string>());
        c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
        if (auto s = j.find("stages"); s != j.end()) {
            c.stages.denoise = s->value("denoise", c.stages.denoise);
            c.stages.asr = s->value("asr", c.stages.asr);
            c.stages.filter = s->value("filter", c.stages.filter);
            c.stages.label = s->value("label", c.stages.label);
            c.stages.split = s->value("split", c.stages.split);
        }
        if (auto a = j.find("adapters"); a != j.end()) {
            if (auto d = a->find("denoise"); d != a->end()) c.denoiser = resolve_adapter(AdapterSpec::from_json(*d), base_dir);
            if (auto d = a->find("asr"); d != a->end()) c.asr = resolve_adapter(AdapterSpec::from_json(*d), base_dir);
            if (auto d = a->find("classifiers"); d != a->end()) {
                for (const auto& spec : *d) c.classifiers.push_back(resolve_adapter(AdapterSpec::from_json(spec), base_dir));
            }
        }
        if (auto n = j.find("normalizer"); n != j.end()) c.normalizer = normalizer_from_json(*n);
        c.filter_threshold = j.value("filter_threshold", c.filter_threshold);
        c.label_mapping = resolve(base_dir, j.value("label_mapping", std::string()));
        c.dialect_list = resolve(base_dir, j.value("dialect_list", std::string()));
        c.holdout_count = j.value("holdout_count", c.holdout_count);
        c.seed = j.value("seed", c.seed);
        c.jobs = j.value("jobs", c.jobs);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError("pipeline config " + path.string() + " is not valid JSON");
    return from_json(j, std::filesystem::absolute(path).parent_path());
}

json PipelineConfig::to_json() const {
    json adapters = json::object();
    if (denoiser) adapters["denoise"] = denoiser->to_json();
    if (asr) adapters["asr"] = asr->to_json();
    json cls = json::array();
    for (const auto& c : classifiers) cls.push_back(c.to_json());
    adapters["classifiers"] = cls;
    return {{"input_manifest", input_manifest.string()},
            {"output_dir", output_dir.string()},
            {"stages",
             {{"denoise", stages.denoise},
              {"asr", stages.asr},
              {"filter", stages.filter},
              {"label", stages.label},
              {"split", stages.split}}},
            {"adapters", adapters},
            {"normalizer", curator::to_json(normalizer)},
            {"filter_threshold", filter_threshold},
            {"label_mapping", label_mapping.string()},
            {"dialect_list", dialect_list.string()},
            {"holdout_count", holdout_count},
            {"seed", seed},
            {"jobs", jobs}};
}

void PipelineConfig::validate() const {
    if (input_manifest.empty()) throw ConfigError("input_manifest is required");
    if (output_dir.empty()) throw ConfigError("output_dir is required");
    if (stages.denoise && !denoiser) throw ConfigError("denoise stage enabled but adapters.denoise is missing");
    if (stages.asr && !asr) throw ConfigError("asr stage enabled but adapters.asr is missing");
    if (stages.label && label_mapping.empty() && !classifiers.empty()) {
        throw ConfigError("label stage needs label_mapping when classifiers are configured");
    }
    if (!(filter_threshold >= 0.0)) throw ConfigError("filter_threshold must be >= 0");
    if (jobs == 0) throw ConfigError("jobs must be >= 1");
    if (denoiser && denoiser->kind != AdapterKind::denoise) throw ConfigError("adapters.denoise has the wrong kind");
    if (asr && asr->kind != AdapterKind::asr) throw ConfigError("adapters.asr has the wrong kind");
    for (const auto& c : classifiers) {
        if (c.kind != AdapterKind::classify) throw ConfigError("classifier '" + c.name + "' has the wrong kind");
    }
}

json PipelineReport::to_json() const {
    json st = json::array();
    for (const auto& s : stages) {
        st.push_back({{"name", s.name},
                      {"enabled", s.enabled},
                      {"input", s.input},
                      {"output", s.output},
                      {"rejected", s.rejected},
                      {"seconds", s.seconds},
                      {"snapshot", s.snapshot}});
    }
    json j = {{"completed", completed}, {"stages", st}, {"retained_hours", retained_hours}};
    if (!completed) {
        j["halted_stage"] = halted_stage;
        j["error"] = error;
    }
    return j;
}

json to_json(const CorpusStats& stats) {
    json g = json::object();
    for (const auto& [gender, f] : stats.gender_fractions) g[std::string(to_string(gender))] = f;
    return {{"segments", stats.segment_count},
            {"total_hours", stats.total_hours},
            {"speakers", stats.speaker_count},
            {"gender_fractions", g},
            {"dialect_histogram", stats.dialect_histogram}};
}

// ---------------------------------------------------------------------------
// Whole run

PipelineResult run_pipeline(const PipelineConfig& config) {
    config.validate();
    const auto catalog =
        config.dialect_list.empty() ? DialectCatalog::default_catalog() : DialectCatalog::load(config.dialect_list);
    std::optional<LabelMapping> mapping;
    if (config.stages.label && !config.label_mapping.empty()) {
        mapping = LabelMapping::load(config.label_mapping, catalog);
        mapping->check_covers(config.classifiers);
    }
    const InvokeOptions opts{config.jobs};
    const auto& out_dir = config.output_dir;
    std::filesystem::create_directories(out_dir);

    PipelineResult result;
    CorpusManifest current = load_manifest(config.input_manifest.string(), catalog);
    if (current.metadata.created_at.empty()) current.metadata.created_at = utc_timestamp();

    int index = 0;
    auto run_stage = [&](const char* name, bool enabled, const std::function<StageOutput(const CorpusManifest&)>& fn) {
        StageReport rep;
        rep.name = name;
        rep.enabled = enabled;
        rep.input = current.segments.size();
        const auto t0 = std::chrono::steady_clock::now();
        StageOutput out;
        if (enabled) {
            out = fn(current);
        } else {
            out.manifest = current.derive(current.segments, entry(name, {{"skipped", true}}));
        }
        rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rep.output = out.manifest.segments.size();
        rep.rejected = out.rejections.size();
        char prefix[8];
        std::snprintf(prefix, sizeof prefix, "%02d-", index++);
        const auto snap = out_dir / (std::string(prefix) + name + ".dfm");
        save_manifest(out.manifest, snap.string());
        rep.snapshot = snap.string();
        spdlog::info("{}: {} in, {} out, {} rejected ({:.2f} s)", name, rep.input, rep.output, rep.rejected,
                     rep.seconds);
        result.rejections.append(out.rejections);
        result.report.stages.push_back(std::move(rep));
        current = std::move(out.manifest);
    };

    auto finish = [&] {
        result.final_manifest = current;
        result.stats = corpus_stats(current);
        result.report.retained_hours = result.stats.total_hours;
        json report = result.report.to_json();
        report["stats"] = to_json(result.stats);
        report["config"] = config.to_json();
        if (result.split) {
            report["split"] = {{"seed", result.split->seed},
                               {"holdout_speakers", result.split->holdout_speakers},
                               {"train_segments", result.split->train.segments.size()},
                               {"eval_segments", result.split->eval.segments.size()}};
        }
        write_file_atomic(out_dir / "rejections.tsv", result.rejections.to_tsv());
        write_file_atomic(out_dir / "report.json", report.dump(2) + "\n");
    };

    try {
        run_stage(kIngest, true, [](const CorpusManifest& m) { return ingest_stage(m); });
        run_stage(kDenoise, config.stages.denoise, [&](const CorpusManifest& m) {
            return denoise_stage(m, *config.denoiser, (out_dir / "denoised").string(), opts);
        });
        run_stage(kAsr, config.stages.asr,
                  [&](const CorpusManifest& m) { return transcribe_stage(m, *config.asr, opts); });
        run_stage(kFilter, config.stages.filter, [&](const CorpusManifest& m) {
            return filter_mismatched(m, config.normalizer, config.filter_threshold);
        });
        run_stage(kLabel, config.stages.label, [&](const CorpusManifest& m) {
            LabelMapping empty;
            try {
                auto labeled = assign_dialects(m, config.classifiers, mapping ? *mapping : empty, opts);
                return StageOutput{std::move(labeled.manifest), {}};
            } catch (const ConfigError& e) {
                throw StageError(kLabel, e.what());
            }
        });

        StageReport rep;
        rep.name = kSplit;
        rep.enabled = config.stages.split;
        rep.input = current.segments.size();
        if (config.stages.split) {
            const auto t0 = std::chrono::steady_clock::now();
            SplitResult split;
            try {
                split = speaker_disjoint_split(current, config.holdout_count, config.seed);
            } catch (const ValidationError& e) {
                throw StageError(kSplit, e.what());
            }
            char prefix[8];
            std::snprintf(prefix, sizeof prefix, "%02d-", index);
            save_manifest(split.train, (out_dir / (std::string(prefix) + "split.train.dfm")).string());
            save_manifest(split.eval, (out_dir / (std::string(prefix) + "split.eval.dfm")).string());
            rep.output = split.train.segments.size() + split.eval.segments.size();
            rep.snapshot = (out_dir / (std::string(prefix) + "split.{train,eval}.dfm")).string();
            rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            spdlog::info("split: {} train / {} eval segments, {} held-out speakers", split.train.segments.size(),
                         split.eval.segments.size(), split.holdout_speakers.size());
            result.split = std::move(split);
        } else {
            rep.output = rep.input;
        }
        result.report.stages.push_back(std::move(rep));
        result.report.completed = true;
    } catch (const StageError& e) {
        spdlog::error("pipeline halted: {}", e.what());
        result.report.completed = false;
        result.report.halted_stage = e.stage();
        result.report.error = e.what();
    }
    finish();
    return result;
}

}  // namespace curator
