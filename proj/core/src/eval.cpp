#include "curator/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "curator/csv.hpp"
#include "curator/error.hpp"
#include "curator/random.hpp"

namespace curator {

std::string_view to_string(EmbedderSource s) {
    return s == EmbedderSource::spectral ? "spectral-desk" : "external-adapter";
}

SpeakerEmbedding make_embedding(std::vector<double> raw, EmbedderSource source) {
    if (raw.empty()) throw ValidationError("embedding is empty");
    double sq = 0.0;
    for (double x : raw) {
        if (!std::isfinite(x)) throw ValidationError("embedding has a non-finite component");
        sq += x * x;
    }
    if (!(sq > 0.0)) throw ValidationError("embedding has zero norm");
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : raw) x *= inv;
    return {std::move(raw), source};
}

SpeakerEmbedding spectral_speaker_embedding(const MelMatrix& mel) {
    const std::size_t t = mel.frames();
    if (t < 2) throw ValidationError("spectral embedding needs at least 2 frames, got " + std::to_string(t));
    const std::size_t bands = mel.n_mels();
    std::vector<double> v(2 * bands);
    for (std::size_t m = 0; m < bands; ++m) {
        auto row = mel.row(m);
        double mean = 0.0;
        for (double x : row) mean += x;
        mean /= static_cast<double>(t);
        double var = 0.0;
        for (double x : row) var += (x - mean) * (x - mean);
        var /= static_cast<double>(t);
        v[m] = mean;
        v[bands + m] = std::sqrt(var);
    }
    return make_embedding(std::move(v), EmbedderSource::spectral);
}

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
    if (a.vector.size() != b.vector.size()) {
        throw ValidationError("embedding dimensions differ: " + std::to_string(a.vector.size()) + " vs " +
                              std::to_string(b.vector.size()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.vector.size(); ++i) dot += a.vector[i] * b.vector[i];
    return std::clamp(dot, -1.0, 1.0);
}

SpeakerEmbedding SpectralEmbedder::embed(const std::string& audio_path) {
    return spectral_speaker_embedding(log_mel_spectrogram(read_wav(audio_path), config_));
}

namespace {

SpeakerEmbedding embedding_from_payload(const nlohmann::json& payload) {
    auto e = payload.find("embedding");
    if (e == payload.end() || !e->is_array()) throw ValidationError("embed response lacks an embedding array");
    std::vector<double> v;
    v.reserve(e->size());
    for (const auto& x : *e) {
        if (!x.is_number()) throw ValidationError("embedding component is not a number");
        v.push_back(x.get<double>());
    }
    return make_embedding(std::move(v), EmbedderSource::adapter);
}

}  // namespace

void AdapterEmbedder::prefetch(std::span<const std::string> audio_paths, const InvokeOptions& options) {
    std::vector<AdapterEnvelope> requests;
    {
        std::lock_guard lock(mu_);
        for (const auto& p : audio_paths) {
            if (cache_.contains(p)) continue;
            if (std::any_of(requests.begin(), requests.end(),
                            [&](const auto& r) { return r.payload["audio_path"] == p; })) {
                continue;
            }
            requests.push_back(embed_request(std::to_string(requests.size()), p));
        }
    }
    if (requests.empty()) return;
    auto responses = invoke_adapter(spec_, requests, options);
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < responses.size(); ++i) {
        if (!responses[i].ok()) continue;
        try {
            cache_.emplace(requests[i].payload["audio_path"].get<std::string>(),
                           embedding_from_payload(responses[i].envelope->payload));
        } catch (const ValidationError& e) {
            spdlog::warn("embed adapter '{}': {}", spec_.name, e.what());
        }
    }
}

SpeakerEmbedding AdapterEmbedder::embed(const std::string& audio_path) {
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(audio_path); it != cache_.end()) return it->second;
    }
    std::vector<AdapterEnvelope> req{embed_request("0", audio_path)};
    auto resp = invoke_adapter(spec_, req);
    if (!resp.front().ok()) {
        throw IoError("embed adapter '" + spec_.name + "' failed for " + audio_path + ": " +
                      resp.front().failure->message);
    }
    auto emb = embedding_from_payload(resp.front().envelope->payload);
    std::lock_guard lock(mu_);
    cache_.emplace(audio_path, emb);
    return emb;
}

SpeakerEmbedding CachingEmbedder::embed(const std::string& audio_path) {
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(audio_path); it != cache_.end()) return it->second;
    }
    auto emb = inner_.embed(audio_path);
    std::lock_guard lock(mu_);
    cache_.emplace(audio_path, emb);
    return emb;
}

SegmentRecord select_reference(const CorpusManifest& manifest, const std::string& speaker_id, double min_duration_s,
                               std::uint64_t seed) {
    std::vector<const SegmentRecord*> candidates;
    bool speaker_found = false;
    for (const auto& s : manifest.segments) {
        if (s.speaker_id != speaker_id) continue;
        speaker_found = true;
        if (s.duration_s >= min_duration_s) candidates.push_back(&s);
    }
    if (!speaker_found) throw ValidationError("speaker '" + speaker_id + "' is not in the manifest");
    if (candidates.empty()) {
        throw ValidationError("speaker '" + speaker_id + "' has no segment of at least " +
                              std::to_string(min_duration_s) + " s");
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const auto* a, const auto* b) { return a->segment_id < b->segment_id; });
    std::mt19937_64 rng(seed);
    return *candidates[uniform_below(rng, candidates.size())];
}

SynthesisResult synthesize_set(const AdapterSpec& synthesizer, const CorpusManifest& eval_manifest,
                               const EvalRunConfig& config, const SynthesisOptions& synthesis,
                               const InvokeOptions& options) {
    if (eval_manifest.segments.empty()) throw ValidationError("nothing to synthesize");
    std::vector<const SegmentRecord*> order;
    for (const auto& s : eval_manifest.segments) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->segment_id < b->segment_id; });

    SynthesisResult result;
    std::vector<AdapterEnvelope> requests;
    std::vector<std::string> references;
    for (const auto* seg : order) {
        std::string reference;
        try {
            reference = select_reference(eval_manifest, seg->speaker_id, config.min_reference_s,
                                         derive_seed(config.seed, "conditioning:" + seg->segment_id))
                            .audio_path;
        } catch (const ValidationError& e) {
            spdlog::warn("{}: {}", seg->segment_id, e.what());
            result.failed.push_back(seg->segment_id);
            continue;
        }
        std::optional<std::string> dialect;
        if (synthesis.pass_dialect && seg->dialect) dialect = seg->dialect->code();
        requests.push_back(synthesize_request(seg->segment_id, seg->transcript, reference, synthesis.language, dialect,
                                              synthesis.output_dir));
        references.push_back(std::move(reference));
    }

    const auto responses = invoke_adapter(synthesizer, requests, options);
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const auto& r = responses[i];
        if (r.ok() && r.envelope->payload.contains("audio_path") && r.envelope->payload["audio_path"].is_string()) {
            result.items.push_back({r.request_id, r.envelope->payload["audio_path"].get<std::string>(), references[i]});
        } else {
            spdlog::warn("{}: synthesis failed: {}", r.request_id,
                         r.failure ? r.failure->message : std::string("response without audio_path"));
            result.failed.push_back(r.request_id);
        }
    }
    std::sort(result.failed.begin(), result.failed.end());
    return result;
}

nlohmann::json to_json(const SynthSet& set) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& item : set) {
        nlohmann::json j{{"segment_id", item.segment_id}, {"audio_path", item.audio_path}};
        if (!item.conditioning_reference.empty()) j["conditioning_reference"] = item.conditioning_reference;
        out.push_back(std::move(j));
    }
    return out;
}

SynthSet synth_set_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ValidationError("synth set must be a JSON array");
    SynthSet set;
    for (const auto& e : j) {
        try {
            set.push_back({e.at("segment_id").get<std::string>(), e.at("audio_path").get<std::string>(),
                           e.value("conditioning_reference", std::string())});
        } catch (const nlohmann::json::exception& ex) {
            throw ValidationError(std::string("synth set entry: ") + ex.what());
        }
    }
    return set;
}

void EvalRunConfig::validate() const {
    if (runs == 0) throw ValidationError("runs must be >= 1");
    if (!(min_reference_s > 0.0)) throw ValidationError("min_reference_s must be > 0");
}

double average_runs(std::span<const double> per_run) {
    if (per_run.empty()) throw ValidationError("no runs to average");
    double sum = 0.0;
    for (double v : per_run) sum += v;
    return sum / static_cast<double>(per_run.size());
}

SecsRun secs_run(const SynthSet& synth, const CorpusManifest& eval_manifest, const EvalRunConfig& config,
                 std::size_t run_index, SpeakerEmbedder& embedder, const ReferencePicker& picker) {
    config.validate();
    if (synth.empty()) throw ValidationError("nothing to evaluate");

    std::map<std::string_view, const SegmentRecord*> by_id;
    for (const auto& s : eval_manifest.segments) by_id.emplace(s.segment_id, &s);

    std::vector<const SynthItem*> items;
    items.reserve(synth.size());
    for (const auto& item : synth) items.push_back(&item);
    std::sort(items.begin(), items.end(), [](const auto* a, const auto* b) { return a->segment_id < b->segment_id; });

    const std::uint64_t run_seed = config.seed + run_index;
    SecsRun run;
    double sum = 0.0;
    for (const SynthItem* item : items) {
        auto it = by_id.find(item->segment_id);
        if (it == by_id.end()) {
            throw ValidationError("synthesized item '" + item->segment_id + "' is not in the eval manifest");
        }
        const SegmentRecord& target = *it->second;

        std::string reference;
        if (picker) {
            reference = picker(*item, target, run_index);
        } else if (config.reference_mode == ReferenceMode::conditioning) {
            if (item->conditioning_reference.empty()) {
                throw ValidationError("item '" + item->segment_id + "' has no conditioning reference");
            }
            reference = item->conditioning_reference;
        } else {
            reference = select_reference(eval_manifest, target.speaker_id, config.min_reference_s,
                                         derive_seed(run_seed, item->segment_id))
                            .audio_path;
        }

        double score;
        try {
            score = cosine_similarity(embedder.embed(item->audio_path), embedder.embed(reference));
        } catch (const IoError& e) {
            spdlog::warn("secs: skipping {}: {}", item->segment_id, e.what());
            run.skipped.push_back(item->segment_id);
            continue;
        } catch (const ValidationError& e) {
            spdlog::warn("secs: skipping {}: {}", item->segment_id, e.what());
            run.skipped.push_back(item->segment_id);
            continue;
        }
        sum += score;
        run.item_scores.emplace_back(item->segment_id, score);
    }
    if (run.item_scores.empty()) throw ValidationError("no synthesized item could be embedded");
    run.mean = sum / static_cast<double>(run.item_scores.size());
    return run;
}

MosTable parse_mos_csv(std::string_view text) {
    auto rows = parse_csv(text);
    if (rows.empty()) throw ValidationError("MOS export is empty");
    const auto& header = rows.front();
    if (header.size() < 4 || header[0] != "model_name" || header[1] != "mos" || header[2] != "count" ||
        header[3] != "std") {
        throw ValidationError("MOS export header must be model_name,mos,count,std");
    }
    auto number = [](const std::string& s, std::size_t line, const char* field) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size()) throw ParseError(line, field, "not a number: '" + s + "'");
        return v;
    };
    MosTable table;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 4) throw ParseError(i + 1, "", "expected 4 fields");
        MosRow row;
        row.mos = number(r[1], i + 1, "mos");
        auto count = number(r[2], i + 1, "count");
        row.count = count ? static_cast<std::size_t>(*count) : 0;
        row.stddev = number(r[3], i + 1, "std");
        table[r[0]] = row;
    }
    return table;
}

bool EvalReport::has_mos() const {
    return std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.mos.has_value(); });
}

EvalReport evaluate(std::span<const ModelSynth> models, const CorpusManifest& eval_manifest,
                    const EvalRunConfig& config, SpeakerEmbedder& embedder, const EvalOptions& options) {
    config.validate();
    EvalReport report;
    report.config = config;

    std::vector<const ModelSynth*> ordered;
    for (const auto& m : models) ordered.push_back(&m);
    std::stable_partition(ordered.begin(), ordered.end(), [](const auto* m) { return m->name == "baseline"; });

    std::map<std::string_view, const SegmentRecord*> by_id;
    for (const auto& s : eval_manifest.segments) by_id.emplace(s.segment_id, &s);

    CachingEmbedder cached(embedder);
    if (!options.asr) report.annotations.push_back("WER not computed: no ASR adapter configured");

    for (const ModelSynth* model : ordered) {
        ReportRow row;
        row.model = model->name;

        try {
            for (std::size_t r = 0; r < config.runs; ++r) {
                auto run = secs_run(model->items, eval_manifest, config, r, cached, options.picker);
                row.secs_runs.push_back(run.mean);
                if (!run.skipped.empty()) {
                    report.annotations.push_back(model->name + ": run " + std::to_string(r) + " skipped " +
                                                 std::to_string(run.skipped.size()) + " unreadable item(s)");
                }
            }
            row.secs = average_runs(row.secs_runs);
        } catch (const ValidationError& e) {
            row.secs_runs.clear();
            report.annotations.push_back(model->name + ": SECS disabled: " + e.what());
        }

        if (options.asr) {
            std::vector<AdapterEnvelope> requests;
            for (const auto& item : model->items) requests.push_back(asr_request(item.segment_id, item.audio_path));
            std::vector<AdapterResponse> responses;
            try {
                responses = invoke_adapter(*options.asr, requests, options.invoke);
            } catch (const Error& e) {
                report.annotations.push_back(model->name + ": WER disabled: " + e.what());
            }
            if (all_spawn_failures(responses)) {
                report.annotations.push_back(model->name + ": WER disabled: " + responses.front().failure->message);
            } else if (!responses.empty()) {
                EditCounts pooled;
                std::size_t answered = 0;
                for (std::size_t i = 0; i < responses.size(); ++i) {
                    const auto& resp = responses[i];
                    auto tgt = by_id.find(model->items[i].segment_id);
                    if (tgt == by_id.end() || !resp.ok()) continue;
                    auto text = resp.envelope->payload.find("text");
                    if (text == resp.envelope->payload.end() || !text->is_string()) continue;
                    pooled += word_edit_distance(normalize_text(tgt->second->transcript, options.normalizer),
                                                 normalize_text(text->get<std::string>(), options.normalizer));
                    ++answered;
                }
                if (answered == 0) {
                    report.annotations.push_back(model->name + ": WER disabled: ASR answered no item");
                } else {
                    row.wer_counts = pooled;
                    row.wer = error_rate(pooled);
                    if (answered < responses.size()) {
                        report.annotations.push_back(model->name + ": WER over " + std::to_string(answered) +
                                                     " of " + std::to_string(responses.size()) + " items");
                    }
                }
            }
        }

        report.rows.push_back(std::move(row));
    }
    if (options.mos) merge_mos(report, *options.mos);
    return report;
}

void merge_mos(EvalReport& report, const MosTable& mos) {
    for (auto& row : report.rows) {
        auto it = mos.find(row.model);
        if (it != mos.end() && it->second.mos) {
            row.mos = it->second.mos;
        } else {
            row.mos.reset();
            report.annotations.push_back(row.model + ": no MOS data");
        }
    }
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
    if (!v) return nullptr;
    if (std::isinf(*v)) return "inf";
    return *v;
}

std::optional<double> number_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    return j.get<double>();
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row{{"model", r.model},
                           {"wer", optional_number(r.wer)},
                           {"secs", optional_number(r.secs)},
                           {"secs_runs", r.secs_runs},
                           {"mos", optional_number(r.mos)}};
        if (r.wer_counts) {
            row["wer_counts"] = {{"substitutions", r.wer_counts->substitutions},
                                 {"deletions", r.wer_counts->deletions},
                                 {"insertions", r.wer_counts->insertions},
                                 {"reference_length", r.wer_counts->reference_length}};
        }
        rows.push_back(std::move(row));
    }
    return {{"rows", rows},
            {"config",
             {{"runs", report.config.runs},
              {"min_reference_s", report.config.min_reference_s},
              {"seed", report.config.seed},
              {"reference_mode",
               report.config.reference_mode == ReferenceMode::independent ? "independent" : "conditioning"}}},
            {"wer_aggregation", "corpus-level pooled edit counts"},
            {"annotations", report.annotations}};
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport report;
    try {
        for (const auto& r : j.at("rows")) {
            ReportRow row;
            row.model = r.at("model").get<std::string>();
            row.wer = number_from_json(r.value("wer", nlohmann::json()));
            row.secs = number_from_json(r.value("secs", nlohmann::json()));
            row.mos = number_from_json(r.value("mos", nlohmann::json()));
            row.secs_runs = r.value("secs_runs", std::vector<double>{});
            if (auto c = r.find("wer_counts"); c != r.end()) {
                row.wer_counts = EditCounts{c->at("substitutions").get<std::size_t>(),
                                            c->at("deletions").get<std::size_t>(),
                                            c->at("insertions").get<std::size_t>(),
                                            c->at("reference_length").get<std::size_t>()};
            }
            report.rows.push_back(std::move(row));
        }
        const auto& c = j.at("config");
        report.config.runs = c.at("runs").get<std::size_t>();
        report.config.min_reference_s = c.at("min_reference_s").get<double>();
        report.config.seed = c.at("seed").get<std::uint64_t>();
        report.config.reference_mode =
            c.at("reference_mode").get<std::string>() == "conditioning" ? ReferenceMode::conditioning
                                                                         : ReferenceMode::independent;
        report.annotations = j.value("annotations", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("report JSON: ") + e.what());
    }
    return report;
}

namespace {

std::string fixed(double v, int decimals) {
    if (std::isinf(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string exact(double v) {
    if (std::isinf(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
    const bool mos = report.has_mos();
    std::ostringstream out;
    if (format == ReportFormat::csv) {
        out << "model,wer,secs" << (mos ? ",mos" : "") << '\n';
        for (const auto& r : report.rows) {
            out << csv_field(r.model) << ',' << (r.wer ? exact(*r.wer) : "") << ',' << (r.secs ? exact(*r.secs) : "");
            if (mos) out << ',' << (r.mos ? exact(*r.mos) : "");
            out << '\n';
        }
        return out.str();
    }

    out << "| Model | WER | SECS |" << (mos ? " MOS |" : "") << '\n';
    out << "|---|---|---|" << (mos ? "---|" : "") << '\n';
    for (const auto& r : report.rows) {
        out << "| " << r.model << " | " << (r.wer ? fixed(*r.wer * 100.0, 2) : "n/a") << " | "
            << (r.secs ? fixed(*r.secs, 3) : "n/a") << " |";
        if (mos) out << ' ' << (r.mos ? fixed(*r.mos, 2) : "n/a") << " |";
        out << '\n';
    }
    out << "\nWER: corpus-level, pooled edit counts sum(S+D+I)/sum(N), in percent. "
        << "SECS: mean over " << report.config.runs << " run(s), references of at least "
        << fixed(report.config.min_reference_s, 1) << " s ("
        << (report.config.reference_mode == ReferenceMode::independent ? "independent" : "conditioning")
        << " reference, seed " << report.config.seed << ").\n";
    if (!report.annotations.empty()) {
        out << "\nNotes:\n";
        for (const auto& a : report.annotations) out << "- " << a << '\n';
    }
    return out.str();
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
    auto rows = parse_csv(text);
    if (rows.empty()) throw ValidationError("report CSV is empty");
    const auto& header = rows.front();
    if (header.size() < 3 || header[0] != "model" || header[1] != "wer" || header[2] != "secs") {
        throw ValidationError("report CSV header must start with model,wer,secs");
    }
    const bool mos = header.size() >= 4 && header[3] == "mos";
    auto number = [](const std::string& s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        if (s == "inf") return std::numeric_limits<double>::infinity();
        return std::stod(s);
    };
    std::vector<ReportRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < header.size()) throw ParseError(i + 1, "", "too few fields");
        ReportRow row;
        row.model = r[0];
        row.wer = number(r[1]);
        row.secs = number(r[2]);
        if (mos) row.mos = number(r[3]);
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace curator
