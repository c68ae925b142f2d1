#include "cli.hpp"

#include <pthread.h>
#include <signal.h>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "curator/annotation.hpp"
#include "curator/annotation_server.hpp"
#include "curator/eval.hpp"
#include "curator/file_util.hpp"
#include "curator/pipeline.hpp"
#include "curator/sequence.hpp"

namespace curator::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::size_t jobs = 1;
    std::string log_level = "warn";
};

struct NormalizerFlags {
    std::string file;
    bool strip_diacritics = false;
    bool unify_alef = false;
    bool remove_punctuation = false;
    bool no_nfc = false;

    void attach(CLI::App* sub) {
        sub->add_option("--normalizer", file, "Normalizer profile (JSON); flags below override it");
        sub->add_flag("--strip-diacritics", strip_diacritics, "Remove Arabic diacritics before scoring");
        sub->add_flag("--unify-alef", unify_alef, "Map alef variants to bare alef");
        sub->add_flag("--remove-punctuation", remove_punctuation, "Drop punctuation");
        sub->add_flag("--no-nfc", no_nfc, "Skip Unicode NFC normalization");
    }

    NormalizerConfig resolve() const {
        NormalizerConfig cfg;
        if (!file.empty()) {
            json j = json::parse(read_file(file), nullptr, false);
            if (j.is_discarded()) throw ConfigError("normalizer profile " + file + " is not valid JSON");
            cfg = normalizer_from_json(j);
        }
        if (strip_diacritics) cfg.strip_diacritics = true;
        if (unify_alef) cfg.unify_alef_forms = true;
        if (remove_punctuation) cfg.remove_punctuation = true;
        if (no_nfc) cfg.unicode_normalize = false;
        return cfg;
    }
};

DialectCatalog catalog_from(const std::string& path) {
    return path.empty() ? DialectCatalog::default_catalog() : DialectCatalog::load(path);
}

json load_json_file(const std::string& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + " is not valid JSON");
    return j;
}

AdapterSpec load_adapter(const std::string& path) {
    auto spec = AdapterSpec::from_json(load_json_file(path));
    // Relative executables in a spec file are relative to the file.
    if (!spec.command.empty() && spec.command[0].find('/') != std::string::npos && fs::path(spec.command[0]).is_relative()) {
        spec.command[0] = (fs::path(path).parent_path() / spec.command[0]).string();
    }
    return spec;
}

void write_rejects(const std::string& path, const RejectionLog& log) {
    if (!path.empty()) write_file_atomic(path, log.to_tsv());
}

std::pair<std::string, std::string> name_value(const std::string& s, const char* flag) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
        throw ConfigError(std::string(flag) + " expects NAME=FILE, got '" + s + "'");
    }
    return {s.substr(0, eq), s.substr(eq + 1)};
}

void print_stage(std::ostream& out, const std::string& stage, std::size_t in, const StageOutput& o) {
    out << stage << ": " << in << " in, " << o.manifest.segments.size() << " kept, " << o.rejections.size()
        << " rejected\n";
}

json option_value(const CLI::Option* opt) {
    if (opt->count() == 0) return opt->get_default_str();
    const auto& r = opt->results();
    if (r.size() == 1) return r.front();
    return r;
}

void print_resolved(std::ostream& err, const CLI::App& app, const CLI::App* sub, const Globals& g) {
    json options = json::object();
    for (const auto* opt : sub->get_options()) {
        if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
        options[opt->get_name()] = option_value(opt);
    }
    json globals{{"--jobs", g.jobs}, {"--log-level", g.log_level}};
    if (const auto* c = app.get_option_no_throw("--config"); c && c->count() > 0) globals["--config"] = c->as<std::string>();
    err << json{{"resolved_config", {{"subcommand", sub->get_name()}, {"global", globals}, {"options", options}}}}.dump()
        << '\n';
}

json error_json(const std::string& subcommand, const std::string& kind, const std::string& message) {
    return {{"error", {{"kind", kind}, {"subcommand", subcommand}, {"message", message}}}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Corpus curation and evaluation toolkit for dialect-aware zero-shot TTS", "curator"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file with flag defaults ([subcommand] sections)");
    Globals g;
    app.add_option("--jobs,-j", g.jobs, "Parallel adapter processes and workers")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
        ->capture_default_str();

    std::function<int()> action;

    // -- ingest
    std::string manifest, out_path, rejects, dialects, adapter_path, audio_dir;
    auto* ingest = app.add_subcommand("ingest", "Admission check: drop segments with bad duration or sample rate");
    ingest->add_option("--manifest", manifest, "Input manifest")->required();
    ingest->add_option("--out", out_path, "Output manifest")->required();
    ingest->add_option("--rejects", rejects, "Rejection log (TSV)");
    ingest->add_option("--dialects", dialects, "Dialect list (one code per line)");
    ingest->final_callback([&] {
        action = [&] {
            const auto m = load_manifest(manifest, catalog_from(dialects));
            const auto o = ingest_stage(m);
            save_manifest(o.manifest, out_path);
            write_rejects(rejects, o.rejections);
            print_stage(out, "ingest", m.segments.size(), o);
            return kExitOk;
        };
    });

    // -- stats
    bool stats_json = false;
    auto* stats = app.add_subcommand("stats", "Corpus statistics");
    stats->add_option("--manifest", manifest, "Manifest")->required();
    stats->add_option("--dialects", dialects, "Dialect list");
    stats->add_flag("--json", stats_json, "Print JSON");
    stats->final_callback([&] {
        action = [&] {
            const auto s = corpus_stats(load_manifest(manifest, catalog_from(dialects)));
            if (stats_json) {
                out << to_json(s).dump(2) << '\n';
                return kExitOk;
            }
            out << "segments: " << s.segment_count << '\n'
                << "hours: " << std::fixed << std::setprecision(3) << s.total_hours << '\n'
                << "speakers: " << s.speaker_count << '\n';
            out << "gender:";
            for (const auto& [gender, f] : s.gender_fractions) out << ' ' << to_string(gender) << '=' << f;
            out << "\ndialects:\n";
            for (const auto& [code, n] : s.dialect_histogram) out << "  " << code << ' ' << n << '\n';
            out.unsetf(std::ios::fixed);
            return kExitOk;
        };
    });

    // -- denoise
    auto* denoise = app.add_subcommand("denoise", "Run the denoise adapter over every segment");
    denoise->add_option("--manifest", manifest, "Input manifest")->required();
    denoise->add_option("--out", out_path, "Output manifest")->required();
    denoise->add_option("--adapter", adapter_path, "Denoise adapter spec (JSON)")->required();
    denoise->add_option("--audio-dir", audio_dir, "Directory for denoised audio")->required();
    denoise->add_option("--rejects", rejects, "Rejection log (TSV)");
    denoise->add_option("--dialects", dialects, "Dialect list");
    denoise->final_callback([&] {
        action = [&] {
            const auto m = load_manifest(manifest, catalog_from(dialects));
            const auto o = denoise_stage(m, load_adapter(adapter_path), audio_dir, {g.jobs});
            save_manifest(o.manifest, out_path);
            write_rejects(rejects, o.rejections);
            print_stage(out, "denoise", m.segments.size(), o);
            return kExitOk;
        };
    });

    // -- transcribe
    auto* transcribe = app.add_subcommand("transcribe", "Attach ASR hypotheses");
    transcribe->add_option("--manifest", manifest, "Input manifest")->required();
    transcribe->add_option("--out", out_path, "Output manifest")->required();
    transcribe->add_option("--adapter", adapter_path, "ASR adapter spec (JSON)")->required();
    transcribe->add_option("--rejects", rejects, "Rejection log (TSV)");
    transcribe->add_option("--dialects", dialects, "Dialect list");
    transcribe->final_callback([&] {
        action = [&] {
            const auto m = load_manifest(manifest, catalog_from(dialects));
            const auto o = transcribe_stage(m, load_adapter(adapter_path), {g.jobs});
            save_manifest(o.manifest, out_path);
            write_rejects(rejects, o.rejections);
            print_stage(out, "transcribe", m.segments.size(), o);
            return kExitOk;
        };
    });

    // -- filter
    double threshold = 0.0;
    NormalizerFlags norm;
    auto* filter = app.add_subcommand("filter", "Drop segments whose hypothesis WER exceeds the threshold");
    filter->add_option("--manifest", manifest, "Input manifest")->required();
    filter->add_option("--out", out_path, "Output manifest")->required();
    filter->add_option("--rejects", rejects, "Rejection log (TSV)");
    filter->add_option("--threshold", threshold, "Maximum WER kept")->check(CLI::NonNegativeNumber)->capture_default_str();
    filter->add_option("--dialects", dialects, "Dialect list");
    norm.attach(filter);
    filter->final_callback([&] {
        action = [&] {
            const auto m = load_manifest(manifest, catalog_from(dialects));
            const auto o = filter_mismatched(m, norm.resolve(), threshold);
            save_manifest(o.manifest, out_path);
            write_rejects(rejects, o.rejections);
            print_stage(out, "filter", m.segments.size(), o);
            return kExitOk;
        };
    });

    // -- label
    std::vector<std::string> classifier_paths;
    std::string mapping_path, histogram_path;
    auto* label = app.add_subcommand("label", "Assign dialect pseudo-labels by ensemble voting");
    label->add_option("--manifest", manifest, "Input manifest")->required();
    label->add_option("--out", out_path, "Output manifest")->required();
    label->add_option("--classifier", classifier_paths, "Classify adapter spec (JSON); repeat per classifier")
        ->required();
    label->add_option("--mapping", mapping_path, "Native label -> dialect code mapping (JSON)")->required();
    label->add_option("--histogram", histogram_path, "Write the label histogram and ties here (JSON)");
    label->add_option("--dialects", dialects, "Dialect list");
    label->final_callback([&] {
        action = [&] {
            const auto catalog = catalog_from(dialects);
            const auto m = load_manifest(manifest, catalog);
            std::vector<AdapterSpec> specs;
            for (const auto& p : classifier_paths) specs.push_back(load_adapter(p));
            const auto mapping = LabelMapping::load(mapping_path, catalog);
            mapping.check_covers(specs);
            const auto r = assign_dialects(m, specs, mapping, {g.jobs});
            save_manifest(r.manifest, out_path);
            if (!histogram_path.empty()) {
                json ties = json::array();
                for (const auto& [id, codes] : r.ties) ties.push_back({{"segment_id", id}, {"tied", codes}});
                write_file_atomic(histogram_path, json{{"histogram", r.histogram},
                                                       {"ties", ties},
                                                       {"classifier_failures", r.classifier_failures}}
                                                      .dump(2));
            }
            out << "label: " << r.manifest.segments.size() << " segments, " << r.ties.size() << " tie(s), "
                << r.classifier_failures << " classifier failure(s)\n";
            for (const auto& [code, n] : r.histogram) out << "  " << code << ' ' << n << '\n';
            return kExitOk;
        };
    });

    // -- split
    std::string train_path, eval_path;
    std::size_t holdout = 31;
    std::uint64_t seed = 0;
    auto* split = app.add_subcommand("split", "Speaker-disjoint train/eval split");
    split->add_option("--manifest", manifest, "Input manifest")->required();
    split->add_option("--train", train_path, "Train manifest output")->required();
    split->add_option("--eval", eval_path, "Eval manifest output")->required();
    split->add_option("--holdout", holdout, "Held-out speaker count")->capture_default_str();
    split->add_option("--seed", seed, "Shuffle seed")->capture_default_str();
    split->add_option("--dialects", dialects, "Dialect list");
    split->final_callback([&] {
        action = [&] {
            const auto m = load_manifest(manifest, catalog_from(dialects));
            const auto r = speaker_disjoint_split(m, holdout, seed);
            save_manifest(r.train, train_path);
            save_manifest(r.eval, eval_path);
            out << "split: " << r.train.segments.size() << " train segments, " << r.eval.segments.size()
                << " eval segments, " << r.holdout_speakers.size() << " held-out speakers (seed " << r.seed << ")\n";
            return kExitOk;
        };
    });

    // -- build-seq
    std::string vocab_path, codes_path, language = "ar";
    bool with_dialect = false;
    std::size_t speaker_slots = 32;
    auto* build_seq = app.add_subcommand("build-seq", "Build flat token sequences for each segment (JSON lines)");
    build_seq->add_option("--vocab", vocab_path, "Vocabulary (one token per line)")->required();
    build_seq->add_option("--manifest", manifest, "Manifest")->required();
    build_seq->add_option("--out", out_path, "Output JSON lines")->required();
    build_seq->add_option("--language", language, "Language code")->capture_default_str();
    build_seq->add_flag("--with-dialect", with_dialect, "Insert the segment's dialect token after the language token");
    build_seq->add_option("--audio-codes", codes_path, "JSON map segment_id -> audio codes; builds training sequences");
    build_seq->add_option("--speaker-slots", speaker_slots, "Speaker conditioning slots in training sequences")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    build_seq->add_option("--dialects", dialects, "Dialect list");
    build_seq->final_callback([&] {
        action = [&] {
            const auto catalog = catalog_from(dialects);
            const auto vocab = Vocabulary::load(vocab_path);
            const SequenceCodec codec(vocab, catalog);
            const auto m = load_manifest(manifest, catalog);
            json codes = codes_path.empty() ? json::object() : load_json_file(codes_path);
            std::ostringstream lines;
            std::size_t n = 0, with_audio = 0;
            for (const auto& s : m.segments) {
                const auto text = char_tokenize(s.transcript, vocab);
                auto seq = codec.build_text_sequence(text, language, with_dialect ? s.dialect : std::nullopt);
                if (auto c = codes.find(s.segment_id); c != codes.end()) {
                    seq = codec.build_training_sequence(speaker_slots, seq, c->get<std::vector<std::int32_t>>());
                    ++with_audio;
                }
                json flat = json::array();
                for (const auto& t : codec.flatten(seq)) flat.push_back({static_cast<int>(t.stream), t.id});
                lines << json{{"segment_id", s.segment_id}, {"tokens", flat}}.dump() << '\n';
                ++n;
            }
            write_file_atomic(out_path, lines.str());
            out << "build-seq: " << n << " sequences (" << with_audio << " with audio)\n";
            return kExitOk;
        };
    });

    // -- extend-vocab
    std::string embeddings_path;
    std::size_t embedding_dim = 0;
    auto* extend = app.add_subcommand("extend-vocab", "Append the 22 dialect tokens to a vocabulary");
    extend->add_option("--vocab", vocab_path, "Base vocabulary")->required();
    extend->add_option("--out", out_path, "Extended vocabulary output")->required();
    extend->add_option("--dialects", dialects, "Dialect list");
    extend->add_option("--embedding-dim", embedding_dim, "Also draw N(0,1) rows of this width for the new tokens");
    extend->add_option("--embeddings-out", embeddings_path, "Where to write the new rows (JSON)");
    extend->add_option("--seed", seed, "Seed for the embedding rows")->capture_default_str();
    extend->final_callback([&] {
        action = [&] {
            const auto catalog = catalog_from(dialects);
            const auto base = Vocabulary::load(vocab_path);
            const auto ext = extend_vocabulary(base, catalog.labels());
            save_extended_vocabulary(out_path, ext, base.size());
            out << "extend-vocab: " << base.size() << " -> " << ext.size() << '\n';
            if (embedding_dim > 0) {
                if (embeddings_path.empty()) throw ConfigError("--embedding-dim needs --embeddings-out");
                const auto rows = init_embedding_rows({ext.size() - base.size(), embedding_dim, seed});
                write_file_atomic(embeddings_path, json{{"first_id", base.size()},
                                                        {"rows", rows.rows},
                                                        {"dim", rows.dim},
                                                        {"seed", seed},
                                                        {"values", rows.values}}
                                                       .dump());
                out << "embeddings: " << rows.rows << " x " << rows.dim << '\n';
            }
            return kExitOk;
        };
    });

    // -- eval
    std::vector<std::string> synth_sets, synthesizers, dialect_models;
    std::string work_dir = "eval-work", asr_path, mos_path, md_path, csv_path, json_path;
    std::string embedder_kind = "spectral", embedder_adapter, reference_mode = "independent";
    EvalRunConfig run_cfg;
    NormalizerFlags eval_norm;
    auto* eval = app.add_subcommand("eval", "SECS / WER / MOS evaluation of synthesized audio");
    eval->add_option("--manifest", manifest, "Eval manifest")->required();
    eval->add_option("--synth", synth_sets, "NAME=FILE: precomputed synth set (JSON array)");
    eval->add_option("--synthesizer", synthesizers, "NAME=FILE: synthesize adapter spec; synthesizes every segment");
    eval->add_option("--dialect-model", dialect_models, "Synthesizer NAMEs that receive dialect labels");
    eval->add_option("--work-dir", work_dir, "Where synthesized audio goes")->capture_default_str();
    eval->add_option("--language", language, "Language passed to synthesizers")->capture_default_str();
    eval->add_option("--asr", asr_path, "ASR adapter spec; without it the WER column is empty");
    eval->add_option("--mos", mos_path, "Annotation export (model_name,mos,count,std)");
    eval->add_option("--runs", run_cfg.runs, "SECS runs")->check(CLI::PositiveNumber)->capture_default_str();
    eval->add_option("--seed", run_cfg.seed, "Base seed; run i uses seed + i")->capture_default_str();
    eval->add_option("--min-ref", run_cfg.min_reference_s, "Minimum reference duration (s)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    eval->add_option("--reference-mode", reference_mode, "independent or conditioning")
        ->check(CLI::IsMember({"independent", "conditioning"}))
        ->capture_default_str();
    eval->add_option("--embedder", embedder_kind, "spectral or adapter")
        ->check(CLI::IsMember({"spectral", "adapter"}))
        ->capture_default_str();
    eval->add_option("--embedder-adapter", embedder_adapter, "Embed adapter spec for --embedder adapter");
    eval->add_option("--out-md", md_path, "Markdown report");
    eval->add_option("--out-csv", csv_path, "CSV report");
    eval->add_option("--out-json", json_path, "Full JSON report");
    eval->add_option("--dialects", dialects, "Dialect list");
    eval_norm.attach(eval);
    eval->final_callback([&] {
        action = [&] {
            if (synth_sets.empty() && synthesizers.empty()) throw ConfigError("eval needs --synth or --synthesizer");
            run_cfg.reference_mode =
                reference_mode == "conditioning" ? ReferenceMode::conditioning : ReferenceMode::independent;
            run_cfg.validate();
            const auto m = load_manifest(manifest, catalog_from(dialects));
            const InvokeOptions invoke{g.jobs};

            std::vector<ModelSynth> models;
            std::vector<std::string> notes;
            for (const auto& s : synth_sets) {
                auto [name, file] = name_value(s, "--synth");
                models.push_back({name, synth_set_from_json(load_json_file(file))});
            }
            for (const auto& s : synthesizers) {
                auto [name, file] = name_value(s, "--synthesizer");
                SynthesisOptions so;
                so.language = language;
                so.pass_dialect = std::find(dialect_models.begin(), dialect_models.end(), name) != dialect_models.end();
                so.output_dir = (fs::absolute(work_dir) / name).string();
                fs::create_directories(so.output_dir);
                auto r = synthesize_set(load_adapter(file), m, run_cfg, so, invoke);
                write_file_atomic(fs::path(so.output_dir) / "synth.json", to_json(r.items).dump(2));
                if (!r.failed.empty()) {
                    notes.push_back(name + ": synthesis failed for " + std::to_string(r.failed.size()) + " item(s)");
                }
                out << "synthesized " << r.items.size() << " item(s) for " << name << '\n';
                models.push_back({name, std::move(r.items)});
            }

            EvalOptions opts;
            if (!asr_path.empty()) opts.asr = load_adapter(asr_path);
            opts.normalizer = eval_norm.resolve();
            if (!mos_path.empty()) opts.mos = parse_mos_csv(read_file(mos_path));
            opts.invoke = invoke;

            SpectralEmbedder spectral;
            std::unique_ptr<AdapterEmbedder> adapter_embedder;
            SpeakerEmbedder* embedder = &spectral;
            if (embedder_kind == "adapter") {
                if (embedder_adapter.empty()) throw ConfigError("--embedder adapter needs --embedder-adapter");
                adapter_embedder = std::make_unique<AdapterEmbedder>(load_adapter(embedder_adapter));
                std::vector<std::string> paths;
                for (const auto& s : m.segments) paths.push_back(s.audio_path);
                for (const auto& model : models)
                    for (const auto& item : model.items) paths.push_back(item.audio_path);
                adapter_embedder->prefetch(paths, invoke);
                embedder = adapter_embedder.get();
            }

            auto report = evaluate(models, m, run_cfg, *embedder, opts);
            report.annotations.insert(report.annotations.end(), notes.begin(), notes.end());
            const auto md = render_report(report, ReportFormat::markdown);
            if (!md_path.empty()) write_file_atomic(md_path, md);
            if (!csv_path.empty()) write_file_atomic(csv_path, render_report(report, ReportFormat::csv));
            if (!json_path.empty()) write_file_atomic(json_path, to_json(report).dump(2));
            out << md;
            return kExitOk;
        };
    });

    // -- report
    std::string report_path, format = "markdown";
    auto* report = app.add_subcommand("report", "Re-render an eval report, optionally merging MOS");
    report->add_option("--report", report_path, "Report from eval (--out-json or --out-csv)")->required();
    report->add_option("--mos", mos_path, "Annotation export to merge");
    report->add_option("--format", format, "markdown, csv or json")
        ->check(CLI::IsMember({"markdown", "csv", "json"}))
        ->capture_default_str();
    report->add_option("--out", out_path, "Output file (default: stdout)");
    report->final_callback([&] {
        action = [&] {
            EvalReport r;
            const auto text = read_file(report_path);
            if (fs::path(report_path).extension() == ".csv") {
                r.rows = parse_report_csv(text);
            } else {
                json j = json::parse(text, nullptr, false);
                if (j.is_discarded()) throw ValidationError(report_path + " is not valid JSON");
                r = report_from_json(j);
            }
            if (!mos_path.empty()) merge_mos(r, parse_mos_csv(read_file(mos_path)));
            const std::string rendered = format == "json"  ? to_json(r).dump(2) + "\n"
                                         : format == "csv" ? render_report(r, ReportFormat::csv)
                                                           : render_report(r, ReportFormat::markdown);
            if (out_path.empty()) {
                out << rendered;
            } else {
                write_file_atomic(out_path, rendered);
            }
            return kExitOk;
        };
    });

    // -- serve-annotation
    std::string items_path, store_dir;
    ServerConfig server_cfg;
    std::size_t snapshot_every = 100;
    auto* serve = app.add_subcommand("serve-annotation", "Serve the blind listening test over HTTP");
    serve->add_option("--items", items_path, "Items (JSON array of {item_id, audio_path, model_name})")->required();
    serve->add_option("--store", store_dir, "Rating store directory")->required();
    serve->add_option("--host", server_cfg.host, "Bind address")->capture_default_str();
    serve->add_option("--port", server_cfg.port, "Port (0 = any free port)")->capture_default_str();
    serve->add_option("--scale-label", server_cfg.scale_label, "What the rating scale measures")->capture_default_str();
    serve->add_option("--guideline", server_cfg.guideline, "Instruction shown to annotators");
    serve->add_option("--snapshot-every", snapshot_every, "Events between snapshots")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    serve->final_callback([&] {
        action = [&] {
            RatingStore store(store_dir, load_items(items_path), snapshot_every);
            sigset_t set;
            sigemptyset(&set);
            sigaddset(&set, SIGINT);
            sigaddset(&set, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &set, nullptr);
            AnnotationServer server(store, server_cfg);
            const int port = server.start();
            out << "serving " << store.items().size() << " items on http://" << server_cfg.host << ':' << port
                << '\n'
                << std::flush;
            int sig = 0;
            sigwait(&set, &sig);
            server.stop();
            pthread_sigmask(SIG_UNBLOCK, &set, nullptr);
            return kExitOk;
        };
    });

    // -- run-pipeline
    std::string pipeline_path, out_dir_override;
    auto* run_pl = app.add_subcommand("run-pipeline", "Run every curation stage from a pipeline config");
    run_pl->add_option("--pipeline", pipeline_path, "Pipeline config (JSON)")->required();
    run_pl->add_option("--output-dir", out_dir_override, "Override output_dir");
    run_pl->final_callback([&] {
        action = [&] {
            auto cfg = PipelineConfig::load(pipeline_path);
            if (!out_dir_override.empty()) cfg.output_dir = out_dir_override;
            if (app.get_option("--jobs")->count() > 0) cfg.jobs = g.jobs;
            err << json{{"pipeline_config", cfg.to_json()}}.dump() << '\n';
            const auto r = run_pipeline(cfg);
            for (const auto& s : r.report.stages) {
                out << s.name << ": " << (s.enabled ? "" : "(skipped) ") << s.input << " in, " << s.output
                    << " kept, " << s.rejected << " rejected";
                if (!s.snapshot.empty()) out << " -> " << s.snapshot;
                out << '\n';
            }
            out << "retained hours: " << r.report.retained_hours << '\n';
            if (!r.report.completed) {
                throw StageError(r.report.halted_stage, r.report.error);
            }
            return kExitOk;
        };
    });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const CLI::App* failing = &app;
        for (const auto* s : app.get_subcommands()) failing = s;
        err << e.what() << "\n\n" << failing->help() << '\n';
        err << error_json(failing == &app ? "" : failing->get_name(), "usage", e.what()).dump() << '\n';
        return kExitUsage;
    }

    const auto* sub = app.get_subcommands().front();
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    print_resolved(err, app, sub, g);

    try {
        return action();
    } catch (const ConfigError& e) {
        err << error_json(sub->get_name(), "config", e.what()).dump() << '\n';
        return kExitUsage;
    } catch (const ParseError& e) {
        auto j = error_json(sub->get_name(), "parse", e.what());
        j["error"]["line"] = e.line();
        j["error"]["field"] = e.field();
        err << j.dump() << '\n';
        return kExitFailure;
    } catch (const StageError& e) {
        auto j = error_json(sub->get_name(), "stage", e.what());
        j["error"]["stage"] = e.stage();
        err << j.dump() << '\n';
        return kExitFailure;
    } catch (const ValidationError& e) {
        err << error_json(sub->get_name(), "validation", e.what()).dump() << '\n';
        return kExitFailure;
    } catch (const IoError& e) {
        err << error_json(sub->get_name(), "io", e.what()).dump() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << error_json(sub->get_name(), "internal", e.what()).dump() << '\n';
        return kExitFailure;
    }
}

}  // namespace curator::cli
