#include "curator/adapters.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <future>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "curator/error.hpp"
#include "curator/subprocess.hpp"

namespace curator {

using nlohmann::json;

std::string_view to_string(AdapterKind kind) {
    switch (kind) {
        case AdapterKind::denoise: return "denoise";
        case AdapterKind::asr: return "asr";
        case AdapterKind::classify: return "classify";
        case AdapterKind::synthesize: return "synthesize";
        case AdapterKind::embed: return "embed";
    }
    return "asr";
}

std::optional<AdapterKind> parse_adapter_kind(std::string_view s) {
    for (auto k : {AdapterKind::denoise, AdapterKind::asr, AdapterKind::classify,
                   AdapterKind::synthesize, AdapterKind::embed}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::string_view to_string(FailureKind kind) {
    switch (kind) {
        case FailureKind::spawn: return "spawn";
        case FailureKind::timeout: return "timeout";
        case FailureKind::malformed: return "malformed";
        case FailureKind::missing: return "missing";
        case FailureKind::adapter_error: return "adapter-error";
    }
    return "missing";
}

void AdapterSpec::validate() const {
    const std::string who = "adapter '" + name + "'";
    if (command.empty() || command.front().empty()) throw ConfigError(who + ": command is empty");
    if (!(timeout_s > 0.0) || !std::isfinite(timeout_s)) throw ConfigError(who + ": timeout_s must be > 0");
    if (batch_size == 0) throw ConfigError(who + ": batch_size must be >= 1");
}

AdapterSpec AdapterSpec::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("adapter spec must be an object");
    AdapterSpec s;
    try {
        s.name = j.at("name").get<std::string>();
        auto kind = parse_adapter_kind(j.at("kind").get<std::string>());
        if (!kind) throw ConfigError("adapter '" + s.name + "': unknown kind " + j.at("kind").dump());
        s.kind = *kind;
        s.command = j.at("command").get<std::vector<std::string>>();
        s.timeout_s = j.value("timeout_s", s.timeout_s);
        s.batch_size = j.value("batch_size", s.batch_size);
        s.labels = j.value("labels", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("adapter spec: ") + e.what());
    }
    s.validate();
    return s;
}

json AdapterSpec::to_json() const {
    json j = {{"name", name},
              {"kind", to_string(kind)},
              {"command", command},
              {"timeout_s", timeout_s},
              {"batch_size", batch_size}};
    if (!labels.empty()) j["labels"] = labels;
    return j;
}

std::string to_line(const AdapterEnvelope& e) {
    json j = {{"request_id", e.request_id}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
    if (e.error) j["error"] = *e.error;
    return j.dump();
}

AdapterEnvelope parse_envelope(std::string_view line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ValidationError("envelope is not a JSON object");
    AdapterEnvelope e;
    auto id = j.find("request_id");
    if (id == j.end() || !id->is_string()) throw ValidationError("envelope lacks a string request_id");
    e.request_id = id->get<std::string>();
    auto kind = j.find("kind");
    if (kind == j.end() || !kind->is_string()) throw ValidationError("envelope lacks a kind");
    auto k = parse_adapter_kind(kind->get<std::string>());
    if (!k) throw ValidationError("unknown envelope kind " + kind->dump());
    e.kind = *k;
    if (auto p = j.find("payload"); p != j.end()) e.payload = *p;
    if (auto err = j.find("error"); err != j.end()) {
        e.error = err->is_string() ? err->get<std::string>() : err->dump();
    }
    return e;
}

AdapterEnvelope asr_request(std::string request_id, const std::string& audio_path) {
    return {std::move(request_id), AdapterKind::asr, {{"audio_path", audio_path}}, std::nullopt};
}

AdapterEnvelope denoise_request(std::string request_id, const std::string& audio_path,
                                const std::string& output_dir) {
    json p = {{"audio_path", audio_path}};
    if (!output_dir.empty()) p["output_dir"] = output_dir;
    return {std::move(request_id), AdapterKind::denoise, std::move(p), std::nullopt};
}

AdapterEnvelope classify_request(std::string request_id, const std::string& transcript) {
    return {std::move(request_id), AdapterKind::classify, {{"transcript", transcript}}, std::nullopt};
}

AdapterEnvelope synthesize_request(std::string request_id, const std::string& text,
                                   const std::string& reference_audio_path, const std::string& language,
                                   const std::optional<std::string>& dialect, const std::string& output_dir) {
    json p = {{"text", text}, {"reference_audio_path", reference_audio_path}, {"language", language}};
    if (dialect) p["dialect"] = *dialect;
    if (!output_dir.empty()) p["output_dir"] = output_dir;
    return {std::move(request_id), AdapterKind::synthesize, std::move(p), std::nullopt};
}

AdapterEnvelope embed_request(std::string request_id, const std::string& audio_path) {
    return {std::move(request_id), AdapterKind::embed, {{"audio_path", audio_path}}, std::nullopt};
}

namespace {

void run_batch(const AdapterSpec& spec, std::span<const AdapterEnvelope> batch,
               std::span<AdapterResponse> out) {
    std::string input;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        input += to_line(batch[i]);
        input += '\n';
        index.emplace(batch[i].request_id, i);
        out[i].request_id = batch[i].request_id;
    }

    const auto timeout = std::chrono::milliseconds(static_cast<long long>(spec.timeout_s * 1000.0));
    ProcessOutcome proc = run_process(spec.command, input, timeout);
    if (!proc.spawned) {
        for (auto& r : out) r.failure = AdapterFailure{FailureKind::spawn, proc.spawn_error};
        return;
    }

    std::size_t malformed = 0;
    std::string first_problem;
    for (const auto& line : proc.lines) {
        if (line.empty()) continue;
        AdapterEnvelope env;
        try {
            env = parse_envelope(line);
        } catch (const ValidationError& e) {
            ++malformed;
            if (first_problem.empty()) first_problem = e.what();
            continue;
        }
        auto it = index.find(env.request_id);
        if (it == index.end() || env.kind != spec.kind) {
            ++malformed;
            if (first_problem.empty()) {
                first_problem = it == index.end() ? "unknown request_id '" + env.request_id + "'"
                                                  : "kind mismatch for '" + env.request_id + "'";
            }
            continue;
        }
        auto& slot = out[it->second];
        if (slot.envelope || slot.failure) continue;  // first answer wins
        if (env.error) {
            slot.failure = AdapterFailure{FailureKind::adapter_error, *env.error};
        } else {
            slot.envelope = std::move(env);
        }
    }

    for (auto& r : out) {
        if (r.envelope || r.failure) continue;
        if (proc.timed_out) {
            r.failure = AdapterFailure{FailureKind::timeout,
                                       "no answer within " + std::to_string(spec.timeout_s) + " s"};
        } else if (malformed > 0) {
            r.failure = AdapterFailure{FailureKind::malformed, first_problem};
        } else {
            r.failure = AdapterFailure{FailureKind::missing, "adapter exited with status " +
                                                                 std::to_string(proc.exit_status) +
                                                                 " without answering"};
        }
    }
    if (malformed > 0) {
        spdlog::warn("adapter '{}': {} malformed response line(s): {}", spec.name, malformed, first_problem);
    }
}

}  // namespace

std::vector<AdapterResponse> invoke_adapter(const AdapterSpec& spec, std::span<const AdapterEnvelope> requests,
                                            const InvokeOptions& options) {
    spec.validate();
    std::unordered_set<std::string_view> ids;
    for (const auto& r : requests) {
        if (!ids.insert(r.request_id).second) {
            throw ValidationError("duplicate request_id '" + r.request_id + "'");
        }
    }

    std::vector<AdapterResponse> responses(requests.size());
    const std::size_t batches = (requests.size() + spec.batch_size - 1) / spec.batch_size;
    auto do_batch = [&](std::size_t b) {
        const std::size_t lo = b * spec.batch_size;
        const std::size_t n = std::min(spec.batch_size, requests.size() - lo);
        run_batch(spec, requests.subspan(lo, n), std::span(responses).subspan(lo, n));
    };

    const std::size_t workers = std::min(std::max<std::size_t>(options.jobs, 1), batches);
    if (workers <= 1) {
        for (std::size_t b = 0; b < batches; ++b) do_batch(b);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t b; (b = next.fetch_add(1)) < batches;) do_batch(b);
            });
        }
        for (auto& t : pool) t.join();
    }
    return responses;
}

bool all_spawn_failures(std::span<const AdapterResponse> responses) {
    return !responses.empty() && std::all_of(responses.begin(), responses.end(), [](const auto& r) {
        return r.failure && r.failure->kind == FailureKind::spawn;
    });
}

ClassifierVerdict verdict_from_payload(const std::string& classifier_name, const json& payload) {
    auto s = payload.find("scores");
    if (s == payload.end() || !s->is_object()) throw ValidationError("classify payload lacks a scores object");
    if (s->empty()) throw ValidationError("classify payload has no scores");
    ClassifierVerdict v;
    v.classifier_name = classifier_name;
    for (auto it = s->begin(); it != s->end(); ++it) {
        if (!it->is_number()) throw ValidationError("score for '" + it.key() + "' is not a number");
        const double c = it->get<double>();
        if (!(c >= 0.0 && c <= 1.0)) {
            throw ValidationError("score for '" + it.key() + "' outside [0, 1]: " + std::to_string(c));
        }
        v.scores.emplace(it.key(), c);
    }
    return v;
}

std::vector<ClassificationOutcome> classify_dialect_batch(std::span<const AdapterSpec> specs,
                                                          std::span<const std::string> transcripts,
                                                          const InvokeOptions& options) {
    std::vector<AdapterEnvelope> requests;
    requests.reserve(transcripts.size());
    for (std::size_t i = 0; i < transcripts.size(); ++i) {
        requests.push_back(classify_request(std::to_string(i), transcripts[i]));
    }

    std::vector<std::vector<AdapterResponse>> per_spec(specs.size());
    auto run_one = [&](std::size_t s) {
        if (specs[s].kind != AdapterKind::classify) {
            throw ConfigError("adapter '" + specs[s].name + "' is not a classify adapter");
        }
        per_spec[s] = invoke_adapter(specs[s], requests, options);
    };
    if (options.jobs > 1 && specs.size() > 1) {
        std::vector<std::future<void>> running;
        for (std::size_t s = 0; s < specs.size(); ++s) running.push_back(std::async(std::launch::async, run_one, s));
        for (auto& f : running) f.get();
    } else {
        for (std::size_t s = 0; s < specs.size(); ++s) run_one(s);
    }

    std::vector<ClassificationOutcome> outcomes(transcripts.size());
    for (std::size_t s = 0; s < specs.size(); ++s) {
        std::size_t failed = 0;
        std::string first;
        for (std::size_t i = 0; i < transcripts.size(); ++i) {
            const auto& resp = per_spec[s][i];
            auto& outcome = outcomes[i];
            if (resp.ok()) {
                try {
                    outcome.verdicts.push_back(verdict_from_payload(specs[s].name, resp.envelope->payload));
                    continue;
                } catch (const ValidationError& e) {
                    outcome.failures.push_back({specs[s].name, {FailureKind::malformed, e.what()}});
                }
            } else {
                outcome.failures.push_back({specs[s].name, *resp.failure});
            }
            if (failed++ == 0) first = outcome.failures.back().failure.message;
        }
        if (failed > 0) {
            spdlog::warn("classifier '{}' failed on {}/{} transcript(s) (first: {})", specs[s].name, failed,
                         transcripts.size(), first);
        }
    }
    return outcomes;
}

ClassificationOutcome classify_dialect(std::span<const AdapterSpec> specs, const std::string& transcript,
                                       const InvokeOptions& options) {
    std::vector<std::string> one{transcript};
    auto outcomes = classify_dialect_batch(specs, one, options);
    return std::move(outcomes.front());
}

}  // namespace curator
