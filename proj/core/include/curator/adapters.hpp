#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace curator {

/// External neural tools are reached through adapters: executables speaking
/// newline-delimited JSON envelopes on stdin/stdout. Each request line is
///
///   {"request_id": "...", "kind": "asr", "payload": {...}}
///
/// and the adapter answers every request with a line echoing its request_id
/// and kind. A response may carry "error": "<message>" instead of a payload
/// to report a per-request failure. Response order is irrelevant; stdin is
/// closed after each batch, so an adapter should exit once it reaches EOF.
///
/// Payloads per kind (request -> response):
///   denoise    {audio_path, output_dir?}                 -> {audio_path}
///   asr        {audio_path}                              -> {text}
///   classify   {transcript}                              -> {scores: {label: confidence}}
///   synthesize {text, reference_audio_path, language,
///               dialect?, output_dir?}                   -> {audio_path}
///   embed      {audio_path}                              -> {embedding: [numbers]}
enum class AdapterKind { denoise, asr, classify, synthesize, embed };

std::string_view to_string(AdapterKind kind);
std::optional<AdapterKind> parse_adapter_kind(std::string_view s);

struct AdapterSpec {
    std::string name;
    AdapterKind kind = AdapterKind::asr;
    std::vector<std::string> command;
    double timeout_s = 60.0;
    std::size_t batch_size = 16;
    /// Classify adapters may declare the native labels they can emit so the
    /// label mapping can be checked before anything runs.
    std::vector<std::string> labels;

    /// Throws ConfigError when the command is empty, timeout <= 0 or
    /// batch_size == 0.
    void validate() const;

    static AdapterSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct AdapterEnvelope {
    std::string request_id;
    AdapterKind kind = AdapterKind::asr;
    nlohmann::json payload = nlohmann::json::object();
    /// Set on responses that report a per-request failure.
    std::optional<std::string> error;

    friend bool operator==(const AdapterEnvelope&, const AdapterEnvelope&) = default;
};

std::string to_line(const AdapterEnvelope& envelope);
/// Throws ValidationError for lines that are not a well-formed envelope.
AdapterEnvelope parse_envelope(std::string_view line);

AdapterEnvelope asr_request(std::string request_id, const std::string& audio_path);
AdapterEnvelope denoise_request(std::string request_id, const std::string& audio_path,
                                const std::string& output_dir);
AdapterEnvelope classify_request(std::string request_id, const std::string& transcript);
AdapterEnvelope synthesize_request(std::string request_id, const std::string& text,
                                   const std::string& reference_audio_path,
                                   const std::string& language,
                                   const std::optional<std::string>& dialect,
                                   const std::string& output_dir);
AdapterEnvelope embed_request(std::string request_id, const std::string& audio_path);

enum class FailureKind {
    spawn,          // the command could not be started
    timeout,        // the batch deadline passed before this request was answered
    malformed,      // the adapter produced unparseable output for this batch
    missing,        // the adapter exited without answering this request
    adapter_error,  // the adapter answered with an "error" field
};

std::string_view to_string(FailureKind kind);

struct AdapterFailure {
    FailureKind kind = FailureKind::missing;
    std::string message;
};

struct AdapterResponse {
    std::string request_id;
    std::optional<AdapterEnvelope> envelope;
    std::optional<AdapterFailure> failure;

    bool ok() const noexcept { return envelope.has_value(); }
};

struct InvokeOptions {
    /// Batches run concurrently up to this many child processes.
    std::size_t jobs = 1;
};

/// Sends `requests` in batches of spec.batch_size, one child process per
/// batch. Returns one response per request, in request order. Failures are
/// reported per request; nothing here throws for adapter misbehaviour.
/// Throws ValidationError for duplicate request ids.
std::vector<AdapterResponse> invoke_adapter(const AdapterSpec& spec,
                                            std::span<const AdapterEnvelope> requests,
                                            const InvokeOptions& options = {});

/// True when every response failed because the command could not start.
bool all_spawn_failures(std::span<const AdapterResponse> responses);

struct ClassifierVerdict {
    std::string classifier_name;
    /// Native label -> confidence in [0, 1].
    std::map<std::string, double> scores;

    friend bool operator==(const ClassifierVerdict&, const ClassifierVerdict&) = default;
};

struct ClassifierFailure {
    std::string classifier_name;
    AdapterFailure failure;
};

struct ClassificationOutcome {
    std::vector<ClassifierVerdict> verdicts;
    std::vector<ClassifierFailure> failures;
};

/// Runs every classify adapter over every transcript. Returns one outcome per
/// transcript; classifiers that fail for a transcript are omitted from its
/// verdicts and listed in its failures (and logged).
std::vector<ClassificationOutcome> classify_dialect_batch(std::span<const AdapterSpec> specs,
                                                          std::span<const std::string> transcripts,
                                                          const InvokeOptions& options = {});

ClassificationOutcome classify_dialect(std::span<const AdapterSpec> specs, const std::string& transcript,
                                       const InvokeOptions& options = {});

/// Parses a classify response payload. Throws ValidationError if scores are
/// missing, empty, or outside [0, 1].
ClassifierVerdict verdict_from_payload(const std::string& classifier_name, const nlohmann::json& payload);

}  // namespace curator
