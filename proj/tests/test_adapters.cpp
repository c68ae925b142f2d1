#include <gtest/gtest.h>

#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "curator/error.hpp"
#include "curator/adapters.hpp"
#include "curator/subprocess.hpp"
#include "test_support.hpp"

using namespace curator;
using curator::testing::stub_spec;
using nlohmann::json;

namespace {

std::vector<AdapterEnvelope> asr_requests(std::size_t n) {
    std::vector<AdapterEnvelope> r;
    for (std::size_t i = 0; i < n; ++i) r.push_back(asr_request("r" + std::to_string(i), "/x/" + std::to_string(i)));
    return r;
}

}  // namespace

TEST(Envelope, RoundTrip) {
    std::vector<AdapterEnvelope> cases = {
        asr_request("1", "/a.wav"),
        denoise_request("2", "/a.wav", "/out"),
        classify_request("3", "مرحبا \"يا\" صديقي\n"),
        synthesize_request("4", "نص", "/ref.wav", "ar", std::string("EGY"), "/o"),
        synthesize_request("5", "نص", "/ref.wav", "ar", std::nullopt, ""),
        embed_request("6", "/e.wav"),
    };
    AdapterEnvelope err{"7", AdapterKind::asr, json::object(), std::string("boom")};
    cases.push_back(err);
    for (const auto& e : cases) {
        const auto line = to_line(e);
        EXPECT_EQ(line.find('\n'), std::string::npos);
        EXPECT_EQ(parse_envelope(line), e);
    }
    EXPECT_FALSE(synthesize_request("5", "t", "r", "ar", std::nullopt, "").payload.contains("dialect"));
}

TEST(Envelope, MalformedLinesRejected) {
    EXPECT_THROW(parse_envelope("{"), ValidationError);
    EXPECT_THROW(parse_envelope("[]"), ValidationError);
    EXPECT_THROW(parse_envelope(R"({"kind":"asr"})"), ValidationError);
    EXPECT_THROW(parse_envelope(R"({"request_id":"1","kind":"tts"})"), ValidationError);
}

TEST(AdapterSpec, ValidationAndJson) {
    auto s = stub_spec(AdapterKind::classify, {"echo"}, "c");
    s.labels = {"x", "y"};
    EXPECT_NO_THROW(s.validate());
    const auto back = AdapterSpec::from_json(s.to_json());
    EXPECT_EQ(back.command, s.command);
    EXPECT_EQ(back.labels, s.labels);
    EXPECT_EQ(back.kind, AdapterKind::classify);

    auto bad = s;
    bad.command.clear();
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = s;
    bad.timeout_s = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = s;
    bad.batch_size = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    EXPECT_THROW(AdapterSpec::from_json(json{{"name", "x"}, {"kind", "tts"}, {"command", {"a"}}}), ConfigError);
}

TEST(Subprocess, CapturesLinesAndStatus) {
    const auto p = run_process({"sh", "-c", "cat; echo done; exit 4"}, "a\nb\n", std::chrono::seconds(10));
    ASSERT_TRUE(p.spawned);
    EXPECT_EQ(p.lines, (std::vector<std::string>{"a", "b", "done"}));
    EXPECT_EQ(p.exit_status, 4);
    EXPECT_FALSE(p.timed_out);
}

TEST(Invoke, EmptyRequestListGivesEmptyResponses) {
    EXPECT_TRUE(invoke_adapter(stub_spec(AdapterKind::asr, {"echo"}), {}).empty());
}

TEST(Invoke, EchoResponsesEqualRequests) {
    const auto req = asr_requests(37);
    const auto resp = invoke_adapter(stub_spec(AdapterKind::asr, {"echo"}, "echo", 30, 8), req);
    ASSERT_EQ(resp.size(), req.size());
    for (std::size_t i = 0; i < req.size(); ++i) {
        ASSERT_TRUE(resp[i].ok()) << resp[i].failure->message;
        EXPECT_EQ(*resp[i].envelope, req[i]);
    }
}

TEST(Invoke, ParallelBatchesKeepRequestOrder) {
    const auto req = asr_requests(50);
    const auto serial = invoke_adapter(stub_spec(AdapterKind::asr, {"echo"}, "e", 30, 4), req, {1});
    const auto parallel = invoke_adapter(stub_spec(AdapterKind::asr, {"echo"}, "e", 30, 4), req, {4});
    ASSERT_EQ(parallel.size(), serial.size());
    for (std::size_t i = 0; i < req.size(); ++i) {
        EXPECT_EQ(parallel[i].request_id, req[i].request_id);
        EXPECT_EQ(*parallel[i].envelope, *serial[i].envelope);
    }
}

TEST(Invoke, DroppedRequestFailsAlone) {
    const auto req = asr_requests(5);
    const auto resp = invoke_adapter(stub_spec(AdapterKind::asr, {"echo", "--drop", "r2"}), req);
    for (std::size_t i = 0; i < 5; ++i) {
        if (i == 2) {
            ASSERT_FALSE(resp[i].ok());
            EXPECT_EQ(resp[i].failure->kind, FailureKind::missing);
        } else {
            EXPECT_TRUE(resp[i].ok());
        }
    }
}

TEST(Invoke, AdapterReportedErrorIsPerRequest) {
    const auto resp = invoke_adapter(stub_spec(AdapterKind::asr, {"echo", "--error", "r0"}), asr_requests(3));
    ASSERT_FALSE(resp[0].ok());
    EXPECT_EQ(resp[0].failure->kind, FailureKind::adapter_error);
    EXPECT_EQ(resp[0].failure->message, "injected failure");
    EXPECT_TRUE(resp[1].ok());
    EXPECT_TRUE(resp[2].ok());
}

TEST(Invoke, SpawnFailureMarksEveryRequest) {
    AdapterSpec s = stub_spec(AdapterKind::asr, {});
    s.command = {"/nonexistent/adapter-binary"};
    const auto resp = invoke_adapter(s, asr_requests(3));
    EXPECT_TRUE(all_spawn_failures(resp));
    for (const auto& r : resp) EXPECT_EQ(r.failure->kind, FailureKind::spawn);
}

TEST(Invoke, TimeoutKillsBatch) {
    const auto start = std::chrono::steady_clock::now();
    const auto resp = invoke_adapter(stub_spec(AdapterKind::asr, {"sleep", "--seconds", "30"}, "slow", 0.5),
                                     asr_requests(2));
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(elapsed, 10.0);
    for (const auto& r : resp) {
        ASSERT_FALSE(r.ok());
        EXPECT_EQ(r.failure->kind, FailureKind::timeout);
    }
}

TEST(Invoke, CrashAndGarbageAreReported) {
    auto crash = invoke_adapter(stub_spec(AdapterKind::asr, {"crash"}), asr_requests(2));
    for (const auto& r : crash) EXPECT_EQ(r.failure->kind, FailureKind::missing);
    auto garbage = invoke_adapter(stub_spec(AdapterKind::asr, {"garbage"}), asr_requests(2));
    for (const auto& r : garbage) EXPECT_EQ(r.failure->kind, FailureKind::malformed);
}

TEST(Invoke, WrongKindInResponseIsMalformed) {
    // An asr adapter asked with classify requests echoes kind classify; the
    // spec says asr, so the answers do not count.
    auto spec = stub_spec(AdapterKind::asr, {"echo"});
    std::vector<AdapterEnvelope> req = {classify_request("c1", "x")};
    req[0].kind = AdapterKind::classify;
    const auto resp = invoke_adapter(spec, req);
    ASSERT_FALSE(resp[0].ok());
    EXPECT_EQ(resp[0].failure->kind, FailureKind::malformed);
}

TEST(Invoke, DuplicateRequestIdsRejected) {
    std::vector<AdapterEnvelope> req = {asr_request("a", "/1"), asr_request("a", "/2")};
    EXPECT_THROW(invoke_adapter(stub_spec(AdapterKind::asr, {"echo"}), req), ValidationError);
}

TEST(Classify, NoClassifiersGivesNoVerdicts) {
    EXPECT_TRUE(classify_dialect({}, "نص").verdicts.empty());
}

TEST(Classify, StubFixturesReturnedVerbatim) {
    curator::testing::TempDir dir;
    const std::string transcript = "شلونك اليوم";
    std::ofstream(dir / "a.json") << json{{transcript, {{"EGY", 0.6}, {"MSA", 0.4}}}}.dump();
    std::ofstream(dir / "b.json") << json{{transcript, {{"msa", 0.7}, {"egy", 0.3}}}}.dump();
    const std::vector<AdapterSpec> specs = {
        stub_spec(AdapterKind::classify, {"classify", "--table", (dir / "a.json").string()}, "A"),
        stub_spec(AdapterKind::classify, {"classify", "--table", (dir / "b.json").string()}, "B"),
    };
    const auto out = classify_dialect(specs, transcript);
    ASSERT_EQ(out.verdicts.size(), 2u);
    EXPECT_EQ(out.verdicts[0], (ClassifierVerdict{"A", {{"EGY", 0.6}, {"MSA", 0.4}}}));
    EXPECT_EQ(out.verdicts[1], (ClassifierVerdict{"B", {{"msa", 0.7}, {"egy", 0.3}}}));
    EXPECT_TRUE(out.failures.empty());
}

TEST(Classify, EightStubsOneTimingOut) {
    std::vector<AdapterSpec> specs;
    for (int i = 0; i < 7; ++i) {
        specs.push_back(stub_spec(AdapterKind::classify, {"classify", "--labels", "x,y", "--salt", std::to_string(i)},
                                  "clf" + std::to_string(i)));
    }
    specs.push_back(stub_spec(AdapterKind::classify, {"sleep", "--seconds", "30"}, "slow", 0.5));
    for (std::size_t jobs : {1u, 4u}) {
        const auto out = classify_dialect(specs, "نص", {jobs});
        EXPECT_EQ(out.verdicts.size(), 7u);
        ASSERT_EQ(out.failures.size(), 1u);
        EXPECT_EQ(out.failures[0].classifier_name, "slow");
        EXPECT_EQ(out.failures[0].failure.kind, FailureKind::timeout);
    }
}

TEST(Classify, OutOfRangeScoresAreAFailure) {
    curator::testing::TempDir dir;
    std::ofstream(dir / "t.json") << json{{"x", {{"EGY", 1.5}}}}.dump();
    const std::vector<AdapterSpec> specs = {
        stub_spec(AdapterKind::classify, {"classify", "--table", (dir / "t.json").string()}, "bad")};
    const auto out = classify_dialect(specs, "x");
    EXPECT_TRUE(out.verdicts.empty());
    EXPECT_EQ(out.failures.size(), 1u);
}

TEST(Classify, VerdictFromPayloadValidates) {
    EXPECT_THROW(verdict_from_payload("c", json::object()), ValidationError);
    EXPECT_THROW(verdict_from_payload("c", json{{"scores", json::object()}}), ValidationError);
    EXPECT_THROW(verdict_from_payload("c", json{{"scores", {{"a", -0.1}}}}), ValidationError);
    EXPECT_EQ(verdict_from_payload("c", json{{"scores", {{"a", 1.0}}}}).scores.at("a"), 1.0);
}

TEST(Classify, BatchGivesOneOutcomePerTranscript) {
    const std::vector<AdapterSpec> specs = {
        stub_spec(AdapterKind::classify, {"classify", "--labels", "p,q"}, "one", 30, 3),
        stub_spec(AdapterKind::classify, {"classify", "--labels", "p,q", "--error", "4"}, "two", 30, 3)};
    std::vector<std::string> transcripts;
    for (int i = 0; i < 10; ++i) transcripts.push_back("text " + std::to_string(i));
    const auto out = classify_dialect_batch(specs, transcripts, {2});
    ASSERT_EQ(out.size(), 10u);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].verdicts.size() + out[i].failures.size(), 2u);
    }
}
