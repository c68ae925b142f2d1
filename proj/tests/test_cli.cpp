#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "curator/error.hpp"
#include "curator/pipeline.hpp"
#include "curator/sequence.hpp"
#include "curator/subprocess.hpp"
#include "mini_corpus.hpp"
#include "test_support.hpp"

using namespace curator;
using curator::testing::segment;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out, err;

    // The last line of stderr that parses as a JSON object with this key.
    json json_line(const std::string& key) const {
        std::istringstream in(err);
        std::string line;
        json found;
        while (std::getline(in, line)) {
            auto j = json::parse(line, nullptr, false);
            if (!j.is_discarded() && j.is_object() && j.contains(key)) found = j[key];
        }
        return found;
    }
};

Result run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

const DialectCatalog& catalog() {
    static const auto c = DialectCatalog::default_catalog();
    return c;
}

std::string write_manifest_file(const curator::testing::TempDir& dir, const std::string& name,
                                std::vector<SegmentRecord> segs) {
    CorpusManifest m;
    m.segments = std::move(segs);
    const auto path = (dir / name).string();
    save_manifest(m, path);
    return path;
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
    const auto r = run_cli({"frobnicate"});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
    EXPECT_EQ(r.json_line("error")["kind"], "usage");
}

TEST(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run_cli({}).code, cli::kExitUsage); }

TEST(Cli, MissingRequiredFlagIsUsageError) {
    const auto r = run_cli({"filter", "--manifest", "x.dfm"});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.err.find("--out"), std::string::npos);
    EXPECT_EQ(r.json_line("error")["subcommand"], "filter");
}

TEST(Cli, BadValuesAreUsageErrors) {
    EXPECT_EQ(run_cli({"--jobs", "0", "stats", "--manifest", "x"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"--log-level", "loud", "stats", "--manifest", "x"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"filter", "--manifest", "a", "--out", "b", "--threshold", "-1"}).code, cli::kExitUsage);
}

TEST(Cli, HelpExitsZero) {
    const auto r = run_cli({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("run-pipeline"), std::string::npos);
}

TEST(Cli, BadPipelineConfigIsUsageError) {
    curator::testing::TempDir dir;
    std::ofstream(dir / "p.json") << "{not json";
    auto r = run_cli({"run-pipeline", "--pipeline", (dir / "p.json").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_EQ(r.json_line("error")["kind"], "config");
    std::ofstream(dir / "q.json") << R"({"input_manifest":"in.dfm","output_dir":"out"})";
    r = run_cli({"run-pipeline", "--pipeline", (dir / "q.json").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.json_line("error")["message"].get<std::string>().find("denoise"), std::string::npos);
}

TEST(Cli, OperationalFailureIsExitOneWithJsonError) {
    curator::testing::TempDir dir;
    auto r = run_cli({"stats", "--manifest", (dir / "missing.dfm").string()});
    EXPECT_EQ(r.code, cli::kExitFailure);
    EXPECT_EQ(r.json_line("error")["kind"], "io");
    EXPECT_EQ(r.json_line("error")["subcommand"], "stats");

    std::ofstream(dir / "bad.dfm") << R"({"format":"dfm/1"})" << "\n" << R"(["s1","a.wav","spk",1,16000,"robot","x"])"
                                   << "\n";
    r = run_cli({"stats", "--manifest", (dir / "bad.dfm").string()});
    EXPECT_EQ(r.code, cli::kExitFailure);
    const auto e = r.json_line("error");
    EXPECT_EQ(e["kind"], "parse");
    EXPECT_EQ(e["line"], 2);
    EXPECT_EQ(e["field"], "gender");
}

TEST(Cli, ResolvedConfigIsPrinted) {
    curator::testing::TempDir dir;
    const auto m = write_manifest_file(dir, "m.dfm", {segment("a", "s")});
    const auto r = run_cli({"-j", "3", "split", "--manifest", m, "--train", (dir / "t.dfm").string(), "--eval",
                        (dir / "e.dfm").string(), "--holdout", "0"});
    const auto rc = r.json_line("resolved_config");
    EXPECT_EQ(rc["subcommand"], "split");
    EXPECT_EQ(rc["global"]["--jobs"], 3);
    EXPECT_EQ(rc["options"]["--holdout"], "0");
    EXPECT_EQ(rc["options"]["--seed"], "0");
    EXPECT_EQ(r.code, 0) << r.err;
}

TEST(Cli, ConfigFileSuppliesFlagDefaults) {
    curator::testing::TempDir dir;
    std::vector<SegmentRecord> segs;
    for (int i = 0; i < 10; ++i) segs.push_back(segment("s" + std::to_string(i), "spk" + std::to_string(i)));
    const auto m = write_manifest_file(dir, "m.dfm", segs);
    std::ofstream(dir / "c.toml") << "[split]\nholdout = 4\nseed = 11\n";
    const auto r = run_cli({"--config", (dir / "c.toml").string(), "split", "--manifest", m, "--train",
                        (dir / "t.dfm").string(), "--eval", (dir / "e.dfm").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_manifest((dir / "e.dfm").string(), catalog()).segments.size(), 4u);
    EXPECT_EQ(r.json_line("resolved_config")["options"]["--seed"], "11");
}

TEST(Cli, FilterConservesSegments) {
    curator::testing::TempDir dir;
    std::vector<SegmentRecord> segs;
    for (int i = 0; i < 20; ++i) {
        auto s = segment("s" + std::to_string(i), "spk", "أهلا وسهلا بكم");
        s.hypothesis_transcript = i % 3 == 0 ? "اهلا وسهلا بكم" : s.transcript;
        segs.push_back(s);
    }
    const auto m = write_manifest_file(dir, "m.dfm", segs);
    auto r = run_cli({"filter", "--manifest", m, "--out", (dir / "f.dfm").string(), "--rejects",
                  (dir / "r.tsv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto kept = load_manifest((dir / "f.dfm").string(), catalog()).segments.size();
    std::ifstream tsv(dir / "r.tsv");
    std::size_t rejected = 0;
    for (std::string line; std::getline(tsv, line);) rejected += !line.empty();
    EXPECT_EQ(kept + rejected, 20u);
    EXPECT_EQ(kept, 13u);

    // Alef unification makes the hypotheses match.
    r = run_cli({"filter", "--manifest", m, "--out", (dir / "g.dfm").string(), "--unify-alef"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_manifest((dir / "g.dfm").string(), catalog()).segments.size(), 20u);
}

TEST(Cli, SplitHoldsOutThirtyOneSpeakers) {
    curator::testing::TempDir dir;
    std::vector<SegmentRecord> segs;
    for (int i = 0; i < 17341; ++i) segs.push_back(segment("s" + std::to_string(i), "spk" + std::to_string(i)));
    const auto m = write_manifest_file(dir, "m.dfm", segs);
    const auto r = run_cli({"split", "--manifest", m, "--train", (dir / "t.dfm").string(), "--eval",
                        (dir / "e.dfm").string(), "--holdout", "31", "--seed", "7"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto eval = load_manifest((dir / "e.dfm").string(), catalog());
    const auto train = load_manifest((dir / "t.dfm").string(), catalog());
    std::set<std::string> es, ts;
    for (const auto& s : eval.segments) es.insert(s.speaker_id);
    for (const auto& s : train.segments) ts.insert(s.speaker_id);
    EXPECT_EQ(es.size(), 31u);
    EXPECT_EQ(ts.size(), 17310u);
    const auto again = run_cli({"split", "--manifest", m, "--train", (dir / "t2.dfm").string(), "--eval",
                            (dir / "e2.dfm").string(), "--holdout", "31", "--seed", "7"});
    ASSERT_EQ(again.code, 0);
    EXPECT_EQ(load_manifest((dir / "e2.dfm").string(), catalog()).segments, eval.segments);

    const auto too_many = run_cli({"split", "--manifest", m, "--train", (dir / "t3.dfm").string(), "--eval",
                               (dir / "e3.dfm").string(), "--holdout", "17341"});
    EXPECT_EQ(too_many.code, cli::kExitFailure);
}

TEST(Cli, ExtendVocabAndBuildSequences) {
    curator::testing::TempDir dir;
    {
        std::ofstream v(dir / "base.txt");
        for (const char* t : {"[STOP]", "[UNK]", "[SPACE]", "[bots]", "[eots]", "[boas]", "[eoas]", "[ar]", "[en]",
                              "ب", "ت"}) {
            v << t << '\n';
        }
    }
    auto r = run_cli({"extend-vocab", "--vocab", (dir / "base.txt").string(), "--out", (dir / "ext.txt").string(),
                  "--embedding-dim", "16", "--embeddings-out", (dir / "emb.json").string(), "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ext = Vocabulary::load(dir / "ext.txt");
    EXPECT_EQ(ext.size(), 33u);
    EXPECT_EQ(ext.find("[dialect:ALG]"), 11);
    const auto emb = json::parse(std::ifstream(dir / "emb.json"));
    EXPECT_EQ(emb["rows"], 22);
    EXPECT_EQ(emb["first_id"], 11);
    EXPECT_EQ(emb["values"].size(), 22u * 16u);
    EXPECT_TRUE(fs::exists(dir / "ext.txt.meta.json"));

    auto a = segment("a", "s", "بت ب");
    a.dialect = DialectLabel("EGY");
    const auto m = write_manifest_file(dir, "m.dfm", {a, segment("b", "s", "ت")});
    std::ofstream(dir / "codes.json") << R"({"a":[1,2,3]})";
    r = run_cli({"build-seq", "--vocab", (dir / "ext.txt").string(), "--manifest", m, "--out",
             (dir / "seq.jsonl").string(), "--with-dialect", "--audio-codes", (dir / "codes.json").string(),
             "--speaker-slots", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(dir / "seq.jsonl");
    std::string line;
    std::getline(in, line);
    const auto first = json::parse(line);
    EXPECT_EQ(first["segment_id"], "a");
    // s0 s1 [bots] [ar] [dialect:EGY] ب ت [SPACE] ب [eots] [boas] 1 2 3 [eoas]
    const auto& tokens = first["tokens"];
    ASSERT_EQ(tokens.size(), 15u);
    EXPECT_EQ(tokens[0], json::array({0, 0}));
    EXPECT_EQ(tokens[4], json::array({1, *ext.find("[dialect:EGY]")}));
    EXPECT_EQ(tokens[11], json::array({2, 1}));
    std::getline(in, line);
    EXPECT_EQ(json::parse(line)["tokens"].size(), 4u);

    r = run_cli({"extend-vocab", "--vocab", (dir / "ext.txt").string(), "--out", (dir / "again.txt").string()});
    EXPECT_EQ(r.code, cli::kExitFailure);
}

TEST(Cli, ReportMergesMos) {
    curator::testing::TempDir dir;
    std::ofstream(dir / "r.csv") << "model,wer,secs\nbaseline,0.1,0.75\nft-dialect,0.05,0.8\n";
    std::ofstream(dir / "mos.csv") << "model_name,mos,count,std\nbaseline,3.5,4,0.5\nft-dialect,4.25,4,0.25\n";
    auto r = run_cli({"report", "--report", (dir / "r.csv").string(), "--mos", (dir / "mos.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("| Model | WER | SECS | MOS |"), std::string::npos);
    EXPECT_NE(r.out.find("| ft-dialect | 5.00 | 0.800 | 4.25 |"), std::string::npos);
    r = run_cli({"report", "--report", (dir / "r.csv").string(), "--format", "csv"});
    EXPECT_EQ(r.out, "model,wer,secs\nbaseline,0.10000000000000001,0.75\nft-dialect,0.050000000000000003,0.80000000000000004\n");
}

TEST(Cli, MiniCorpusPipelineThroughTheBinary) {
    curator::testing::TempDir dir;
    const auto mc = mini::generate_mini_corpus(dir / "mc", curator::testing::kStub);
    const auto p = run_process({curator::testing::kCli, "--log-level", "warn", "run-pipeline", "--pipeline",
                                mc.pipeline_config.string()},
                               "", std::chrono::seconds(120));
    ASSERT_TRUE(p.spawned);
    EXPECT_EQ(p.exit_status, 0);
    const auto report = json::parse(std::ifstream(mc.root / "out" / "report.json"));
    EXPECT_EQ(report["completed"], true);
    EXPECT_EQ(report["split"]["holdout_speakers"].size(), mc.holdout_count);
}

TEST(Cli, HaltedPipelineExitsOne) {
    curator::testing::TempDir dir;
    const auto mc = mini::generate_mini_corpus(dir / "mc", curator::testing::kStub);
    auto cfg = json::parse(std::ifstream(mc.pipeline_config));
    cfg["adapters"]["asr"]["command"] = {"/nonexistent/asr"};
    std::ofstream(mc.root / "broken.json") << cfg.dump();
    const auto r = run_cli({"--log-level", "off", "run-pipeline", "--pipeline", (mc.root / "broken.json").string(),
                        "--output-dir", (dir / "out").string()});
    EXPECT_EQ(r.code, cli::kExitFailure);
    EXPECT_EQ(r.json_line("error")["stage"], "asr");
    EXPECT_TRUE(fs::exists(dir / "out" / "01-denoise.dfm"));
}
