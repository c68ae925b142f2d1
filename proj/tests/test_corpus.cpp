#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "curator/error.hpp"
#include "curator/corpus.hpp"
#include "curator/dialect.hpp"
#include "test_support.hpp"

using namespace curator;
using curator::testing::segment;

namespace {

const DialectCatalog& catalog() {
    static const auto c = DialectCatalog::default_catalog();
    return c;
}

std::string header() { return R"({"format":"dfm/1","created_at":"2024-01-01T00:00:00Z","provenance":[]})"; }

}  // namespace

TEST(DialectCatalog, DefaultHas22DistinctCodesIncludingMsa) {
    const auto& c = catalog();
    ASSERT_EQ(c.size(), 22u);
    std::set<std::string> codes;
    for (const auto& l : c.labels()) codes.insert(l.code());
    EXPECT_EQ(codes.size(), 22u);
    EXPECT_TRUE(c.contains("MSA"));
}

TEST(DialectCatalog, RejectsWrongSizeOrMissingMsa) {
    EXPECT_THROW(DialectCatalog::from_codes({"EGY", "MSA"}), ValidationError);
    std::vector<std::string> codes;
    for (int i = 0; i < 22; ++i) codes.push_back("D" + std::to_string(i));
    EXPECT_THROW(DialectCatalog::from_codes(codes), ValidationError);
    codes.back() = "MSA";
    EXPECT_EQ(DialectCatalog::from_codes(codes).size(), 22u);
    codes[0] = codes[1];
    EXPECT_THROW(DialectCatalog::from_codes(codes), ValidationError);
}

TEST(DialectCatalog, ParseUnknownThrows) {
    EXPECT_EQ(catalog().parse("EGY").code(), "EGY");
    EXPECT_THROW(catalog().parse("XXX"), ValidationError);
}

TEST(Manifest, EmptyStreamHasNoSegments) {
    EXPECT_TRUE(parse_manifest(std::string_view(""), catalog()).segments.empty());
}

TEST(Manifest, SingleLineRoundTripsBitEqual) {
    const std::string text = header() + "\n" +
                             R"(["s1","/a/s1.wav","spk1",3.25,16000,"female","مرحبا بكم",{"dialect":"EGY"}])" + "\n";
    const auto m = parse_manifest(std::string_view(text), catalog());
    ASSERT_EQ(m.segments.size(), 1u);
    const auto& s = m.segments[0];
    EXPECT_EQ(s.segment_id, "s1");
    EXPECT_EQ(s.audio_path, "/a/s1.wav");
    EXPECT_EQ(s.speaker_id, "spk1");
    EXPECT_EQ(s.duration_s, 3.25);
    EXPECT_EQ(s.sample_rate_hz, 16000);
    EXPECT_EQ(s.gender, Gender::female);
    EXPECT_EQ(s.transcript, "مرحبا بكم");
    ASSERT_TRUE(s.dialect);
    EXPECT_EQ(s.dialect->code(), "EGY");
    EXPECT_FALSE(s.hypothesis_transcript);
    EXPECT_EQ(write_manifest(m), text);
}

TEST(Manifest, NegativeDurationNamesField) {
    const std::string text = header() + "\n" + R"(["s1","a.wav","spk",-1,16000,"male","x"])" + "\n";
    try {
        parse_manifest(std::string_view(text), catalog());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "duration_s");
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("duration_s"), std::string::npos);
    }
}

TEST(Manifest, MalformedLinesNameLineAndField) {
    auto field_of = [](const std::string& row) {
        try {
            parse_manifest(std::string_view(header() + "\n" + row + "\n"), catalog());
        } catch (const ParseError& e) {
            return e.field();
        }
        return std::string("<none>");
    };
    EXPECT_EQ(field_of(R"(["s1","a.wav","spk",1,16000,"robot","x"])"), "gender");
    EXPECT_EQ(field_of(R"(["s1","a.wav","spk",1,"16k","male","x"])"), "sample_rate_hz");
    EXPECT_EQ(field_of(R"(["s1","a.wav","spk",1,16000,"male","x",{"dialect":"XXX"}])"), "dialect");
    EXPECT_EQ(field_of(R"(["s1","a.wav","spk",1,16000,"male","x",{"wer":-0.5}])"), "wer");
    EXPECT_EQ(field_of(R"(["s1","a.wav","spk",1,16000,"male","x",{"colour":"red"}])"), "colour");
    EXPECT_EQ(field_of(R"(["","a.wav","spk",1,16000,"male","x"])"), "segment_id");
    EXPECT_EQ(field_of(R"(["s1","a.wav","spk",1,16000])"), "");
    EXPECT_EQ(field_of("not json"), "");
}

TEST(Manifest, WrongHeaderRejected) {
    EXPECT_THROW(parse_manifest(std::string_view(R"({"format":"dfm/2"})"), catalog()), ParseError);
    EXPECT_THROW(parse_manifest(std::string_view(R"(["s1","a","b",1,16000,"male","x"])"), catalog()), ParseError);
}

TEST(Manifest, DuplicateIdRejected) {
    const std::string row = R"(["s1","a.wav","spk",1,16000,"male","x"])";
    EXPECT_THROW(parse_manifest(std::string_view(header() + "\n" + row + "\n" + row + "\n"), catalog()),
                 ValidationError);
}

TEST(Manifest, EmptyManifestWritesHeaderOnly) {
    CorpusManifest m;
    m.metadata.created_at = "2024-01-01T00:00:00Z";
    const auto text = write_manifest(m);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
    EXPECT_EQ(parse_manifest(std::string_view(text), catalog()), m);
}

TEST(Manifest, AbsentOptionalFieldsAreOmitted) {
    CorpusManifest m;
    m.segments.push_back(segment("s1", "spk"));
    auto text = write_manifest(m);
    text = text.substr(text.find('\n') + 1);
    EXPECT_EQ(text.find("dialect"), std::string::npos);
    EXPECT_EQ(text.find("hypothesis_transcript"), std::string::npos);
    EXPECT_EQ(text.find("\"\""), std::string::npos);
    EXPECT_EQ(text.find("wer"), std::string::npos);
}

TEST(Manifest, InfiniteWerSurvivesRoundTrip) {
    CorpusManifest m;
    auto s = segment("s1", "spk", "");
    s.hypothesis_transcript = "a";
    s.wer = std::numeric_limits<double>::infinity();
    m.segments.push_back(s);
    const auto back = parse_manifest(std::string_view(write_manifest(m)), catalog());
    ASSERT_TRUE(back.segments[0].wer);
    EXPECT_TRUE(std::isinf(*back.segments[0].wer));
}

// Hand-rolled generator: random ids, Arabic/ASCII/escape-heavy text, every
// optional field independently present or absent.
TEST(ManifestProperty, RandomManifestsRoundTrip) {
    std::mt19937_64 rng(20240501);
    const std::vector<std::string> pieces = {"كتاب", "مدرسة", "a", "\"quoted\"", "tab\there", "back\\slash",
                                             "سَلامٌ", "😀", "new\nline", " ", "ٱلْحَمْدُ"};
    auto text = [&](std::size_t max_words) {
        std::string t;
        const auto n = rng() % (max_words + 1);
        for (std::size_t i = 0; i < n; ++i) {
            if (i) t += ' ';
            t += pieces[rng() % pieces.size()];
        }
        return t;
    };
    const auto& labels = catalog().labels();
    for (int trial = 0; trial < 200; ++trial) {
        CorpusManifest m;
        m.metadata.created_at = "2024-05-01T12:00:00Z";
        const auto prov = rng() % 4;
        for (std::size_t p = 0; p < prov; ++p) {
            m.metadata.provenance.append({"stage" + std::to_string(p), "2024-05-01T12:00:0" + std::to_string(p) + "Z",
                                          R"({"k":)" + std::to_string(rng() % 100) + "}"});
        }
        const auto n = trial == 0 ? 50 : rng() % 50;
        for (std::size_t i = 0; i < n; ++i) {
            SegmentRecord s;
            s.segment_id = "seg-" + std::to_string(trial) + "-" + std::to_string(i);
            s.audio_path = "/corpus/" + text(2) + "/" + s.segment_id + ".wav";
            s.speaker_id = "spk" + std::to_string(rng() % 7);
            s.duration_s = std::ldexp(static_cast<double>(rng() % (1ull << 40)), -30);
            s.sample_rate_hz = rng() % 3 == 0 ? 22050 : 16000;
            s.gender = static_cast<Gender>(rng() % 3);
            s.transcript = text(8);
            if (rng() % 2) s.dialect = labels[rng() % labels.size()];
            if (rng() % 2) s.hypothesis_transcript = text(8);
            if (rng() % 3 == 0) {
                s.wer = rng() % 5 == 0 ? std::numeric_limits<double>::infinity()
                                       : static_cast<double>(rng() % 1000) / 7.0;
            }
            m.segments.push_back(std::move(s));
        }
        const auto back = parse_manifest(std::string_view(write_manifest(m)), catalog());
        ASSERT_EQ(back, m) << "trial " << trial;
    }
}

TEST(Manifest, SaveIsAtomicAndLoadable) {
    curator::testing::TempDir dir;
    CorpusManifest m;
    m.segments.push_back(segment("s1", "spk"));
    const auto path = (dir / "m.dfm").string();
    save_manifest(m, path);
    EXPECT_EQ(load_manifest(path, catalog()), m);
    for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
        EXPECT_EQ(e.path().filename(), "m.dfm") << "temp file left behind";
    }
}

TEST(Manifest, DeriveAppendsOneProvenanceEntry) {
    CorpusManifest m;
    m.metadata.provenance.append({"a", "t0", "{}"});
    const auto d = m.derive({segment("s1", "spk")}, {"b", "t1", "{}"});
    EXPECT_EQ(m.metadata.provenance.size(), 1u);
    ASSERT_EQ(d.metadata.provenance.size(), 2u);
    EXPECT_EQ(d.metadata.provenance.entries()[0], m.metadata.provenance.entries()[0]);
    EXPECT_EQ(d.metadata.provenance.entries()[1].stage, "b");
}

TEST(CorpusStats, ThreeTwentyMinuteSegmentsMakeOneHour) {
    CorpusManifest m;
    for (int i = 0; i < 3; ++i) m.segments.push_back(segment("s" + std::to_string(i), "spk", "x", 1200.0));
    EXPECT_DOUBLE_EQ(corpus_stats(m).total_hours, 1.0);
}

TEST(CorpusStats, GenderFractionsMatchFixtureProportions) {
    CorpusManifest m;
    for (int i = 0; i < 100; ++i) {
        auto s = segment("s" + std::to_string(i), "spk" + std::to_string(i % 9));
        s.gender = i < 69 ? Gender::male : i < 75 ? Gender::female : Gender::unknown;
        m.segments.push_back(s);
    }
    const auto st = corpus_stats(m);
    EXPECT_NEAR(st.gender_fractions.at(Gender::male), 0.69, 1e-12);
    EXPECT_NEAR(st.gender_fractions.at(Gender::female), 0.06, 1e-12);
    EXPECT_NEAR(st.gender_fractions.at(Gender::unknown), 0.25, 1e-12);
    double sum = 0;
    for (const auto& [g, f] : st.gender_fractions) sum += f;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_EQ(st.speaker_count, 9u);
}

TEST(CorpusStats, HistogramEqualsGeneratorTallies) {
    std::mt19937_64 rng(3);
    const auto& labels = catalog().labels();
    std::map<std::string, std::size_t> expected;
    CorpusManifest m;
    for (int i = 0; i < 500; ++i) {
        auto s = segment("s" + std::to_string(i), "spk" + std::to_string(rng() % 40));
        const auto pick = rng() % (labels.size() + 1);
        if (pick < labels.size()) {
            s.dialect = labels[pick];
            ++expected[labels[pick].code()];
        } else {
            ++expected["unlabeled"];
        }
        m.segments.push_back(s);
    }
    const auto st = corpus_stats(m);
    EXPECT_EQ(st.dialect_histogram, expected);
    std::size_t total = 0;
    for (const auto& [code, n] : st.dialect_histogram) total += n;
    EXPECT_EQ(total, m.segments.size());
}

TEST(Admission, RequiresPositiveDurationAnd16k) {
    auto s = segment("s", "spk");
    EXPECT_FALSE(admission_problem(s));
    s.duration_s = 0.0;
    EXPECT_TRUE(admission_problem(s));
    s.duration_s = 1.0;
    s.sample_rate_hz = 22050;
    EXPECT_TRUE(admission_problem(s));
}
