#include "mini_corpus.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "curator/audio.hpp"
#include "curator/corpus.hpp"
#include "curator/file_util.hpp"

namespace curator::mini {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kSegments = 20;
constexpr std::size_t kSpeakers = 6;
constexpr std::size_t kHoldout = 2;

const std::vector<std::string> kSentences = {
    "السلام عليكم ورحمة الله",
    "كيف حالك اليوم يا صديقي",
    "الجو جميل في المدينة",
    "ذهبت إلى السوق في الصباح",
    "هذا الكتاب مفيد جدا",
    "نحن نحب القراءة والكتابة",
    "القهوة العربية لذيذة",
    "سافرنا إلى البحر في الصيف",
    "المدرسة قريبة من البيت",
    "شكرا لك على المساعدة",
};

// Harmonic stack with a slow syllable envelope; each speaker gets its own
// pitch and spectral tilt so the spectral embedder can tell them apart.
AudioBuffer voice(std::size_t speaker, double seconds, std::mt19937_64& rng) {
    AudioBuffer a;
    a.sample_rate_hz = kPipelineSampleRate;
    const auto n = static_cast<std::size_t>(seconds * a.sample_rate_hz);
    a.samples.resize(n);
    const double f0 = 95.0 + 30.0 * static_cast<double>(speaker);
    const double tilt = 0.55 + 0.07 * static_cast<double>(speaker);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / a.sample_rate_hz;
        double v = 0.0;
        double amp = 1.0;
        for (int h = 1; h <= 12; ++h) {
            v += amp * std::sin(2.0 * std::numbers::pi * f0 * h * t);
            amp *= tilt;
        }
        const double env = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 3.0 * t);
        a.samples[i] = static_cast<float>(0.2 * env * v + noise(rng));
    }
    return a;
}

json adapter(const std::string& name, const std::string& kind, std::vector<std::string> command,
             std::vector<std::string> labels = {}) {
    json j{{"name", name}, {"kind", kind}, {"command", command}, {"timeout_s", 30}, {"batch_size", 8}};
    if (!labels.empty()) j["labels"] = labels;
    return j;
}

void write_json(const fs::path& p, const json& j) { write_file_atomic(p, j.dump(2) + "\n"); }

}  // namespace

MiniCorpus generate_mini_corpus(const fs::path& dir, const fs::path& stub_adapter, std::uint64_t seed) {
    MiniCorpus mc;
    mc.root = fs::absolute(dir);
    fs::create_directories(mc.root / "audio");
    const std::string stub = fs::absolute(stub_adapter).string();
    std::mt19937_64 rng(seed);

    CorpusManifest manifest;
    manifest.metadata.created_at = utc_timestamp();
    json asr_table = json::object();
    for (std::size_t i = 0; i < kSegments; ++i) {
        const std::size_t speaker = i % kSpeakers;
        char id[32];
        std::snprintf(id, sizeof id, "seg%03zu", i);
        const double seconds = 5.2 + 0.1 * static_cast<double>(i % 13);
        const fs::path wav = mc.root / "audio" / (std::string(id) + ".wav");
        write_wav(wav, voice(speaker, seconds, rng));

        SegmentRecord s;
        s.segment_id = id;
        s.audio_path = wav.string();
        s.speaker_id = "spk" + std::to_string(speaker);
        s.duration_s = seconds;
        s.gender = speaker % 2 == 0 ? Gender::male : Gender::female;
        s.transcript = kSentences[i % kSentences.size()];
        manifest.segments.push_back(s);

        // Every fifth segment gets a hypothesis with one substituted word.
        if (i % 5 == 3) {
            asr_table[id] = s.transcript + " زائد";
            mc.corrupted_ids.push_back(id);
        } else {
            asr_table[id] = s.transcript;
        }
    }
    mc.manifest = mc.root / "manifest.dfm";
    save_manifest(manifest, mc.manifest.string());

    const fs::path adapters = mc.root / "adapters";
    fs::create_directories(adapters);
    write_json(adapters / "asr_table.json", asr_table);

    const json denoise = adapter("stub-denoise", "denoise", {stub, "denoise"});
    const json asr = adapter("stub-asr", "asr", {stub, "asr", "--table", (adapters / "asr_table.json").string()});
    const json classifiers = json::array({
        adapter("clf-country", "classify", {stub, "classify", "--labels", "egy,ksa,mor,msa", "--salt", "a"},
                {"egy", "ksa", "mor", "msa"}),
        adapter("clf-region", "classify",
                {stub, "classify", "--labels", "egyptian,gulf,maghrebi,fusha", "--salt", "b"},
                {"egyptian", "gulf", "maghrebi", "fusha"}),
        adapter("clf-city", "classify", {stub, "classify", "--labels", "cairo,riyadh,rabat", "--salt", "c"},
                {"cairo", "riyadh", "rabat"}),
    });
    const json mapping{
        {"clf-country", {{"egy", "EGY"}, {"ksa", "KSA"}, {"mor", "MOR"}, {"msa", "MSA"}}},
        {"clf-region", {{"egyptian", "EGY"}, {"gulf", "KSA"}, {"maghrebi", "MOR"}, {"fusha", "MSA"}}},
        {"clf-city", {{"cairo", "EGY"}, {"riyadh", "KSA"}, {"rabat", "MOR"}}},
    };
    mc.asr_adapter = adapters / "asr.json";
    write_json(mc.asr_adapter, asr);
    mc.label_mapping = mc.root / "label_mapping.json";
    write_json(mc.label_mapping, mapping);

    for (const char* name : {"baseline", "ft-no-dialect", "ft-dialect"}) {
        const fs::path p = adapters / (std::string("synth-") + name + ".json");
        write_json(p, adapter(std::string("synth-") + name, "synthesize", {stub, "synthesize"}));
        mc.synthesizers.emplace_back(name, p);
    }

    const json pipeline{
        {"input_manifest", "manifest.dfm"},
        {"output_dir", "out"},
        {"adapters", {{"denoise", denoise}, {"asr", asr}, {"classifiers", classifiers}}},
        {"filter_threshold", 0.0},
        {"label_mapping", "label_mapping.json"},
        {"holdout_count", kHoldout},
        {"seed", seed},
        {"jobs", 2},
    };
    mc.pipeline_config = mc.root / "pipeline.json";
    write_json(mc.pipeline_config, pipeline);

    mc.segment_count = kSegments;
    mc.speaker_count = kSpeakers;
    mc.holdout_count = kHoldout;
    mc.expected_retained = kSegments - mc.corrupted_ids.size();
    return mc;
}

}  // namespace curator::mini
