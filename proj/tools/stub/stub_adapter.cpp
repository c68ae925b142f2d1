// Scriptable adapter for tests and the bundled mini corpus. Speaks the
// JSON-lines adapter protocol; the mode picks how requests are answered.
//
//   denoise              copy audio_path into output_dir (same file name)
//   asr --table F        text for the file stem of audio_path, from a JSON map
//   classify --labels L  scores hashed from (salt, transcript, label)
//   classify --table F   scores for the transcript, from a JSON map
//   synthesize           copy reference_audio_path to output_dir/<request_id>.wav
//   embed                spectral embedding of audio_path
//   echo                 payload echoed back
//   sleep --seconds S    sleep, then behave like echo
//   crash                read one line, exit 3 without answering
//   garbage              answer every line with non-JSON text
//
// --drop ID / --error ID skip or fail a single request in any mode.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "curator/adapters.hpp"
#include "curator/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

json answer(const std::string& mode, const curator::AdapterEnvelope& req, const json& table,
            const std::vector<std::string>& labels, const std::string& salt) {
    const auto& p = req.payload;
    if (mode == "echo" || mode == "sleep") return p;
    if (mode == "denoise") {
        const fs::path src = p.at("audio_path").get<std::string>();
        fs::path dir = p.value("output_dir", std::string());
        if (dir.empty()) dir = src.parent_path() / "denoised";
        fs::create_directories(dir);
        const fs::path dst = dir / src.filename();
        fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
        return {{"audio_path", dst.string()}};
    }
    if (mode == "asr") {
        const auto stem = fs::path(p.at("audio_path").get<std::string>()).stem().string();
        if (!table.contains(stem)) throw std::runtime_error("no transcript for " + stem);
        return {{"text", table[stem]}};
    }
    if (mode == "classify") {
        const auto transcript = p.at("transcript").get<std::string>();
        if (!table.is_null()) {
            if (!table.contains(transcript)) throw std::runtime_error("no scores for transcript");
            return {{"scores", table[transcript]}};
        }
        json scores = json::object();
        for (const auto& l : labels) {
            const auto h = fnv(l, fnv(transcript, fnv(salt)));
            scores[l] = static_cast<double>(h % 1000) / 1000.0;
        }
        return {{"scores", scores}};
    }
    if (mode == "synthesize") {
        const fs::path ref = p.at("reference_audio_path").get<std::string>();
        fs::path dir = p.value("output_dir", std::string());
        if (dir.empty()) dir = ref.parent_path() / "synth";
        fs::create_directories(dir);
        const fs::path dst = dir / (req.request_id + ".wav");
        fs::copy_file(ref, dst, fs::copy_options::overwrite_existing);
        return {{"audio_path", dst.string()}};
    }
    if (mode == "embed") {
        curator::SpectralEmbedder embedder;
        return {{"embedding", embedder.embed(p.at("audio_path").get<std::string>()).vector}};
    }
    throw std::runtime_error("unknown mode " + mode);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"curator test adapter"};
    std::string mode;
    std::string table_path;
    std::string labels_csv;
    std::string salt;
    double seconds = 0.0;
    std::set<std::string> drop, fail;
    app.add_option("mode", mode)->required();
    app.add_option("--table", table_path);
    app.add_option("--labels", labels_csv);
    app.add_option("--salt", salt);
    app.add_option("--seconds", seconds);
    app.add_option("--drop", drop);
    app.add_option("--error", fail);
    CLI11_PARSE(app, argc, argv);

    json table;
    if (!table_path.empty()) table = load_json(table_path);
    std::vector<std::string> labels;
    for (std::size_t pos = 0; !labels_csv.empty() && pos != std::string::npos;) {
        const auto next = labels_csv.find(',', pos);
        labels.push_back(labels_csv.substr(pos, next == std::string::npos ? next : next - pos));
        pos = next == std::string::npos ? next : next + 1;
    }

    if (mode == "sleep") std::this_thread::sleep_for(std::chrono::duration<double>(seconds));

    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        if (mode == "crash") return 3;
        if (mode == "garbage") {
            std::cout << "this is not json {" << std::endl;
            continue;
        }
        curator::AdapterEnvelope req;
        try {
            req = curator::parse_envelope(line);
        } catch (const std::exception& e) {
            std::cerr << "stub: " << e.what() << "\n";
            continue;
        }
        if (drop.contains(req.request_id)) continue;
        curator::AdapterEnvelope resp{req.request_id, req.kind, json::object(), std::nullopt};
        if (fail.contains(req.request_id)) {
            resp.error = "injected failure";
        } else {
            try {
                resp.payload = answer(mode, req, table, labels, salt);
            } catch (const std::exception& e) {
                resp.error = e.what();
            }
        }
        std::cout << curator::to_line(resp) << std::endl;
    }
    return 0;
}
