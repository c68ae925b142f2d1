#include <iostream>

#include <CLI11.hpp>

#include "mini_corpus.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Write the bundled 20-segment synthetic corpus and stub adapter configs"};
    std::string out;
    std::string stub;
    std::uint64_t seed = 7;
    app.add_option("--out", out, "Output directory")->required();
    app.add_option("--stub", stub, "Path to curator-stub-adapter")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Audio and split seed")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        const auto mc = curator::mini::generate_mini_corpus(out, stub, seed);
        std::cout << "manifest: " << mc.manifest.string() << "\n"
                  << "pipeline: " << mc.pipeline_config.string() << "\n"
                  << "segments: " << mc.segment_count << ", corrupted: " << mc.corrupted_ids.size()
                  << ", expected retained: " << mc.expected_retained << "\n";
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
