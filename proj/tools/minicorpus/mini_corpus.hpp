#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "curator/adapters.hpp"

namespace curator::mini {

/// A small self-contained corpus wired to the stub adapter: 20 synthetic
/// voiced segments from 6 speakers, 4 of which get a wrong ASR hypothesis.
struct MiniCorpus {
    std::filesystem::path root;
    std::filesystem::path manifest;
    std::filesystem::path pipeline_config;
    std::filesystem::path asr_adapter;
    std::filesystem::path label_mapping;
    /// Synthesizer adapter configs in report order: baseline first.
    std::vector<std::pair<std::string, std::filesystem::path>> synthesizers;

    std::size_t segment_count = 0;
    std::size_t speaker_count = 0;
    std::size_t holdout_count = 0;
    std::vector<std::string> corrupted_ids;
    std::size_t expected_retained = 0;
};

/// Writes audio, manifest and adapter configs under `dir` (created if
/// needed). `stub_adapter` is the path of the curator-stub-adapter binary.
MiniCorpus generate_mini_corpus(const std::filesystem::path& dir, const std::filesystem::path& stub_adapter,
                                std::uint64_t seed = 7);

}  // namespace curator::mini
