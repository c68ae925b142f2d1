#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace curator {

/// Mono PCM samples in [-1, 1].
struct AudioBuffer {
    std::vector<float> samples;
    std::int32_t sample_rate_hz = 16000;
};

/// Reads a RIFF/WAVE file holding mono 16-bit PCM or 32-bit float samples.
/// 16-bit samples are scaled by 1/32768. Throws IoError or ValidationError.
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples outside [-1, 1] are clamped.
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

double duration_seconds(const AudioBuffer& audio);

struct MelConfig {
    std::size_t n_fft = 1024;
    std::size_t hop_length = 256;
    std::size_t n_mels = 80;
    double fmin_hz = 0.0;
    double fmax_hz = 8000.0;

    /// Throws ValidationError unless hop <= n_fft and 0 <= fmin < fmax <= sr/2.
    void validate(std::int32_t sample_rate_hz) const;
};

inline constexpr double kLogMelFloor = 1e-10;

/// Row-major [n_mels x frames] matrix of ln(mel power + 1e-10).
class MelMatrix {
public:
    MelMatrix() = default;
    MelMatrix(std::size_t n_mels, std::size_t frames)
        : n_mels_(n_mels), frames_(frames), data_(n_mels * frames, 0.0) {}

    std::size_t n_mels() const noexcept { return n_mels_; }
    std::size_t frames() const noexcept { return frames_; }

    double& at(std::size_t mel, std::size_t frame) { return data_[mel * frames_ + frame]; }
    double at(std::size_t mel, std::size_t frame) const { return data_[mel * frames_ + frame]; }
    std::span<const double> row(std::size_t mel) const {
        return {data_.data() + mel * frames_, frames_};
    }
    const std::vector<double>& data() const noexcept { return data_; }

    friend bool operator==(const MelMatrix&, const MelMatrix&) = default;

private:
    std::size_t n_mels_ = 0;
    std::size_t frames_ = 0;
    std::vector<double> data_;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-scale filterbank, [n_mels x (n_fft/2 + 1)] row-major.
std::vector<double> mel_filterbank(const MelConfig& cfg, std::int32_t sample_rate_hz);

/// Frames are uncentered Hann-windowed slices, so
/// frames = floor((len - n_fft) / hop) + 1. Throws ValidationError when the
/// buffer is shorter than n_fft.
MelMatrix log_mel_spectrogram(const AudioBuffer& audio, const MelConfig& cfg);

}  // namespace curator
