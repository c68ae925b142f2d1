#include "curator/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "curator/error.hpp"
#include "curator/file_util.hpp"

namespace curator {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
};

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t size = bytes.size();
    const std::string where = path.string();

    if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
        throw ValidationError(where + ": not a RIFF/WAVE file");
    }

    FmtChunk fmt;
    bool have_fmt = false;
    const unsigned char* pcm = nullptr;
    std::size_t pcm_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= size) {
        const unsigned char* id = data + pos;
        std::size_t len = le32(data + pos + 4);
        std::size_t body = pos + 8;
        if (body + len > size) len = size - body;  // tolerate truncated trailing chunk
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw ValidationError(where + ": fmt chunk too short");
            fmt.format = le16(data + body);
            fmt.channels = le16(data + body + 2);
            fmt.sample_rate = le32(data + body + 4);
            fmt.bits = le16(data + body + 14);
            if (fmt.format == kFormatExtensible) {
                if (len < 40) throw ValidationError(where + ": extensible fmt chunk too short");
                fmt.format = le16(data + body + 24);  // first two bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            pcm = data + body;
            pcm_size = len;
        }
        pos = body + len + (len & 1);
    }

    if (!have_fmt) throw ValidationError(where + ": missing fmt chunk");
    if (pcm == nullptr) throw ValidationError(where + ": missing data chunk");
    if (fmt.channels != 1) {
        throw ValidationError(where + ": expected mono, got " + std::to_string(fmt.channels) +
                              " channels");
    }
    if (fmt.sample_rate == 0) throw ValidationError(where + ": sample rate is zero");

    AudioBuffer out;
    out.sample_rate_hz = static_cast<std::int32_t>(fmt.sample_rate);
    if (fmt.format == kFormatPcm && fmt.bits == 16) {
        out.samples.resize(pcm_size / 2);
        for (std::size_t i = 0; i < out.samples.size(); ++i) {
            auto v = static_cast<std::int16_t>(le16(pcm + 2 * i));
            out.samples[i] = static_cast<float>(v) / 32768.0f;
        }
    } else if (fmt.format == kFormatFloat && fmt.bits == 32) {
        out.samples.resize(pcm_size / 4);
        for (std::size_t i = 0; i < out.samples.size(); ++i) {
            std::uint32_t bits = le32(pcm + 4 * i);
            float v;
            std::memcpy(&v, &bits, sizeof v);
            if (!std::isfinite(v)) v = 0.0f;
            out.samples[i] = std::clamp(v, -1.0f, 1.0f);
        }
    } else {
        throw ValidationError(where + ": unsupported codec (format " + std::to_string(fmt.format) +
                              ", " + std::to_string(fmt.bits) +
                              " bits); only 16-bit PCM and 32-bit float are read");
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
    const std::uint32_t n = static_cast<std::uint32_t>(audio.samples.size());
    const std::uint32_t data_bytes = n * 2;
    std::string buf;
    buf.reserve(44 + data_bytes);
    auto put16 = [&](std::uint16_t v) {
        buf.push_back(static_cast<char>(v & 0xff));
        buf.push_back(static_cast<char>(v >> 8));
    };
    auto put32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    const auto sr = static_cast<std::uint32_t>(audio.sample_rate_hz);
    buf += "RIFF";
    put32(36 + data_bytes);
    buf += "WAVEfmt ";
    put32(16);
    put16(kFormatPcm);
    put16(1);
    put32(sr);
    put32(sr * 2);
    put16(2);
    put16(16);
    buf += "data";
    put32(data_bytes);
    for (float s : audio.samples) {
        float c = std::clamp(s, -1.0f, 1.0f);
        auto v = static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0f, -32768.0f, 32767.0f)));
        put16(static_cast<std::uint16_t>(v));
    }
    write_file_atomic(path, buf);
}

double duration_seconds(const AudioBuffer& audio) {
    if (audio.sample_rate_hz <= 0) return 0.0;
    return static_cast<double>(audio.samples.size()) / static_cast<double>(audio.sample_rate_hz);
}

void MelConfig::validate(std::int32_t sample_rate_hz) const {
    if (n_fft < 2) throw ValidationError("n_fft must be >= 2");
    if (hop_length == 0 || hop_length > n_fft) throw ValidationError("hop_length must be in [1, n_fft]");
    if (n_mels == 0) throw ValidationError("n_mels must be > 0");
    if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz)) throw ValidationError("need 0 <= fmin < fmax");
    if (fmax_hz > sample_rate_hz / 2.0) throw ValidationError("fmax exceeds the Nyquist frequency");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filterbank(const MelConfig& cfg, std::int32_t sample_rate_hz) {
    cfg.validate(sample_rate_hz);
    const std::size_t bins = cfg.n_fft / 2 + 1;
    const double lo = hz_to_mel(cfg.fmin_hz);
    const double hi = hz_to_mel(cfg.fmax_hz);

    std::vector<double> edges(cfg.n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
    }

    std::vector<double> fb(cfg.n_mels * bins, 0.0);
    const double bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(cfg.n_fft);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            double w = 0.0;
            if (f > left && f <= centre) {
                w = (f - left) / (centre - left);
            } else if (f > centre && f < right) {
                w = (right - f) / (right - centre);
            }
            fb[m * bins + k] = w;
        }
    }
    return fb;
}

namespace {

// FFTW's planner is not re-entrant; execution on a private plan is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
        out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan_);
        }
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() { return in_; }
    void execute() { fftw_execute(plan_); }
    double power(std::size_t k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }

private:
    std::size_t n_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

}  // namespace

MelMatrix log_mel_spectrogram(const AudioBuffer& audio, const MelConfig& cfg) {
    cfg.validate(audio.sample_rate_hz);
    const std::size_t len = audio.samples.size();
    if (len < cfg.n_fft) {
        throw ValidationError("audio has " + std::to_string(len) + " samples, fewer than n_fft=" +
                              std::to_string(cfg.n_fft));
    }
    const std::size_t frames = (len - cfg.n_fft) / cfg.hop_length + 1;
    const std::size_t bins = cfg.n_fft / 2 + 1;
    const auto fb = mel_filterbank(cfg, audio.sample_rate_hz);

    // Periodic Hann window.
    std::vector<double> window(cfg.n_fft);
    for (std::size_t i = 0; i < cfg.n_fft; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(cfg.n_fft));
    }

    RealFft fft(cfg.n_fft);
    std::vector<double> power(bins);
    MelMatrix mel(cfg.n_mels, frames);
    for (std::size_t t = 0; t < frames; ++t) {
        const float* frame = audio.samples.data() + t * cfg.hop_length;
        double* in = fft.input();
        for (std::size_t i = 0; i < cfg.n_fft; ++i) in[i] = static_cast<double>(frame[i]) * window[i];
        fft.execute();
        for (std::size_t k = 0; k < bins; ++k) power[k] = fft.power(k);
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            const double* w = fb.data() + m * bins;
            double e = 0.0;
            for (std::size_t k = 0; k < bins; ++k) e += w[k] * power[k];
            mel.at(m, t) = std::log(e + kLogMelFloor);
        }
    }
    return mel;
}

}  // namespace curator
