#include "notegate/mel.hpp"

#include <algorithm>
#include <cmath>

#include "notegate/dsp.hpp"

namespace notegate {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Bounce reflection about the first and last sample, librosa-style centering.
std::size_t reflect_index(long long i, std::size_t n)
{
    if (n == 1) return 0;
    const long long period = 2 * static_cast<long long>(n - 1);
    long long m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<long long>(n) ? m : period - m);
}

} // namespace

Matrix mel_filterbank(const FeatureConfig& cfg)
{
    if (cfg.n_mels <= 0 || cfg.fft_size <= 0 || cfg.sample_rate <= 0)
        throw DataError("invalid feature config");
    if (cfg.fmax_hz <= cfg.fmin_hz)
        throw DataError("mel filterbank needs fmax > fmin");

    const std::size_t n_bins = static_cast<std::size_t>(cfg.fft_size) / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.fmax_hz);

    std::vector<double> edges_hz(cfg.n_mels + 2);
    for (int k = 0; k < cfg.n_mels + 2; ++k)
        edges_hz[k] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * k / (cfg.n_mels + 1));

    Matrix fb(static_cast<std::size_t>(cfg.n_mels), n_bins);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double lo = edges_hz[m], center = edges_hz[m + 1], hi = edges_hz[m + 2];
        for (std::size_t j = 0; j < n_bins; ++j) {
            const double f = static_cast<double>(j) * cfg.sample_rate / cfg.fft_size;
            const double up = (f - lo) / (center - lo);
            const double down = (hi - f) / (hi - center);
            fb(static_cast<std::size_t>(m), j) = std::max(0.0, std::min(up, down));
        }
    }
    return fb;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const FeatureConfig& cfg)
{
    if (clip.sample_rate != cfg.sample_rate)
        throw DataError(cat("clip rate ", clip.sample_rate, " does not match feature config rate ",
                            cfg.sample_rate, "; resample first"));
    const std::size_t n = clip.samples.size();
    if (n < static_cast<std::size_t>(cfg.hop))
        throw DataError(cat("clip too short for one hop (", n, " < ", cfg.hop, " samples)"));

    const std::size_t fft_size = static_cast<std::size_t>(cfg.fft_size);
    const std::size_t n_bins = fft_size / 2 + 1;
    const std::size_t frames = n / static_cast<std::size_t>(cfg.hop) + 1;
    const long long pad = static_cast<long long>(fft_size) / 2;

    const std::vector<double> window = hann_periodic(fft_size);
    const Matrix fb = mel_filterbank(cfg);

    MelSpectrogram out;
    out.frames = Matrix(frames, static_cast<std::size_t>(cfg.n_mels));
    out.grid.hop_seconds = static_cast<double>(cfg.hop) / cfg.sample_rate;
    out.grid.frame_zero_time = 0.0;

    std::vector<std::complex<double>> buf(fft_size);
    std::vector<double> power(n_bins);
    for (std::size_t t = 0; t < frames; ++t) {
        const long long start = static_cast<long long>(t) * cfg.hop - pad;
        for (std::size_t k = 0; k < fft_size; ++k) {
            const double s = clip.samples[reflect_index(start + static_cast<long long>(k), n)];
            buf[k] = std::complex<double>(s * window[k], 0.0);
        }
        fft_radix2(buf);
        for (std::size_t j = 0; j < n_bins; ++j) power[j] = std::norm(buf[j]);
        for (int m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n_bins; ++j)
                acc += fb(static_cast<std::size_t>(m), j) * power[j];
            out.frames(t, static_cast<std::size_t>(m)) = std::log(acc + cfg.log_floor);
        }
    }
    return out;
}

MelSpectrogram normalize_mel(const MelSpectrogram& mel)
{
    if (mel.normalized) throw DataError("mel spectrogram is already normalized");
    if (!mel.frames.all_finite()) throw DataError("mel spectrogram contains non-finite values");
    if (mel.frames.empty()) throw DataError("cannot normalize an empty mel spectrogram");

    const auto& v = mel.frames.values();
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it;

    MelSpectrogram out;
    out.grid = mel.grid;
    out.normalized = true;
    out.frames = Matrix(mel.frames.rows(), mel.frames.cols());
    if (hi == lo) return out; // constant input maps to all zeros
    auto& w = out.frames.values();
    for (std::size_t i = 0; i < v.size(); ++i)
        w[i] = 2.0 * (v[i] - lo) / (hi - lo) - 1.0;
    return out;
}

} // namespace notegate
