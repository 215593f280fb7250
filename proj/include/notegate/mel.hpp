#pragma once

#include "notegate/audio.hpp"
#include "notegate/matrix.hpp"

namespace notegate {

struct FeatureConfig {
    int sample_rate = 16000;
    int n_mels = 80;
    int hop = 320;      // 20 ms at 16 kHz
    int fft_size = 1024;
    double fmin_hz = 0.0;
    double fmax_hz = 8000.0; // Nyquist at the canonical rate
    double log_floor = 1e-10;
};

// Log-scaled mel spectrogram, one frame per row. `normalized` distinguishes
// the raw log values from the [-1, 1]-scaled form used as the reconstruction
// target.
struct MelSpectrogram {
    Matrix frames; // T x n_mels
    FrameGrid grid;
    bool normalized = false;
};

// Triangular mel filterbank, n_mels x (fft_size/2 + 1). HTK mel scale,
// unit-peak triangles, no area normalization.
Matrix mel_filterbank(const FeatureConfig& cfg);

// STFT (Hann window, reflect-centered so frame i sits at i*hop/sr), power
// spectrum, mel filterbank, then log(mel + log_floor). Frame count is
// floor(n/hop) + 1.
MelSpectrogram mel_spectrogram(const AudioClip& clip, const FeatureConfig& cfg = {});

// Affine map of the matrix-wide [min, max] onto [-1, 1]; a constant input
// maps to all zeros. Rejects input that is already normalized.
MelSpectrogram normalize_mel(const MelSpectrogram& mel);

} // namespace notegate
