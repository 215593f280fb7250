#pragma once

#include <string>
#include <vector>

#include "notegate/common.hpp"

namespace notegate {

// Mono audio, samples in [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 16000;

    double duration() const
    {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

// Reads a RIFF WAV (PCM 8/16/24/32-bit integer or 32-bit float). Multi-channel
// input is mixed to mono by arithmetic mean; integer samples are scaled by
// 2^(bits-1) into [-1, 1].
AudioClip load_audio(const std::string& path);

// 16-bit PCM writer, used by the fixture generator. Values are clamped to
// [-1, 1] before quantization.
void save_wav(const std::string& path, const AudioClip& clip);

// Band-limited (Hann-windowed sinc) resampling. Equal rates return the input
// unchanged; otherwise the output has round(n * target / source) samples.
AudioClip resample(const AudioClip& clip, int target_rate);

} // namespace notegate
