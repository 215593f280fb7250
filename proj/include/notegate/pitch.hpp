#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "notegate/audio.hpp"
#include "notegate/matrix.hpp"

namespace notegate {

// Probabilistic YIN settings. The threshold prior, bins per semitone, and
// voicing/self-transition values follow the published pYIN defaults; the
// per-frame pitch step is the pYIN transition width rescaled to this hop
// (pYIN allows about one semitone per 5.8 ms step).
struct PitchConfig {
    int sample_rate = 16000;
    int hop = 320;
    double fmin_hz = 65.4;    // C2
    double fmax_hz = 1046.5;  // C6
    double window_seconds = 0.025;
    int bins_per_semitone = 5;
    int num_thresholds = 100;
    double threshold_beta_alpha = 2.0;
    double threshold_beta_beta = 18.0; // Beta(2, 18): mean 0.1
    double min_candidate_weight = 0.01;
    double self_transition = 0.99;
    double yin_trust = 0.5;
    double max_step_semitones = 3.0;
};

// Framewise F0 on the same 20 ms grid as the mel features. Unvoiced frames
// keep the tracker's best pitch guess in candidate_hz so downstream
// consumers can fall back to it.
struct F0Contour {
    std::vector<double> f0_hz;        // > 0 where voiced, else 0
    std::vector<double> candidate_hz; // best estimate on unvoiced frames, 0 if none
    std::vector<std::uint8_t> voiced;
    std::vector<double> voicing_prob;
    FrameGrid grid;

    std::size_t num_frames() const { return f0_hz.size(); }
};

F0Contour track_f0(const AudioClip& clip, const PitchConfig& cfg = {});

// TSV round trip: time_sec, f0_hz, voiced, prob. The f0 column carries the
// voiced estimate or, on unvoiced frames, the candidate pitch.
void save_f0(const std::string& path, const F0Contour& contour);
F0Contour load_f0(const std::string& path);

} // namespace notegate
