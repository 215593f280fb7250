#pragma once

#include <optional>
#include <vector>

#include "notegate/labels.hpp"
#include "notegate/matrix.hpp"
#include "notegate/pitch.hpp"

namespace notegate {

// Framewise onset/offset/activation probabilities from the note network.
struct FramePosteriors {
    std::vector<double> onset;
    std::vector<double> offset;
    std::vector<double> activation;
    FrameGrid grid;

    std::size_t num_frames() const { return onset.size(); }
    Matrix to_matrix() const;
    static FramePosteriors from_matrix(const Matrix& m, const FrameGrid& grid);
    void validate() const;
};

struct DecodeConfig {
    double onset_threshold = 0.2;
    double offset_threshold = 0.2;
    double activation_cutoff = 0.5;
    bool unvoiced_pitch_fallback = true;
};

// One onset per contiguous run of frames at or above the threshold: the
// frame with the maximal probability in the run, earliest on ties.
std::vector<std::size_t> pick_onsets(const FramePosteriors& p, const DecodeConfig& cfg);

// Offset candidates strictly between the onset and the next onset (or the
// last frame): the highest offset-posterior peak at or above the threshold,
// and the first frame where activation drops below the cutoff. The latest
// candidate wins; with no candidate the note runs to next_onset.
std::size_t resolve_offset(const FramePosteriors& p, std::size_t onset, std::size_t next_onset,
                           const DecodeConfig& cfg);

// Unpitched note events; zero-length notes are dropped.
std::vector<NoteEvent> decode_notes(const FramePosteriors& p, const DecodeConfig& cfg);

// First value whose cumulative normalized weight reaches one half, in value
// order. Weights must be non-negative with a positive sum.
double weighted_median(std::vector<std::pair<double, double>> values_weights);

// Hann-weighted median over the voiced F0 of [onset_frame, offset_frame),
// in MIDI. Boundary frames get zero weight (for segments of 3+ frames), so
// expressive note edges do not drag the pitch. Falls back to the tracker's
// unvoiced candidates when the segment has no voiced frames.
std::optional<double> weighted_median_pitch(const F0Contour& f0, std::size_t onset_frame,
                                            std::size_t offset_frame,
                                            bool unvoiced_fallback = true);

struct Transcription {
    std::vector<NoteEvent> pitched;   // notes with an assigned pitch
    std::vector<NoteEvent> unpitched; // every decoded note, pitch left empty
};

Transcription transcribe(const FramePosteriors& p, const F0Contour& f0, const DecodeConfig& cfg);

double midi_from_hz(double hz);
double hz_from_midi(double midi);

} // namespace notegate
