#pragma once

#include <span>
#include <string>
#include <vector>

#include "notegate/audio.hpp"
#include "notegate/labels.hpp"
#include "notegate/network.hpp"

namespace notegate {

// Synthetic test assets: sine-tone note clips plus a pair of hand-built
// miniature models whose end-to-end transcription of those clips is exact.
// Everything here is deterministic.

struct FixtureNote {
    double onset = 0.0;
    double offset = 0.0;
    double freq_hz = 440.0;
};

// The stock three-note clip (220 / 330 / 440 Hz with silence gaps).
std::vector<FixtureNote> default_fixture_notes();

AudioClip render_note_clip(std::span<const FixtureNote> notes, int sample_rate = 16000,
                           double tail_seconds = 0.3, double amplitude = 0.8);

std::vector<NoteEvent> fixture_ground_truth(std::span<const FixtureNote> notes);

// Four-symbol inventory for the miniature phoneme model.
PhonemeInventory tiny_inventory();

// Zero-weight single-branch model: emits a uniform posteriorgram over K+1
// classes, which is all the note model below needs from its PPG input.
void make_tiny_phoneme_model(std::size_t num_phonemes, ModelGraph& graph, WeightStore& weights);

// Hand-built energy-transition detector. The mel branch computes, per frame,
// the frequency-max of the log-mel plus its rises and falls two frames
// apart (the dilated conv); the head turns those into activation, onset and
// offset probabilities. The PPG branch is present but zero-weighted.
void make_tiny_note_model(ModelGraph& graph, WeightStore& weights);

struct FixturePaths {
    std::string wav;
    std::string notes;
    std::string inventory;
    std::string phoneme_graph;
    std::string phoneme_weights;
    std::string note_graph;
    std::string note_weights;
};

// Writes the full fixture set into a directory and returns the paths.
FixturePaths write_fixture_set(const std::string& dir);

} // namespace notegate
