#pragma once

#include <optional>
#include <span>
#include <vector>

#include "notegate/decode.hpp"
#include "notegate/labels.hpp"
#include "notegate/pitch.hpp"

namespace notegate {

struct MatchConfig {
    double onset_tolerance = 0.05; // 0.1 for the 100 ms variant
    double offset_min_tolerance = 0.05;
    double offset_ratio = 0.2; // of reference duration
    double pitch_tolerance_cents = 50.0;
};

// Which attributes a matched pair must agree on.
struct Criteria {
    bool onset = false;
    bool offset = false;
    bool pitch = false;
};

using MatchList = std::vector<std::pair<std::size_t, std::size_t>>; // (ref, est)

// Maximum-cardinality one-to-one matching between reference and estimated
// notes; a pair is admissible iff every selected criterion holds. Inputs
// must be sorted by onset.
MatchList match_notes(std::span<const NoteEvent> ref, std::span<const NoteEvent> est,
                      const Criteria& criteria, const MatchConfig& cfg);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    MatchList matches;
};

Prf score_matching(const MatchList& matches, std::size_t n_ref, std::size_t n_est);

// COn, COff, COnOff, COnP, COnPOff in one pass. Empty-vs-empty scores as
// perfect.
struct ScoreReport {
    Prf con;
    Prf coff;
    Prf conoff;
    Prf conp;
    Prf conpoff;
    std::size_t n_ref = 0;
    std::size_t n_est = 0;
};

ScoreReport score(std::span<const NoteEvent> ref, std::span<const NoteEvent> est,
                  const MatchConfig& cfg);

enum class OnsetType { plain, transition, reonset };

const char* to_string(OnsetType t);

// A note within 20 ms of the previous offset is a transition when the pitch
// moves by more than half a semitone, otherwise a re-onset; everything else
// (including the first note) is plain.
std::vector<OnsetType> classify_onsets(std::span<const NoteEvent> ref,
                                       double max_gap_seconds = 0.020,
                                       double pitch_change_semitones = 0.5);

struct OnsetTypeRecall {
    struct Entry {
        std::size_t total = 0;
        std::size_t matched = 0;
        std::optional<double> recall; // absent when the type never occurs
    };
    Entry plain;
    Entry transition;
    Entry reonset;
};

OnsetTypeRecall onset_type_recall(std::span<const NoteEvent> ref, std::span<const NoteEvent> est,
                                  const MatchConfig& cfg);

// One validation pair for the decode-threshold sweep.
struct SweepItem {
    FramePosteriors posteriors;
    std::vector<NoteEvent> ref;
};

struct SweepResult {
    std::vector<double> thresholds;
    std::vector<Prf> scores; // micro-averaged COn per threshold
    std::size_t best_index = 0;
    double best_threshold = 0.0;
};

// Decodes every item at each threshold (applied to both onset and offset)
// and ranks by micro-averaged COn F1; the earliest threshold wins ties.
SweepResult sweep_threshold(std::span<const SweepItem> items, const MatchConfig& cfg,
                            std::span<const double> thresholds);

// The standard 0.1..0.9 grid.
std::vector<double> default_sweep_thresholds();

} // namespace notegate
