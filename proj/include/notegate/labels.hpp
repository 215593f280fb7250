#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "notegate/matrix.hpp"

namespace notegate {

// One note: onset/offset in seconds, pitch as MIDI float when known.
struct NoteEvent {
    double onset = 0.0;
    double offset = 0.0;
    std::optional<double> pitch_midi;

    double duration() const { return offset - onset; }
    bool operator==(const NoteEvent&) const = default;
};

void validate_note(const NoteEvent& note);

// TSV with header, columns onset_sec, offset_sec, pitch_midi (pitch optional).
std::vector<NoteEvent> read_notes_tsv(const std::string& path);
void write_notes_tsv(const std::string& path, std::span<const NoteEvent> notes);

// Framewise training targets: one-hot onset/offset plus binary activation.
struct FrameLabels {
    std::vector<double> onset;
    std::vector<double> offset;
    std::vector<double> activation;
    FrameGrid grid;

    std::size_t num_frames() const { return onset.size(); }
    Matrix to_matrix() const; // T x 3, columns onset/offset/activation
    static FrameLabels from_matrix(const Matrix& m, const FrameGrid& grid);
};

// Events mapped to the nearest frame index; activation covers frames whose
// time satisfies onset <= t < offset. Rejects overlapping notes, naming the
// offending pair; notes sharing a boundary are fine.
FrameLabels notes_to_frames(std::span<const NoteEvent> notes, std::size_t num_frames,
                            const FrameGrid& grid);

// Scaled triangular window w[n] = 1 - |n / ((N+1)/2)|, exactly N nonzero taps
// centered on 1; N must be odd.
std::vector<double> triangular_window(int scale);

// Linear convolution of the onset and offset sequences with
// triangular_window(scale), truncated to the original length and clipped at 1.
// Activation passes through untouched.
FrameLabels smooth_labels(const FrameLabels& labels, int scale);

} // namespace notegate
