#include <doctest.h>

#include <cmath>
#include <random>

#include "notegate/decode.hpp"
#include "notegate/eval.hpp"
#include "test_support.hpp"

using namespace notegate;

namespace {

FramePosteriors posteriors_from_labels(const FrameLabels& labels)
{
    FramePosteriors p;
    p.onset = labels.onset;
    p.offset = labels.offset;
    p.activation = labels.activation;
    p.grid = labels.grid;
    return p;
}

FramePosteriors zeros(std::size_t frames)
{
    FramePosteriors p;
    p.onset.assign(frames, 0.0);
    p.offset.assign(frames, 0.0);
    p.activation.assign(frames, 0.0);
    return p;
}

F0Contour constant_contour(std::size_t frames, double hz)
{
    F0Contour f0;
    f0.f0_hz.assign(frames, hz);
    f0.candidate_hz.assign(frames, 0.0);
    f0.voiced.assign(frames, 1);
    f0.voicing_prob.assign(frames, 1.0);
    return f0;
}

} // namespace

TEST_CASE("pick_onsets: below-threshold input yields nothing")
{
    FramePosteriors p = zeros(10);
    for (auto& v : p.onset) v = 0.19;
    CHECK(pick_onsets(p, {}).empty());
}

TEST_CASE("pick_onsets: one run yields its maximum frame")
{
    FramePosteriors p = zeros(15);
    p.onset[10] = 0.25;
    p.onset[11] = 0.9;
    p.onset[12] = 0.4;
    const auto onsets = pick_onsets(p, {});
    REQUIRE(onsets.size() == 1);
    CHECK(onsets[0] == 11);
}

TEST_CASE("pick_onsets: runs split by a sub-threshold frame, ties take the earliest")
{
    FramePosteriors p = zeros(12);
    p.onset[2] = 0.5;
    p.onset[3] = 0.5; // tie inside run -> earliest
    p.onset[4] = 0.1; // separator
    p.onset[5] = 0.3;
    const auto onsets = pick_onsets(p, {});
    REQUIRE(onsets.size() == 2);
    CHECK(onsets[0] == 2);
    CHECK(onsets[1] == 5);
}

TEST_CASE("resolve_offset follows the latest-candidate rule")
{
    FramePosteriors p = zeros(60);
    for (std::size_t t = 0; t < 60; ++t) p.activation[t] = t < 45 ? 1.0 : 0.0;
    p.offset[40] = 0.8;
    CHECK(resolve_offset(p, 10, 50, {}) == 45); // activation drop is later

    FramePosteriors q = zeros(60);
    for (auto& v : q.activation) v = 1.0;
    CHECK(resolve_offset(q, 10, 50, {}) == 50); // no candidate -> next onset

    FramePosteriors r = zeros(60);
    for (auto& v : r.activation) v = 1.0;
    r.offset[30] = 0.6;
    CHECK(resolve_offset(r, 10, 50, {}) == 30); // single candidate

    FramePosteriors s = zeros(60);
    for (auto& v : s.activation) v = 1.0;
    s.offset[30] = 0.15; // below the 0.2 threshold: not a candidate
    CHECK(resolve_offset(s, 10, 50, {}) == 50);
}

TEST_CASE("decode_notes: zero posteriors produce an empty transcription")
{
    CHECK(decode_notes(zeros(40), {}).empty());
}

TEST_CASE("decode_notes drops an onset at the final frame")
{
    FramePosteriors p = zeros(30);
    p.onset[29] = 0.9;
    CHECK(decode_notes(p, {}).empty());
}

TEST_CASE("binary labels round-trip through decode exactly")
{
    const std::vector<NoteEvent> notes{
        {0.10, 0.30, 60.0}, {0.40, 0.52, 62.0}, {0.60, 0.90, 64.0}};
    const FrameLabels labels = notes_to_frames(notes, 60, FrameGrid{0.020, 0.0});
    const auto decoded = decode_notes(posteriors_from_labels(labels), {});
    REQUIRE(decoded.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(decoded[i].onset == doctest::Approx(notes[i].onset).epsilon(1e-9));
        CHECK(decoded[i].offset == doctest::Approx(notes[i].offset).epsilon(1e-9));
    }
}

TEST_CASE("smoothed posteriors from three notes decode within one frame")
{
    const std::vector<NoteEvent> notes{
        {0.20, 0.40, 60.0}, {0.60, 0.84, 62.0}, {1.00, 1.30, 64.0}};
    const FrameLabels labels =
        smooth_labels(notes_to_frames(notes, 80, FrameGrid{0.020, 0.0}), 5);
    const auto decoded = decode_notes(posteriors_from_labels(labels), {});
    REQUIRE(decoded.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(decoded[i].onset - notes[i].onset) <= 0.020 + 1e-9);
        CHECK(std::abs(decoded[i].offset - notes[i].offset) <= 0.020 + 1e-9);
    }
}

TEST_CASE("decoded notes are ordered and non-overlapping")
{
    std::mt19937 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        FramePosteriors p = zeros(100);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (std::size_t t = 0; t < 100; ++t) {
            p.onset[t] = uni(rng);
            p.offset[t] = uni(rng);
            p.activation[t] = uni(rng);
        }
        const auto notes = decode_notes(p, {});
        for (std::size_t i = 1; i < notes.size(); ++i)
            CHECK(notes[i - 1].offset <= notes[i].onset + 1e-12);
        for (const auto& n : notes) CHECK(n.offset > n.onset);
    }
}

TEST_CASE("raising the onset threshold never adds onsets")
{
    // Holds for the unimodal bumps that smoothed labels and trained networks
    // produce (an arbitrary curve can split one run into two when the
    // threshold rises past an interior dip).
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> uni(0.05, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        FramePosteriors p = zeros(120);
        std::size_t t = 2;
        while (t + 6 < 120) {
            const double peak = uni(rng);
            p.onset[t] = peak / 3.0;
            p.onset[t + 1] = 2.0 * peak / 3.0;
            p.onset[t + 2] = peak;
            p.onset[t + 3] = 2.0 * peak / 3.0;
            p.onset[t + 4] = peak / 3.0;
            t += 6 + rng() % 8;
        }
        std::size_t prev = pick_onsets(p, DecodeConfig{.onset_threshold = 0.01}).size();
        for (double th : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
            const std::size_t count = pick_onsets(p, DecodeConfig{.onset_threshold = th}).size();
            CHECK(count <= prev);
            prev = count;
        }
    }
}

TEST_CASE("weighted median of [60, 60, 72] with equal weights is 60")
{
    CHECK(weighted_median({{60.0, 1.0}, {60.0, 1.0}, {72.0, 1.0}}) == 60.0);
    CHECK(weighted_median({{72.0, 1.0}, {60.0, 1.0}, {60.0, 1.0}}) == 60.0);
    CHECK(weighted_median({{50.0, 0.9}, {70.0, 0.1}}) == 50.0);
    CHECK_THROWS_AS(weighted_median({}), DataError);
    CHECK_THROWS_AS(weighted_median({{60.0, 0.0}}), DataError);
}

TEST_CASE("weighted median pitch: constants, ties and boundary invariance")
{
    // Constant 440 Hz -> exactly MIDI 69.
    const F0Contour c440 = constant_contour(20, 440.0);
    auto pitch = weighted_median_pitch(c440, 4, 16);
    REQUIRE(pitch.has_value());
    CHECK(*pitch == doctest::Approx(69.0).epsilon(1e-9));

    // Hann weights over [60, 60, 72]: the cumulative weight reaches one half
    // inside the 60s.
    F0Contour padded = constant_contour(5, 0.0);
    padded.voiced = {0, 1, 1, 1, 0};
    padded.f0_hz = {0.0, hz_from_midi(60.0), hz_from_midi(60.0), hz_from_midi(72.0), 0.0};
    pitch = weighted_median_pitch(padded, 0, 5);
    REQUIRE(pitch.has_value());
    CHECK(*pitch == doctest::Approx(60.0).epsilon(1e-9));

    // Symmetric vibrato around 67 stays within a tenth of a semitone.
    F0Contour vib = constant_contour(41, 0.0);
    for (std::size_t t = 0; t < 41; ++t)
        vib.f0_hz[t] = hz_from_midi(67.0 + std::sin(2.0 * M_PI * t / 8.0));
    pitch = weighted_median_pitch(vib, 0, 41);
    REQUIRE(pitch.has_value());
    CHECK(std::abs(*pitch - 67.0) <= 0.1);

    // Boundary frames carry zero weight: changing them cannot move the median.
    F0Contour edge = constant_contour(10, 440.0);
    auto base = weighted_median_pitch(edge, 2, 8);
    edge.f0_hz[2] = 880.0;
    edge.f0_hz[7] = 110.0;
    auto moved = weighted_median_pitch(edge, 2, 8);
    REQUIRE(base.has_value());
    REQUIRE(moved.has_value());
    CHECK(*base == *moved);
}

TEST_CASE("unvoiced fallback picks up the candidate track")
{
    F0Contour f0 = constant_contour(20, 0.0);
    f0.voiced.assign(20, 0);
    f0.f0_hz.assign(20, 0.0);
    f0.candidate_hz.assign(20, 200.0);
    const auto pitch = weighted_median_pitch(f0, 5, 15, true);
    REQUIRE(pitch.has_value());
    CHECK(*pitch == doctest::Approx(midi_from_hz(200.0)).epsilon(1e-9));

    CHECK_FALSE(weighted_median_pitch(f0, 5, 15, false).has_value());
}

TEST_CASE("transcribe assigns pitches and keeps unpitched notes separate")
{
    const std::vector<NoteEvent> notes{{0.10, 0.30, 0.0}, {0.50, 0.70, 0.0}};
    FrameLabels labels = notes_to_frames(notes, 50, FrameGrid{0.020, 0.0});
    FramePosteriors p = posteriors_from_labels(labels);

    F0Contour f0 = constant_contour(50, 440.0);
    // Second note entirely unvoiced with no candidates -> dropped from pitched.
    for (std::size_t t = 24; t < 50; ++t) {
        f0.voiced[t] = 0;
        f0.f0_hz[t] = 0.0;
    }
    DecodeConfig cfg;
    cfg.unvoiced_pitch_fallback = false;
    const Transcription result = transcribe(p, f0, cfg);
    CHECK(result.unpitched.size() == 2);
    REQUIRE(result.pitched.size() == 1);
    CHECK(*result.pitched[0].pitch_midi == doctest::Approx(69.0).epsilon(1e-9));

    F0Contour other = f0;
    other.grid.hop_seconds = 0.01;
    CHECK_THROWS_AS(transcribe(p, other, cfg), DataError);
}
