#include "notegate/decode.hpp"

#include <algorithm>
#include <cmath>

#include "notegate/dsp.hpp"

namespace notegate {

double midi_from_hz(double hz) { return 69.0 + 12.0 * std::log2(hz / 440.0); }
double hz_from_midi(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }

Matrix FramePosteriors::to_matrix() const
{
    Matrix m(num_frames(), 3);
    for (std::size_t t = 0; t < num_frames(); ++t) {
        m(t, 0) = onset[t];
        m(t, 1) = offset[t];
        m(t, 2) = activation[t];
    }
    return m;
}

FramePosteriors FramePosteriors::from_matrix(const Matrix& m, const FrameGrid& grid)
{
    if (m.cols() != 3)
        throw DataError(cat("frame posteriors need 3 columns, got ", m.cols()));
    FramePosteriors p;
    p.grid = grid;
    p.onset.resize(m.rows());
    p.offset.resize(m.rows());
    p.activation.resize(m.rows());
    for (std::size_t t = 0; t < m.rows(); ++t) {
        p.onset[t] = m(t, 0);
        p.offset[t] = m(t, 1);
        p.activation[t] = m(t, 2);
    }
    p.validate();
    return p;
}

void FramePosteriors::validate() const
{
    if (offset.size() != onset.size() || activation.size() != onset.size())
        throw DataError("posterior sequences disagree on frame count");
    auto check = [](const std::vector<double>& v, const char* what) {
        for (double x : v)
            if (!(x >= 0.0 && x <= 1.0))
                throw DataError(cat(what, " posterior ", x, " outside [0,1]"));
    };
    check(onset, "onset");
    check(offset, "offset");
    check(activation, "activation");
}

std::vector<std::size_t> pick_onsets(const FramePosteriors& p, const DecodeConfig& cfg)
{
    std::vector<std::size_t> onsets;
    const std::size_t T = p.num_frames();
    std::size_t t = 0;
    while (t < T) {
        if (p.onset[t] < cfg.onset_threshold) {
            ++t;
            continue;
        }
        std::size_t best = t;
        std::size_t end = t;
        while (end < T && p.onset[end] >= cfg.onset_threshold) {
            if (p.onset[end] > p.onset[best]) best = end;
            ++end;
        }
        onsets.push_back(best);
        t = end;
    }
    return onsets;
}

std::size_t resolve_offset(const FramePosteriors& p, std::size_t onset, std::size_t next_onset,
                           const DecodeConfig& cfg)
{
    if (onset >= next_onset) return next_onset;

    bool have_peak = false;
    std::size_t peak = 0;
    bool have_drop = false;
    std::size_t drop = 0;
    for (std::size_t t = onset + 1; t < next_onset; ++t) {
        if (p.offset[t] >= cfg.offset_threshold && (!have_peak || p.offset[t] > p.offset[peak])) {
            have_peak = true;
            peak = t;
        }
        if (!have_drop && p.activation[t] < cfg.activation_cutoff) {
            have_drop = true;
            drop = t;
        }
    }

    if (have_peak && have_drop) return std::max(peak, drop);
    if (have_peak) return peak;
    if (have_drop) return drop;
    return next_onset;
}

namespace {

struct FrameNote {
    std::size_t onset;
    std::size_t offset;
};

std::vector<FrameNote> decode_frame_notes(const FramePosteriors& p, const DecodeConfig& cfg)
{
    p.validate();
    if (!(cfg.onset_threshold > 0.0 && cfg.onset_threshold < 1.0) ||
        !(cfg.offset_threshold > 0.0 && cfg.offset_threshold < 1.0))
        throw DataError("decode thresholds must lie in (0, 1)");

    const auto onsets = pick_onsets(p, cfg);
    const std::size_t T = p.num_frames();
    std::vector<FrameNote> notes;
    for (std::size_t k = 0; k < onsets.size(); ++k) {
        const std::size_t next = k + 1 < onsets.size() ? onsets[k + 1] : T - 1;
        const std::size_t off = resolve_offset(p, onsets[k], next, cfg);
        if (off > onsets[k]) notes.push_back({onsets[k], off});
    }
    return notes;
}

} // namespace

std::vector<NoteEvent> decode_notes(const FramePosteriors& p, const DecodeConfig& cfg)
{
    std::vector<NoteEvent> out;
    for (const auto& n : decode_frame_notes(p, cfg))
        out.push_back({p.grid.time(n.onset), p.grid.time(n.offset), std::nullopt});
    return out;
}

double weighted_median(std::vector<std::pair<double, double>> values_weights)
{
    if (values_weights.empty()) throw DataError("weighted_median needs at least one value");
    double total = 0.0;
    for (const auto& [value, weight] : values_weights) {
        if (weight < 0.0) throw DataError("weighted_median weights must be non-negative");
        total += weight;
    }
    if (total <= 0.0) throw DataError("weighted_median needs a positive weight sum");

    std::sort(values_weights.begin(), values_weights.end());
    double cum = 0.0;
    for (const auto& [value, weight] : values_weights) {
        cum += weight / total;
        if (cum >= 0.5 - 1e-12) return value;
    }
    return values_weights.back().first;
}

std::optional<double> weighted_median_pitch(const F0Contour& f0, std::size_t onset_frame,
                                            std::size_t offset_frame, bool unvoiced_fallback)
{
    if (offset_frame <= onset_frame)
        throw DataError("weighted_median_pitch needs offset_frame > onset_frame");
    const std::size_t len = offset_frame - onset_frame;
    const std::vector<double> window = hann_symmetric(len);
    double wsum = 0.0;
    for (double w : window) wsum += w;

    auto gather = [&](const std::vector<double>& source, bool require_voiced) {
        std::vector<std::pair<double, double>> vals; // (midi, weight)
        double total = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const std::size_t t = onset_frame + i;
            if (t >= f0.num_frames()) break;
            if (require_voiced && !f0.voiced[t]) continue;
            const double hz = source[t];
            if (hz <= 0.0) continue;
            const double w = wsum > 0.0 ? window[i] / wsum : 0.0;
            if (w <= 0.0) continue;
            vals.emplace_back(midi_from_hz(hz), w);
            total += w;
        }
        if (vals.empty()) {
            // Degenerate windows (length <= 2) zero out every frame; fall
            // back to uniform weights over the usable frames.
            for (std::size_t i = 0; i < len; ++i) {
                const std::size_t t = onset_frame + i;
                if (t >= f0.num_frames()) break;
                if (require_voiced && !f0.voiced[t]) continue;
                const double hz = source[t];
                if (hz <= 0.0) continue;
                vals.emplace_back(midi_from_hz(hz), 1.0);
                total += 1.0;
            }
        }
        return std::make_pair(vals, total);
    };

    auto [vals, total] = gather(f0.f0_hz, true);
    if (vals.empty() && unvoiced_fallback) std::tie(vals, total) = gather(f0.candidate_hz, false);
    if (vals.empty() || total <= 0.0) return std::nullopt;
    return weighted_median(std::move(vals));
}

Transcription transcribe(const FramePosteriors& p, const F0Contour& f0, const DecodeConfig& cfg)
{
    if (!p.grid.same_grid(f0.grid))
        throw DataError("posteriors and F0 contour are on different frame grids");

    Transcription out;
    for (const auto& n : decode_frame_notes(p, cfg)) {
        NoteEvent note{p.grid.time(n.onset), p.grid.time(n.offset), std::nullopt};
        out.unpitched.push_back(note);
        const auto pitch =
            weighted_median_pitch(f0, n.onset, n.offset, cfg.unvoiced_pitch_fallback);
        if (pitch) {
            note.pitch_midi = pitch;
            out.pitched.push_back(note);
        }
    }
    return out;
}

} // namespace notegate
