#include "notegate/labels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "notegate/ioutil.hpp"

namespace notegate {

namespace {

constexpr double kTimeEps = 1e-9;

std::vector<std::string> split_tabs(const std::string& line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

double parse_double(const std::string& tok, const std::string& origin, std::size_t line_no)
{
    try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError(cat(origin, ":", line_no, ": cannot parse number '", tok, "'"));
    }
}

} // namespace

void validate_note(const NoteEvent& note)
{
    if (!(note.offset > note.onset))
        throw DataError(cat("note offset ", note.offset, " not after onset ", note.onset));
    if (note.pitch_midi && !(*note.pitch_midi >= 0.0 && *note.pitch_midi <= 127.0))
        throw DataError(cat("note pitch ", *note.pitch_midi, " outside [0, 127]"));
}

std::vector<NoteEvent> read_notes_tsv(const std::string& path)
{
    std::istringstream in(read_file(path));
    std::vector<NoteEvent> notes;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line.find("onset") != std::string::npos) continue; // header row
        }
        auto cols = split_tabs(line);
        if (cols.size() < 2)
            throw DataError(cat(path, ":", line_no, ": expected at least 2 columns"));
        NoteEvent n;
        n.onset = parse_double(cols[0], path, line_no);
        n.offset = parse_double(cols[1], path, line_no);
        if (cols.size() >= 3 && !cols[2].empty())
            n.pitch_midi = parse_double(cols[2], path, line_no);
        try {
            validate_note(n);
        } catch (const DataError& e) {
            throw DataError(cat(path, ":", line_no, ": ", e.what()));
        }
        notes.push_back(n);
    }
    return notes;
}

void write_notes_tsv(const std::string& path, std::span<const NoteEvent> notes)
{
    std::string out = "onset_sec\toffset_sec\tpitch_midi\n";
    char buf[96];
    for (const auto& n : notes) {
        if (n.pitch_midi)
            std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f\n", n.onset, n.offset, *n.pitch_midi);
        else
            std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t\n", n.onset, n.offset);
        out += buf;
    }
    write_file_atomic(path, out);
}

Matrix FrameLabels::to_matrix() const
{
    Matrix m(num_frames(), 3);
    for (std::size_t t = 0; t < num_frames(); ++t) {
        m(t, 0) = onset[t];
        m(t, 1) = offset[t];
        m(t, 2) = activation[t];
    }
    return m;
}

FrameLabels FrameLabels::from_matrix(const Matrix& m, const FrameGrid& grid)
{
    if (m.cols() != 3)
        throw DataError(cat("frame labels need 3 columns, got ", m.cols()));
    FrameLabels out;
    out.grid = grid;
    out.onset.resize(m.rows());
    out.offset.resize(m.rows());
    out.activation.resize(m.rows());
    for (std::size_t t = 0; t < m.rows(); ++t) {
        out.onset[t] = m(t, 0);
        out.offset[t] = m(t, 1);
        out.activation[t] = m(t, 2);
    }
    return out;
}

FrameLabels notes_to_frames(std::span<const NoteEvent> notes, std::size_t num_frames,
                            const FrameGrid& grid)
{
    if (num_frames == 0) throw DataError("notes_to_frames needs at least one frame");
    std::vector<NoteEvent> sorted(notes.begin(), notes.end());
    for (const auto& n : sorted) validate_note(n);
    std::sort(sorted.begin(), sorted.end(),
              [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].onset < sorted[i - 1].offset - kTimeEps)
            throw DataError(cat("overlapping notes: (", sorted[i - 1].onset, ", ",
                                sorted[i - 1].offset, ") and (", sorted[i].onset, ", ",
                                sorted[i].offset, ")"));
    }

    const double span = grid.frame_zero_time + num_frames * grid.hop_seconds;
    FrameLabels out;
    out.grid = grid;
    out.onset.assign(num_frames, 0.0);
    out.offset.assign(num_frames, 0.0);
    out.activation.assign(num_frames, 0.0);

    auto to_frame = [&](double t) {
        auto idx = std::llround((t - grid.frame_zero_time) / grid.hop_seconds);
        return std::clamp<long long>(idx, 0, static_cast<long long>(num_frames) - 1);
    };

    for (const auto& n : sorted) {
        if (n.onset < grid.frame_zero_time - kTimeEps || n.offset > span + kTimeEps)
            throw DataError(cat("note (", n.onset, ", ", n.offset,
                                ") falls outside the label span [", grid.frame_zero_time, ", ",
                                span, "]"));
        out.onset[static_cast<std::size_t>(to_frame(n.onset))] = 1.0;
        out.offset[static_cast<std::size_t>(to_frame(n.offset))] = 1.0;
        for (std::size_t i = 0; i < num_frames; ++i) {
            const double t = grid.time(i);
            if (t >= n.onset - kTimeEps && t < n.offset - kTimeEps) out.activation[i] = 1.0;
        }
    }
    return out;
}

std::vector<double> triangular_window(int scale)
{
    if (scale < 1 || scale % 2 == 0)
        throw DataError(cat("triangular window scale must be odd and positive, got ", scale));
    const int half = (scale - 1) / 2;
    const double denom = (scale + 1) / 2.0;
    std::vector<double> w(static_cast<std::size_t>(scale));
    for (int n = -half; n <= half; ++n)
        w[static_cast<std::size_t>(n + half)] = 1.0 - std::abs(n / denom);
    return w;
}

namespace {

std::vector<double> convolve_clipped(const std::vector<double>& x, const std::vector<double>& w)
{
    const int half = static_cast<int>(w.size()) / 2;
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) {
            const long long j = static_cast<long long>(i) + k;
            if (j < 0 || j >= static_cast<long long>(x.size())) continue;
            acc += x[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(half - k)];
        }
        y[i] = std::min(acc, 1.0);
    }
    return y;
}

} // namespace

FrameLabels smooth_labels(const FrameLabels& labels, int scale)
{
    const auto w = triangular_window(scale);
    FrameLabels out = labels;
    out.onset = convolve_clipped(labels.onset, w);
    out.offset = convolve_clipped(labels.offset, w);
    return out;
}

} // namespace notegate
