#include "notegate/pitch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "notegate/ioutil.hpp"

namespace notegate {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Candidate {
    double freq_hz;
    double prob;
};

// Pitch-state HMM shared across frames: bins_per_semitone bins from fmin to
// fmax, each existing in a voiced and an unvoiced flavor.
struct PitchModel {
    int n_bins = 0;
    int half_step = 0; // max bins moved per frame
    std::vector<double> bin_freq;
    std::vector<double> thresholds;
    std::vector<double> threshold_prior;

    explicit PitchModel(const PitchConfig& cfg)
    {
        const double semis = 12.0 * std::log2(cfg.fmax_hz / cfg.fmin_hz);
        n_bins = static_cast<int>(std::ceil(semis * cfg.bins_per_semitone)) + 1;
        bin_freq.resize(static_cast<std::size_t>(n_bins));
        for (int b = 0; b < n_bins; ++b)
            bin_freq[static_cast<std::size_t>(b)] =
                cfg.fmin_hz * std::pow(2.0, b / (12.0 * cfg.bins_per_semitone));
        half_step = std::max(1, static_cast<int>(
                                    std::lround(cfg.max_step_semitones * cfg.bins_per_semitone)));

        thresholds.resize(static_cast<std::size_t>(cfg.num_thresholds));
        threshold_prior.resize(thresholds.size());
        double total = 0.0;
        for (int i = 0; i < cfg.num_thresholds; ++i) {
            const double s = 0.01 * (i + 1);
            thresholds[static_cast<std::size_t>(i)] = s;
            const double p = std::pow(s, cfg.threshold_beta_alpha - 1.0) *
                             std::pow(1.0 - s, cfg.threshold_beta_beta - 1.0);
            threshold_prior[static_cast<std::size_t>(i)] = p;
            total += p;
        }
        for (double& p : threshold_prior) p /= total;
    }

    int nearest_bin(double freq) const
    {
        double best_d = std::numeric_limits<double>::max();
        int best = -1;
        for (int b = 0; b < n_bins; ++b) {
            const double d = std::abs(freq - bin_freq[static_cast<std::size_t>(b)]);
            if (d < best_d) {
                best_d = d;
                best = b;
            }
        }
        return best;
    }
};

// YIN candidates for one analysis block. Each trough of the cumulative-mean-
// normalized difference collects the prior mass of the thresholds it is the
// first trough to clear; leftover mass goes (discounted) to the global
// minimum.
std::vector<Candidate> frame_candidates(const std::vector<double>& block, int window,
                                        const PitchConfig& cfg, const PitchModel& model)
{
    const int max_lag = window;
    std::vector<double> diff(static_cast<std::size_t>(max_lag), 0.0);
    for (int tau = 1; tau < max_lag; ++tau) {
        double acc = 0.0;
        for (int j = 0; j < window; ++j) {
            const double d = block[static_cast<std::size_t>(j)] -
                             block[static_cast<std::size_t>(j + tau)];
            acc += d * d;
        }
        diff[static_cast<std::size_t>(tau)] = acc;
    }

    std::vector<double> cmnd(static_cast<std::size_t>(max_lag), 1.0);
    double running = 0.0;
    for (int tau = 1; tau < max_lag; ++tau) {
        running += diff[static_cast<std::size_t>(tau)];
        cmnd[static_cast<std::size_t>(tau)] =
            running > 0.0 ? diff[static_cast<std::size_t>(tau)] * tau / running : 1.0;
    }

    const int lag_min = std::max(2, static_cast<int>(std::floor(cfg.sample_rate / cfg.fmax_hz)));
    const int lag_max =
        std::min(max_lag - 2, static_cast<int>(std::ceil(cfg.sample_rate / cfg.fmin_hz)));

    std::vector<Candidate> cands;
    int thr = static_cast<int>(model.thresholds.size()) - 1;
    double leftover = 1.0;
    int global_min_lag = -1;
    double global_min_val = std::numeric_limits<double>::max();
    std::size_t global_min_idx = 0;

    for (int tau = lag_min; tau <= lag_max; ++tau) {
        const double v = cmnd[static_cast<std::size_t>(tau)];
        if (!(v < cmnd[static_cast<std::size_t>(tau - 1)] &&
              v <= cmnd[static_cast<std::size_t>(tau + 1)]))
            continue;

        // Parabolic refinement of the trough position.
        const double a = cmnd[static_cast<std::size_t>(tau - 1)];
        const double b = v;
        const double c = cmnd[static_cast<std::size_t>(tau + 1)];
        const double denom = a - 2.0 * b + c;
        double lag = tau;
        if (std::abs(denom) > 1e-12) lag += 0.5 * (a - c) / denom;

        const double freq = cfg.sample_rate / lag;
        double mass = 0.0;
        while (thr >= 0 && model.thresholds[static_cast<std::size_t>(thr)] > v) {
            mass += model.threshold_prior[static_cast<std::size_t>(thr)];
            --thr;
        }
        leftover -= mass;
        if (freq >= cfg.fmin_hz && freq <= cfg.fmax_hz) {
            cands.push_back({freq, mass});
            if (v < global_min_val) {
                global_min_val = v;
                global_min_lag = tau;
                global_min_idx = cands.size() - 1;
            }
        }
    }

    if (global_min_lag >= 0 && leftover > 0.0)
        cands[global_min_idx].prob += leftover * cfg.min_candidate_weight;
    return cands;
}

} // namespace

F0Contour track_f0(const AudioClip& clip, const PitchConfig& cfg)
{
    if (clip.sample_rate != cfg.sample_rate)
        throw DataError(cat("clip rate ", clip.sample_rate, " does not match pitch config rate ",
                            cfg.sample_rate, "; resample first"));
    if (!(cfg.fmin_hz > 0.0 && cfg.fmin_hz < cfg.fmax_hz))
        throw DataError("pitch config needs 0 < fmin < fmax");
    const int window = static_cast<int>(std::lround(cfg.window_seconds * cfg.sample_rate));
    const auto n = static_cast<long long>(clip.samples.size());
    if (n < window)
        throw DataError(cat("clip too short for one analysis window (", n, " < ", window,
                            " samples)"));

    const PitchModel model(cfg);
    const std::size_t frames = clip.samples.size() / static_cast<std::size_t>(cfg.hop) + 1;
    const int n_bins = model.n_bins;
    const int n_states = 2 * n_bins; // voiced bins then unvoiced bins

    std::vector<std::vector<Candidate>> cands(frames);
    std::vector<double> block(static_cast<std::size_t>(2 * window), 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
        const long long center = static_cast<long long>(t) * cfg.hop;
        for (int k = 0; k < 2 * window; ++k) {
            const long long idx = center - window + k;
            block[static_cast<std::size_t>(k)] =
                (idx >= 0 && idx < n) ? clip.samples[static_cast<std::size_t>(idx)] : 0.0;
        }
        cands[t] = frame_candidates(block, window, cfg, model);
    }

    // Viterbi over voiced/unvoiced pitch states with a triangular local
    // transition window of +-half_step bins.
    const int hs = model.half_step;
    std::vector<double> step_weight(static_cast<std::size_t>(2 * hs + 1));
    for (int d = -hs; d <= hs; ++d)
        step_weight[static_cast<std::size_t>(d + hs)] = hs + 1 - std::abs(d);

    auto log_floor = [](double p) { return std::log(std::max(p, 1e-30)); };

    std::vector<double> prev(static_cast<std::size_t>(n_states),
                             std::log(1.0 / n_states));
    std::vector<double> cur(static_cast<std::size_t>(n_states), kNegInf);
    std::vector<std::vector<int>> back(frames, std::vector<int>(static_cast<std::size_t>(n_states), -1));
    std::vector<double> obs(static_cast<std::size_t>(n_states), 0.0);
    std::vector<double> voiced_prob_total(frames, 0.0);

    for (std::size_t t = 0; t < frames; ++t) {
        std::fill(obs.begin(), obs.end(), 0.0);
        double yin_mass = 0.0;
        for (const auto& cand : cands[t]) {
            const int b = model.nearest_bin(cand.freq_hz);
            if (b >= 0) {
                obs[static_cast<std::size_t>(b)] += cand.prob;
                yin_mass += cand.prob;
            }
        }
        yin_mass = std::min(yin_mass, 1.0);
        voiced_prob_total[t] = yin_mass;
        const double pitched = cfg.yin_trust * yin_mass;
        for (int b = 0; b < n_bins; ++b) {
            obs[static_cast<std::size_t>(b)] *= cfg.yin_trust;
            obs[static_cast<std::size_t>(n_bins + b)] = (1.0 - pitched) / n_bins;
        }

        if (t == 0) {
            for (int s = 0; s < n_states; ++s)
                prev[static_cast<std::size_t>(s)] += log_floor(obs[static_cast<std::size_t>(s)]);
            continue;
        }

        for (int s = 0; s < n_states; ++s) {
            const bool to_voiced = s < n_bins;
            const int bin = to_voiced ? s : s - n_bins;
            double best = kNegInf;
            int best_from = -1;
            const int lo = std::max(0, bin - hs), hi = std::min(n_bins - 1, bin + hs);
            double wsum = 0.0;
            for (int pb = lo; pb <= hi; ++pb)
                wsum += step_weight[static_cast<std::size_t>(pb - bin + hs)];
            for (int pb = lo; pb <= hi; ++pb) {
                const double w = step_weight[static_cast<std::size_t>(pb - bin + hs)] / wsum;
                for (int pv = 0; pv < 2; ++pv) {
                    const int from = pv == 0 ? pb : pb + n_bins;
                    const bool same_voicing = (pv == 0) == to_voiced;
                    const double trans =
                        w * (same_voicing ? cfg.self_transition : 1.0 - cfg.self_transition);
                    const double score = prev[static_cast<std::size_t>(from)] + std::log(trans);
                    if (score > best) {
                        best = score;
                        best_from = from;
                    }
                }
            }
            cur[static_cast<std::size_t>(s)] =
                best + log_floor(obs[static_cast<std::size_t>(s)]);
            back[t][static_cast<std::size_t>(s)] = best_from;
        }
        std::swap(prev, cur);
    }

    int state = 0;
    for (int s = 1; s < n_states; ++s)
        if (prev[static_cast<std::size_t>(s)] > prev[static_cast<std::size_t>(state)]) state = s;

    std::vector<int> path(frames);
    for (std::size_t t = frames; t-- > 0;) {
        path[t] = state;
        if (t > 0) state = back[t][static_cast<std::size_t>(state)];
    }

    F0Contour out;
    out.grid.hop_seconds = static_cast<double>(cfg.hop) / cfg.sample_rate;
    out.grid.frame_zero_time = 0.0;
    out.f0_hz.assign(frames, 0.0);
    out.candidate_hz.assign(frames, 0.0);
    out.voiced.assign(frames, 0);
    out.voicing_prob.assign(frames, 0.0);

    for (std::size_t t = 0; t < frames; ++t) {
        out.voicing_prob[t] = voiced_prob_total[t];
        const int s = path[t];
        const int bin = s < n_bins ? s : s - n_bins;
        const double target = model.bin_freq[static_cast<std::size_t>(bin)];
        // Snap back to the closest raw YIN candidate for sub-bin accuracy.
        double best_freq = target;
        double best_d = std::numeric_limits<double>::max();
        for (const auto& cand : cands[t]) {
            const double d = std::abs(cand.freq_hz - target);
            if (d < best_d) {
                best_d = d;
                best_freq = cand.freq_hz;
            }
        }
        if (s < n_bins) {
            out.voiced[t] = 1;
            out.f0_hz[t] = best_freq;
        } else if (!cands[t].empty()) {
            out.candidate_hz[t] = best_freq;
        }
    }
    return out;
}

void save_f0(const std::string& path, const F0Contour& contour)
{
    std::string out = "time_sec\tf0_hz\tvoiced\tprob\n";
    char buf[128];
    for (std::size_t t = 0; t < contour.num_frames(); ++t) {
        const double f0 = contour.voiced[t] ? contour.f0_hz[t] : contour.candidate_hz[t];
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%d\t%.6f\n", contour.grid.time(t), f0,
                      contour.voiced[t] ? 1 : 0, contour.voicing_prob[t]);
        out += buf;
    }
    write_file_atomic(path, out);
}

F0Contour load_f0(const std::string& path)
{
    std::istringstream in(read_file(path));
    F0Contour c;
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> times;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line.find("time") != std::string::npos) continue;

        double time = 0.0, f0 = 0.0, prob = 0.0;
        int voiced = 0;
        if (std::sscanf(line.c_str(), "%lf %lf %d %lf", &time, &f0, &voiced, &prob) != 4)
            throw DataError(cat(path, ":", line_no, ": expected 4 columns"));
        if (f0 < 0.0)
            throw DataError(cat(path, ":", line_no, ": negative f0 ", f0));
        if (voiced != 0 && voiced != 1)
            throw DataError(cat(path, ":", line_no, ": voiced flag must be 0 or 1"));
        if (voiced && f0 <= 0.0)
            throw DataError(cat(path, ":", line_no, ": voiced frame with non-positive f0"));
        times.push_back(time);
        c.f0_hz.push_back(voiced ? f0 : 0.0);
        c.candidate_hz.push_back(voiced ? 0.0 : f0);
        c.voiced.push_back(static_cast<std::uint8_t>(voiced));
        c.voicing_prob.push_back(prob);
    }
    if (times.empty()) throw DataError(cat("empty F0 file: ", path));
    c.grid.frame_zero_time = times.front();
    c.grid.hop_seconds = times.size() > 1 ? times[1] - times[0] : 0.020;
    return c;
}

} // namespace notegate
