#include "notegate/eval.hpp"

#include <algorithm>
#include <cmath>

namespace notegate {

namespace {

void check_sorted(std::span<const NoteEvent> notes, const char* which)
{
    for (std::size_t i = 1; i < notes.size(); ++i)
        if (notes[i].onset < notes[i - 1].onset)
            throw DataError(cat(which, " notes are not sorted by onset (index ", i, ")"));
}

bool admissible(const NoteEvent& ref, const NoteEvent& est, const Criteria& criteria,
                const MatchConfig& cfg)
{
    if (criteria.onset && std::abs(ref.onset - est.onset) > cfg.onset_tolerance) return false;
    if (criteria.offset) {
        const double tol = std::max(cfg.offset_min_tolerance, cfg.offset_ratio * ref.duration());
        if (std::abs(ref.offset - est.offset) > tol) return false;
    }
    if (criteria.pitch) {
        if (!ref.pitch_midi || !est.pitch_midi) return false;
        const double cents = 100.0 * std::abs(*ref.pitch_midi - *est.pitch_midi);
        if (cents > cfg.pitch_tolerance_cents) return false;
    }
    return true;
}

// Kuhn's augmenting-path maximum bipartite matching.
struct Matcher {
    const std::vector<std::vector<std::size_t>>& adj;
    std::vector<int> match_est;
    std::vector<char> visited;

    bool augment(std::size_t r)
    {
        for (std::size_t e : adj[r]) {
            if (visited[e]) continue;
            visited[e] = 1;
            if (match_est[e] < 0 || augment(static_cast<std::size_t>(match_est[e]))) {
                match_est[e] = static_cast<int>(r);
                return true;
            }
        }
        return false;
    }
};

} // namespace

MatchList match_notes(std::span<const NoteEvent> ref, std::span<const NoteEvent> est,
                      const Criteria& criteria, const MatchConfig& cfg)
{
    check_sorted(ref, "reference");
    check_sorted(est, "estimated");

    std::vector<std::vector<std::size_t>> adj(ref.size());
    for (std::size_t r = 0; r < ref.size(); ++r)
        for (std::size_t e = 0; e < est.size(); ++e)
            if (admissible(ref[r], est[e], criteria, cfg)) adj[r].push_back(e);

    Matcher m{adj, std::vector<int>(est.size(), -1), {}};
    for (std::size_t r = 0; r < ref.size(); ++r) {
        m.visited.assign(est.size(), 0);
        m.augment(r);
    }

    MatchList out;
    for (std::size_t e = 0; e < est.size(); ++e)
        if (m.match_est[e] >= 0) out.emplace_back(static_cast<std::size_t>(m.match_est[e]), e);
    std::sort(out.begin(), out.end());
    return out;
}

Prf score_matching(const MatchList& matches, std::size_t n_ref, std::size_t n_est)
{
    Prf out;
    out.matches = matches;
    if (n_ref == 0 && n_est == 0) {
        out.precision = out.recall = out.f1 = 1.0; // vacuous perfection
        return out;
    }
    const double m = static_cast<double>(matches.size());
    out.precision = n_est ? m / static_cast<double>(n_est) : 0.0;
    out.recall = n_ref ? m / static_cast<double>(n_ref) : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

ScoreReport score(std::span<const NoteEvent> ref, std::span<const NoteEvent> est,
                  const MatchConfig& cfg)
{
    ScoreReport r;
    r.n_ref = ref.size();
    r.n_est = est.size();
    auto run = [&](Criteria c) {
        return score_matching(match_notes(ref, est, c, cfg), ref.size(), est.size());
    };
    r.con = run({.onset = true});
    r.coff = run({.offset = true});
    r.conoff = run({.onset = true, .offset = true});
    r.conp = run({.onset = true, .pitch = true});
    r.conpoff = run({.onset = true, .offset = true, .pitch = true});
    return r;
}

const char* to_string(OnsetType t)
{
    switch (t) {
    case OnsetType::plain: return "plain";
    case OnsetType::transition: return "transition";
    case OnsetType::reonset: return "re-onset";
    }
    return "?";
}

std::vector<OnsetType> classify_onsets(std::span<const NoteEvent> ref, double max_gap_seconds,
                                       double pitch_change_semitones)
{
    check_sorted(ref, "reference");
    for (std::size_t i = 1; i < ref.size(); ++i)
        if (ref[i].onset < ref[i - 1].offset - 1e-9)
            throw DataError(cat("overlapping reference notes at index ", i));

    std::vector<OnsetType> out(ref.size(), OnsetType::plain);
    for (std::size_t i = 1; i < ref.size(); ++i) {
        const double gap = ref[i].onset - ref[i - 1].offset;
        if (gap > max_gap_seconds + 1e-9) continue;
        if (!ref[i].pitch_midi || !ref[i - 1].pitch_midi)
            throw DataError(cat("note ", i, " abuts its predecessor but lacks a pitch"));
        const double jump = std::abs(*ref[i].pitch_midi - *ref[i - 1].pitch_midi);
        out[i] = jump > pitch_change_semitones ? OnsetType::transition : OnsetType::reonset;
    }
    return out;
}

OnsetTypeRecall onset_type_recall(std::span<const NoteEvent> ref, std::span<const NoteEvent> est,
                                  const MatchConfig& cfg)
{
    const auto types = classify_onsets(ref);
    const MatchList matches = match_notes(ref, est, {.onset = true}, cfg);
    std::vector<char> matched(ref.size(), 0);
    for (const auto& [r, e] : matches) matched[r] = 1;

    OnsetTypeRecall out;
    auto entry = [&](OnsetType t) -> OnsetTypeRecall::Entry& {
        switch (t) {
        case OnsetType::transition: return out.transition;
        case OnsetType::reonset: return out.reonset;
        default: return out.plain;
        }
    };
    for (std::size_t i = 0; i < ref.size(); ++i) {
        auto& ent = entry(types[i]);
        ent.total += 1;
        if (matched[i]) ent.matched += 1;
    }
    for (auto* ent : {&out.plain, &out.transition, &out.reonset})
        if (ent->total > 0)
            ent->recall = static_cast<double>(ent->matched) / static_cast<double>(ent->total);
    return out;
}

std::vector<double> default_sweep_thresholds()
{
    std::vector<double> out;
    for (int i = 1; i <= 9; ++i) out.push_back(i / 10.0);
    return out;
}

SweepResult sweep_threshold(std::span<const SweepItem> items, const MatchConfig& cfg,
                            std::span<const double> thresholds)
{
    if (items.empty()) throw DataError("threshold sweep needs at least one validation pair");
    if (thresholds.empty()) throw DataError("threshold sweep needs at least one threshold");

    SweepResult result;
    result.thresholds.assign(thresholds.begin(), thresholds.end());
    for (double th : thresholds) {
        DecodeConfig dc;
        dc.onset_threshold = th;
        dc.offset_threshold = th;
        std::size_t total_ref = 0, total_est = 0, total_matched = 0;
        for (const auto& item : items) {
            const auto est = decode_notes(item.posteriors, dc);
            const auto matches = match_notes(item.ref, est, {.onset = true}, cfg);
            total_ref += item.ref.size();
            total_est += est.size();
            total_matched += matches.size();
        }
        Prf prf;
        if (total_ref == 0 && total_est == 0) {
            prf.precision = prf.recall = prf.f1 = 1.0;
        } else {
            prf.precision = total_est ? double(total_matched) / double(total_est) : 0.0;
            prf.recall = total_ref ? double(total_matched) / double(total_ref) : 0.0;
            prf.f1 = (prf.precision + prf.recall) > 0.0
                         ? 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall)
                         : 0.0;
        }
        result.scores.push_back(std::move(prf));
    }

    result.best_index = 0;
    for (std::size_t i = 1; i < result.scores.size(); ++i)
        if (result.scores[i].f1 > result.scores[result.best_index].f1) result.best_index = i;
    result.best_threshold = result.thresholds[result.best_index];
    return result;
}

} // namespace notegate
