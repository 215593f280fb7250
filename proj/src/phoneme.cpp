#include "notegate/phoneme.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "notegate/ioutil.hpp"

namespace notegate {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kProbFloor = 1e-30;

double log_add(double a, double b)
{
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

// Blank-augmented label sequence: blank, l1, blank, l2, ..., blank.
std::vector<std::size_t> augment(const PhonemeSequence& target, std::size_t blank)
{
    std::vector<std::size_t> ext(2 * target.labels.size() + 1, blank);
    for (std::size_t i = 0; i < target.labels.size(); ++i) ext[2 * i + 1] = target.labels[i];
    return ext;
}

void check_instance(const Posteriorgram& ppg, const PhonemeSequence& target)
{
    const std::size_t classes = ppg.inventory.num_classes();
    if (ppg.frames.cols() != classes)
        throw DataError(cat("posteriorgram has ", ppg.frames.cols(), " columns, inventory needs ",
                            classes));
    if (ppg.frames.rows() == 0) throw DataError("posteriorgram has no frames");
    for (std::size_t l : target.labels)
        if (l >= ppg.inventory.size())
            throw DataError(cat("target label index ", l, " out of range (K=",
                                ppg.inventory.size(), ")"));

    std::size_t repeats = 0;
    for (std::size_t i = 1; i < target.labels.size(); ++i)
        if (target.labels[i] == target.labels[i - 1]) ++repeats;
    const std::size_t min_frames = target.labels.size() + repeats;
    if (ppg.frames.rows() < min_frames)
        throw InfeasibleTarget(cat("no valid alignment: target needs at least ", min_frames,
                                   " frames, posteriorgram has ", ppg.frames.rows()));
}

// Forward log-probabilities over the augmented states, all T frames.
// alpha(t, s) includes the emission at frame t.
Matrix forward_pass(const Matrix& logp, const std::vector<std::size_t>& ext)
{
    const std::size_t T = logp.rows(), S = ext.size();
    Matrix alpha(T, S, kNegInf);
    alpha(0, 0) = logp(0, ext[0]);
    if (S > 1) alpha(0, 1) = logp(0, ext[1]);
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            double acc = alpha(t - 1, s);
            if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
            if (s >= 2 && ext[s] != ext[s - 2] && (s % 2) == 1)
                acc = log_add(acc, alpha(t - 1, s - 2));
            alpha(t, s) = acc == kNegInf ? kNegInf : acc + logp(t, ext[s]);
        }
    }
    return alpha;
}

// Backward log-probabilities; beta(t, s) covers emissions at frames t+1..T-1,
// so alpha(t, s) + beta(t, s) is the mass of all paths through state s at t.
Matrix backward_pass(const Matrix& logp, const std::vector<std::size_t>& ext)
{
    const std::size_t T = logp.rows(), S = ext.size();
    Matrix beta(T, S, kNegInf);
    beta(T - 1, S - 1) = 0.0;
    if (S > 1) beta(T - 1, S - 2) = 0.0;
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t s = 0; s < S; ++s) {
            double acc = beta(t + 1, s) == kNegInf
                             ? kNegInf
                             : beta(t + 1, s) + logp(t + 1, ext[s]);
            if (s + 1 < S && beta(t + 1, s + 1) != kNegInf)
                acc = log_add(acc, beta(t + 1, s + 1) + logp(t + 1, ext[s + 1]));
            if (s + 2 < S && ext[s] != ext[s + 2] && (s % 2) == 1 &&
                beta(t + 1, s + 2) != kNegInf)
                acc = log_add(acc, beta(t + 1, s + 2) + logp(t + 1, ext[s + 2]));
            beta(t, s) = acc;
        }
    }
    return beta;
}

Matrix floored_log(const Matrix& frames)
{
    Matrix logp(frames.rows(), frames.cols());
    for (std::size_t t = 0; t < frames.rows(); ++t)
        for (std::size_t k = 0; k < frames.cols(); ++k)
            logp(t, k) = std::log(std::max(frames(t, k), kProbFloor));
    return logp;
}

double total_log_prob(const Matrix& alpha, std::size_t S)
{
    const std::size_t T = alpha.rows();
    double lp = alpha(T - 1, S - 1);
    if (S > 1) lp = log_add(lp, alpha(T - 1, S - 2));
    return lp;
}

} // namespace

std::size_t PhonemeInventory::index_of(const std::string& symbol) const
{
    auto it = std::find(symbols.begin(), symbols.end(), symbol);
    if (it == symbols.end()) throw DataError(cat("unknown phoneme symbol: '", symbol, "'"));
    return static_cast<std::size_t>(it - symbols.begin());
}

void PhonemeInventory::validate() const
{
    if (symbols.empty()) throw DataError("phoneme inventory is empty");
    std::unordered_set<std::string> seen;
    for (const auto& s : symbols) {
        if (s.empty()) throw DataError("phoneme inventory contains an empty symbol");
        if (!seen.insert(s).second)
            throw DataError(cat("duplicate phoneme symbol: '", s, "'"));
    }
}

PhonemeInventory PhonemeInventory::load(const std::string& path)
{
    std::istringstream in(read_file(path));
    PhonemeInventory inv;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        inv.symbols.push_back(line.substr(start));
    }
    inv.validate();
    return inv;
}

void Posteriorgram::validate() const
{
    if (frames.cols() != inventory.num_classes())
        throw DataError(cat("posteriorgram has ", frames.cols(), " columns, inventory needs ",
                            inventory.num_classes()));
    for (std::size_t t = 0; t < frames.rows(); ++t) {
        double sum = 0.0;
        for (std::size_t k = 0; k < frames.cols(); ++k) {
            const double p = frames(t, k);
            if (!(p >= 0.0 && p <= 1.0))
                throw DataError(cat("posteriorgram cell (", t, ",", k, ") = ", p,
                                    " outside [0,1]"));
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-5)
            throw DataError(cat("posteriorgram row ", t, " sums to ", sum));
    }
}

PhonemeSequence read_phoneme_sequence(const std::string& path, const PhonemeInventory& inv)
{
    std::istringstream in(read_file(path));
    PhonemeSequence seq;
    std::string tok;
    while (in >> tok) seq.labels.push_back(inv.index_of(tok));
    return seq;
}

PhonemeSequence collapse(std::span<const std::size_t> path, std::size_t blank_index)
{
    PhonemeSequence out;
    std::size_t prev = blank_index + 1; // sentinel unequal to any valid index
    for (std::size_t idx : path) {
        if (idx > blank_index)
            throw DataError(cat("path index ", idx, " exceeds blank index ", blank_index));
        if (idx != prev && idx != blank_index) out.labels.push_back(idx);
        prev = idx;
    }
    return out;
}

double ctc_loss(const Posteriorgram& ppg, const PhonemeSequence& target)
{
    check_instance(ppg, target);
    const auto ext = augment(target, ppg.inventory.blank_index());
    const Matrix logp = floored_log(ppg.frames);
    const Matrix alpha = forward_pass(logp, ext);
    return -total_log_prob(alpha, ext.size());
}

Matrix ctc_loss_grad(const Posteriorgram& ppg, const PhonemeSequence& target)
{
    check_instance(ppg, target);
    const auto ext = augment(target, ppg.inventory.blank_index());
    const std::size_t T = ppg.frames.rows(), S = ext.size();
    const Matrix logp = floored_log(ppg.frames);
    const Matrix alpha = forward_pass(logp, ext);
    const Matrix beta = backward_pass(logp, ext);
    const double lp = total_log_prob(alpha, S);

    Matrix grad(T, ppg.frames.cols(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        // Sum path mass per class, then dL/dy = -exp(mass - lp) / y.
        for (std::size_t s = 0; s < S; ++s) {
            if (alpha(t, s) == kNegInf || beta(t, s) == kNegInf) continue;
            const std::size_t k = ext[s];
            const double mass = alpha(t, s) + beta(t, s);
            const double y = std::max(ppg.frames(t, k), kProbFloor);
            grad(t, k) -= std::exp(mass - lp) / y;
        }
    }
    return grad;
}

double reconstruction_loss(const MelSpectrogram& reconstructed, const MelSpectrogram& target)
{
    if (reconstructed.frames.rows() != target.frames.rows() ||
        reconstructed.frames.cols() != target.frames.cols())
        throw DataError(cat("reconstruction shape ", reconstructed.frames.rows(), "x",
                            reconstructed.frames.cols(), " does not match target ",
                            target.frames.rows(), "x", target.frames.cols()));
    const auto& a = reconstructed.frames.values();
    const auto& b = target.frames.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double ppg_loss(double ctc, double recon)
{
    return ctc + recon;
}

} // namespace notegate
