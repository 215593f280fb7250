#pragma once

#include <span>
#include <string>
#include <vector>

#include "notegate/matrix.hpp"
#include "notegate/mel.hpp"

namespace notegate {

// Target sequence longer than the frame count allows: no alignment path
// exists. Distinct from numeric underflow by contract.
class InfeasibleTarget : public Error {
public:
    using Error::Error;
};

// Ordered phoneme labels; the CTC blank is the implicit last class index.
struct PhonemeInventory {
    std::vector<std::string> symbols;

    std::size_t size() const { return symbols.size(); }        // K
    std::size_t blank_index() const { return symbols.size(); } // blank appended last
    std::size_t num_classes() const { return symbols.size() + 1; }

    // Index of a symbol, or throws naming the unknown symbol.
    std::size_t index_of(const std::string& symbol) const;

    // Plain text, one symbol per line; order defines class indices.
    static PhonemeInventory load(const std::string& path);
    void validate() const;
};

// T x (K+1) row-stochastic matrix of phoneme probabilities, blank last.
struct Posteriorgram {
    Matrix frames;
    FrameGrid grid;
    PhonemeInventory inventory;

    std::size_t num_frames() const { return frames.rows(); }
    void validate() const; // entries in [0,1], rows sum to 1 within 1e-5
};

// Ground-truth phoneme sequence, class indices < K, no blanks.
struct PhonemeSequence {
    std::vector<std::size_t> labels;

    bool operator==(const PhonemeSequence&) const = default;
};

// Whitespace-separated symbols resolved against the inventory.
PhonemeSequence read_phoneme_sequence(const std::string& path, const PhonemeInventory& inv);

// Standard CTC collapse: drop repeated consecutive symbols, then blanks.
PhonemeSequence collapse(std::span<const std::size_t> path, std::size_t blank_index);

// -log of the total probability over all alignment paths collapsing to the
// target; forward dynamic program over the blank-augmented sequence in log
// space. Probabilities are floored at 1e-30 inside the recursion.
double ctc_loss(const Posteriorgram& ppg, const PhonemeSequence& target);

// dL/dP(class k at frame t) for every cell, via forward-backward. Cells on no
// feasible path are exactly zero.
Matrix ctc_loss_grad(const Posteriorgram& ppg, const PhonemeSequence& target);

// Sum of squared element differences against the normalized mel target.
double reconstruction_loss(const MelSpectrogram& reconstructed, const MelSpectrogram& target);

double ppg_loss(double ctc, double recon);

} // namespace notegate
