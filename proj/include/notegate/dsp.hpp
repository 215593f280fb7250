#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace notegate {

// In-place iterative radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a);

// Periodic Hann, w[n] = 0.5 * (1 - cos(2*pi*n / n_taps)); the STFT analysis
// window.
std::vector<double> hann_periodic(std::size_t n_taps);

// Symmetric Hann with zero endpoints, w[n] = 0.5 * (1 - cos(2*pi*n / (n_taps - 1)));
// n_taps == 1 gives {1}.
std::vector<double> hann_symmetric(std::size_t n_taps);

} // namespace notegate
