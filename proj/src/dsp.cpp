#include "notegate/dsp.hpp"

#include <cmath>

#include "notegate/common.hpp"

namespace notegate {

void fft_radix2(std::vector<std::complex<double>>& a)
{
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw Error(cat("FFT size must be a power of two, got ", n));

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wn(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wn;
            }
        }
    }
}

std::vector<double> hann_periodic(std::size_t n_taps)
{
    std::vector<double> w(n_taps);
    for (std::size_t i = 0; i < n_taps; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / static_cast<double>(n_taps)));
    return w;
}

std::vector<double> hann_symmetric(std::size_t n_taps)
{
    std::vector<double> w(n_taps);
    if (n_taps == 1) {
        w[0] = 1.0;
        return w;
    }
    for (std::size_t i = 0; i < n_taps; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / static_cast<double>(n_taps - 1)));
    return w;
}

} // namespace notegate
