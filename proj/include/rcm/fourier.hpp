#pragma once

#include <complex>
#include <span>
#include <vector>

#include "rcm/lattice.hpp"

namespace rcm {

/// Real-to-complex DFT on Z_L^d (half spectrum along the fastest axis).
/// One instance is not safe for concurrent use; `fft_for` hands out a
/// per-thread instance.
class Fft {
public:
    explicit Fft(const Lattice& lattice);
    ~Fft();
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;

    const Lattice& lattice() const noexcept { return lattice_; }
    std::size_t spectrum_size() const noexcept { return nspec_; }

    void forward(std::span<const double> in, std::vector<std::complex<double>>& out);
    /// Normalized inverse: inverse(forward(f)) == f.
    void inverse(std::span<const std::complex<double>> in, std::span<double> out);

    /// Lattice symbol sum_i (2 - 2 cos(2 pi k_i / L)) per spectrum entry.
    const std::vector<double>& symbol() const noexcept { return symbol_; }

private:
    Lattice lattice_;
    std::size_t nspec_ = 0;
    double* real_ = nullptr;
    void* spec_ = nullptr;
    void* plan_fwd_ = nullptr;
    void* plan_inv_ = nullptr;
    std::vector<double> symbol_;
};

Fft& fft_for(const Lattice& lattice);

}  // namespace rcm
