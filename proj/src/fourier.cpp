#include "rcm/fourier.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "rcm/error.hpp"

namespace rcm {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

Fft::Fft(const Lattice& lattice) : lattice_(lattice) {
    const int d = lattice.dim();
    const int L = lattice.side();
    // Vertex index puts c0 fastest, so FFTW's row-major dims run c_{d-1} .. c0.
    int n[3];
    for (int i = 0; i < d; ++i) n[i] = L;
    nspec_ = lattice.volume() / L * (L / 2 + 1);

    std::lock_guard lock(planner_mutex());
    real_ = fftw_alloc_real(lattice.volume());
    auto* spec = fftw_alloc_complex(nspec_);
    spec_ = spec;
    plan_fwd_ = fftw_plan_dft_r2c(d, n, real_, spec, FFTW_ESTIMATE);
    plan_inv_ = fftw_plan_dft_c2r(d, n, spec, real_, FFTW_ESTIMATE);
    if (!plan_fwd_ || !plan_inv_) throw std::runtime_error("FFTW plan creation failed");

    symbol_.resize(nspec_);
    const int half = L / 2 + 1;
    std::vector<double> one(static_cast<std::size_t>(L));
    for (int k = 0; k < L; ++k) one[k] = 2.0 - 2.0 * std::cos(2.0 * std::numbers::pi * k / L);
    for (std::size_t s = 0; s < nspec_; ++s) {
        std::size_t rest = s;
        double lam = one[rest % half];
        rest /= half;
        for (int i = 1; i < d; ++i) {
            lam += one[rest % L];
            rest /= L;
        }
        symbol_[s] = lam;
    }
}

Fft::~Fft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
    fftw_free(real_);
    fftw_free(spec_);
}

void Fft::forward(std::span<const double> in, std::vector<std::complex<double>>& out) {
    if (in.size() != lattice_.volume()) throw ContractError("FFT input length mismatch");
    std::copy(in.begin(), in.end(), real_);
    fftw_execute(static_cast<fftw_plan>(plan_fwd_));
    auto* spec = static_cast<fftw_complex*>(spec_);
    out.resize(nspec_);
    for (std::size_t s = 0; s < nspec_; ++s) out[s] = {spec[s][0], spec[s][1]};
}

void Fft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
    if (in.size() != nspec_ || out.size() != lattice_.volume()) throw ContractError("FFT inverse length mismatch");
    auto* spec = static_cast<fftw_complex*>(spec_);
    for (std::size_t s = 0; s < nspec_; ++s) {
        spec[s][0] = in[s].real();
        spec[s][1] = in[s].imag();
    }
    fftw_execute(static_cast<fftw_plan>(plan_inv_));
    const double scale = 1.0 / static_cast<double>(lattice_.volume());
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = real_[x] * scale;
}

Fft& fft_for(const Lattice& lattice) {
    thread_local std::map<std::pair<int, int>, std::unique_ptr<Fft>> cache;
    auto& slot = cache[{lattice.dim(), lattice.side()}];
    if (!slot) slot = std::make_unique<Fft>(lattice);
    return *slot;
}

}  // namespace rcm
