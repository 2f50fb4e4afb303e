#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rcm/corrector.hpp"
#include "rcm/env.hpp"
#include "rcm/fields.hpp"
#include "rcm/lattice.hpp"

namespace rcm {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_lo = 0.0;   // percentile bootstrap CI; equal to slope when not bootstrapped
    double slope_hi = 0.0;
};

/// Ordinary least squares y = intercept + slope x. Needs two distinct x.
LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

/// Least squares on (log x, log y) with a 95% percentile bootstrap CI over pairs.
/// Needs >= 3 points, all positive.
LineFit scaling_fit(const std::vector<double>& x, const std::vector<double>& y, std::size_t n_boot = 1000,
                    std::uint64_t seed = 0);

struct MomentNorm {
    double p = 0.0;
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool non_convergent = false;
    std::vector<std::string> reasons;
};

/// Flag thresholds for heavy-tail honesty.
inline constexpr double kMaxRelativeCiWidth = 0.5;
inline constexpr double kMaxTermShare = 0.25;

/// (mean |x|^p)^{1/p} with a 95% percentile bootstrap CI.
MomentNorm moment_norm(const std::vector<double>& samples, double p, std::optional<double> tail_index = std::nullopt,
                       std::size_t n_boot = 1000, std::uint64_t seed = 0);

/// (mean_s m_s)^{1/p} where m_s is the per-sample mean of |X|^p (already averaged
/// over positions inside sample s). The bootstrap resamples whole samples.
MomentNorm power_mean_norm(const std::vector<double>& per_sample_pmeans, double p,
                           std::optional<double> tail_index = std::nullopt, std::size_t n_boot = 1000,
                           std::uint64_t seed = 0);

/// Per-sample seed of an ensemble member.
std::uint64_t ensemble_seed(std::uint64_t base, std::size_t sample);

struct EnsembleOptions {
    std::size_t n_samples = 2;
    std::vector<double> R_list;
    int direction = 0;
    std::vector<double> p_list{2.0};
    double tol = 1e-8;
    bool with_sigma = false;      // also record the full (grad phi, grad sigma) norm
    double guard = 0.125;         // max R / L
    unsigned threads = 1;
    std::size_t n_boot = 1000;
    /// Called once per sample from the worker that solved it.
    std::function<void(std::size_t, const Environment&, const CorrectorBundle&)> on_sample;
};

struct SampleRecord {
    std::uint64_t seed = 0;
    // pmean[r][k]: mean over centres of C_R^{p_k}, C_R = R^{d/2} |avg_{B_R} grad_i phi_i|
    std::vector<std::vector<double>> pmean;
    // mean over centres of |avg_{B_R} grad_i phi_i|^2
    std::vector<double> sq_mean;
    // mean over centres of the squared Euclidean norm of avg_{B_R} (grad phi_i, grad sigma_i)
    std::vector<double> full_sq_mean;
    std::size_t solver_iterations = 0;
};

struct EnsembleStats {
    EnvironmentSpec spec;
    EnsembleOptions options;
    std::vector<SampleRecord> records;
    std::vector<std::vector<MomentNorm>> cr_norms;   // [r][k]: E[C_R^p]^{1/p}
    std::vector<MomentNorm> rms;                     // E[|avg grad_i phi_i|^2]^{1/2} per R
    std::vector<MomentNorm> full_rms;                // same for (grad phi, grad sigma), if recorded
    LineFit slope;                                   // log rms against log R, cluster-bootstrap CI
    bool any_non_convergent = false;
};

/// Ensemble estimate of the CLT statistic. Each sample draws its own environment
/// (seed from ensemble_seed) and averages over every ball centre.
EnsembleStats estimate_CR(const EnvironmentSpec& spec, const EnsembleOptions& opt);

struct GrowthOptions {
    std::vector<Coord> offsets;
    int direction = 0;
    double p = 2.0;
    std::size_t n_samples = 2;
    double tol = 1e-8;
    double guard = 0.125;   // max |x| / L
    unsigned threads = 1;
    std::size_t n_boot = 1000;
};

struct GrowthCurve {
    std::vector<Coord> offsets;
    std::vector<double> distance;        // |x|
    std::vector<MomentNorm> norm;        // E[|phi(x) - phi(0)|^p]^{1/p}, base point averaged
    std::vector<std::vector<double>> per_sample;   // [sample][x]: mean over base points of |phi(y+x) - phi(y)|^p
    LineFit shape_fit;                   // affine fit against the d-appropriate shape
    LineFit power_fit;                   // affine fit against |x|^{1/4}
};

/// sqrt(t) in d = 1, sqrt(log(1 + t)) in d = 2, 1 in d = 3.
double growth_shape(int d, double t);

GrowthCurve corrector_growth(const EnvironmentSpec& spec, const GrowthOptions& opt);

struct SublinearityReport {
    std::vector<double> n;
    std::vector<double> value;     // n^{-1} avg_{B_n(x)} |(phi,sigma)(y) - (phi,sigma)(x)|, averaged over centres
    LineFit fit;                   // log-log
    bool pass = false;             // decreasing and final <= half the first
};

/// Needs max n <= L/4. Centres are a regular subgrid of at most 1024 vertices.
SublinearityReport sublinearity_check(const CorrectorBundle& bundle, const std::vector<double>& n_list);

struct SobolevReport {
    double R = 0.0, mu = 0.0, S = 0.0, s = 0.0, tau = 0.0;
    double lhs = 0.0;        // R^{-1} (avg_{B_R} |psi - avg psi|^S)^{1/S}
    double gradient = 0.0;   // R^{-(1-tau)(1-mu)} (avg_{B_2R} |grad psi|^s)^{1/s}
    double local = 0.0;      // (avg_{B_R} |avg_{B_{R^mu}(x)} grad psi|^s)^{1/s}
    double constant = 0.0;   // lhs / (gradient + local)
    double bound = 0.0;
    bool pass = false;
};

/// S = 2(1 + 1/d), s = 2(d+1)/(d+2).
double sobolev_S(int d);
double sobolev_s(int d);

/// Frozen constant for the averaged Sobolev probe (4 x the calibrated maximum).
double sobolev_constant(int d);
/// Recomputes the calibration over random psi on L = 64 (d <= 2) or 32 (d = 3).
double calibrate_sobolev(int d, std::size_t trials = 100);

SobolevReport avg_sobolev_probe(const VertexField& psi, std::size_t center, double R, double mu, double S, double s,
                                std::optional<double> bound = std::nullopt);

}  // namespace rcm
