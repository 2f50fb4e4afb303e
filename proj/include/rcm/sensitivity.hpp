#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>

#include "rcm/corrector.hpp"
#include "rcm/env.hpp"
#include "rcm/fields.hpp"

namespace rcm {

enum class ObservableKind { F1, F2, EdgeValue, Custom };

/// Scalar functional of the environment.
///   F1 = sum_e grad phi_i . g,  F2 = sum_e grad sigma_{ijk} . g,
///   EdgeValue = a_e, Custom = user callback.
struct Observable {
    ObservableKind kind = ObservableKind::F1;
    int i = 0;
    int j = 0;
    int k = 1;
    VectorField g;
    std::size_t edge = 0;
    std::function<double(const Environment&)> custom;
    double tol = 1e-10;

    static Observable f1(int i, VectorField g, double tol = 1e-10);
    static Observable f2(int i, int j, int k, VectorField g, double tol = 1e-10);
    static Observable edge_value(std::size_t e);
    static Observable from_function(std::function<double(const Environment&)> f);

    std::string name() const;
    double evaluate(const Environment& env) const;
};

/// D_x X = X(A) - X(A^(x)) with A^(x) from resample_vertex(env, x, stream).
double vertical_derivative(const Observable& obs, const Environment& env, std::size_t x, std::uint64_t stream);

struct RepresentationReport {
    double lhs = 0.0;   // direct difference F(A) - F(A^(x))
    double rhs = 0.0;   // representation formula evaluated at x
    double magnitude = 0.0;  // max(|F(A)|, |F(A^(x))|)
    // |lhs - rhs| / max(|lhs|, |rhs|, magnitude), 0 when all vanish. The solver
    // tolerance controls each F to relative accuracy, not their difference.
    double gap = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

/// env and env_x differ only on the d forward edges at x.
RepresentationReport representation_check_F1(const Environment& env, const Environment& env_x, std::size_t x, int i,
                                             const VectorField& g, double tol);
RepresentationReport representation_check_F2(const Environment& env, const Environment& env_x, std::size_t x, int i,
                                             int j, int k, const VectorField& g, double tol);

enum class GapMode { Exhaustive, MonteCarlo };

struct SpectralGapReport {
    GapMode mode = GapMode::Exhaustive;
    std::size_t configurations = 0;   // exhaustive: enumerated configurations; MC: samples
    double mean = 0.0;
    double variance = 0.0;
    double bound = 0.0;               // (1/2) E[sum_x E'|D_x X|^2]
    double variance_stderr = 0.0;     // MC only
    double bound_stderr = 0.0;        // MC only
    bool holds = false;
    double margin = 0.0;              // bound - variance
    std::array<double, 3> moment_ratio{};  // E|X-EX|^{2p}^{1/p} / (4 p^2 E[(sum_x E'|D_x X|^2)^p]^{1/p}), p = 1,2,3
};

/// Exhaustive mode enumerates the full product measure (finite-support laws,
/// at most 2^20 configurations) and integrates the resample exactly.
SpectralGapReport spectral_gap_check(const Observable& obs, const EnvironmentSpec& spec, GapMode mode,
                                     std::size_t n_samples = 0);

/// Number of configurations exhaustive mode would visit (0 if the law has no finite support).
double exhaustive_size(const EnvironmentSpec& spec);

}  // namespace rcm
