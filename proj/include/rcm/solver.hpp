#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "rcm/env.hpp"
#include "rcm/fields.hpp"

namespace rcm {

struct SolveReport {
    std::size_t iterations = 0;
    double relative_residual = 0.0;  // recomputed from scratch, not the CG recurrence
    double tolerance = 0.0;
    double seconds = 0.0;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, SolveReport report)
        : std::runtime_error(what), report_(report) {}
    const SolveReport& report() const noexcept { return report_; }

private:
    SolveReport report_;
};

struct SolveOptions {
    double tol = 1e-8;
    std::optional<double> massive;          // T for the T^{-1} u term
    std::optional<std::size_t> max_iterations;
    std::size_t restart = 500;
    /// Skip the compatibility check and drop the mean of rhs. For right-hand
    /// sides that are in divergence form by construction, where any mean is rounding.
    bool project_rhs = false;
};

/// Default cap 50 L^{d/2} sqrt(max a / min a).
std::size_t default_iteration_cap(const Environment& env);

/// Solves (T^{-1} - div* A grad) u = rhs by Jacobi-preconditioned CG.
/// Massless: rhs must sum to zero and u is returned with mean zero.
std::pair<VertexField, SolveReport> solve_weighted(const Environment& env, const VertexField& rhs,
                                                   const SolveOptions& options = {});

/// Mean-zero solution of -laplacian(u) = rhs by DFT. With project_rhs the
/// compatibility check is skipped and the zero mode is simply dropped.
VertexField solve_poisson_spectral(const VertexField& rhs, bool project_rhs = false);

/// Throws ContractError unless |sum rhs| is at rounding level relative to sum |rhs|.
void check_compatible(const VertexField& rhs);

}  // namespace rcm
