#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "rcm/env.hpp"
#include "rcm/fields.hpp"
#include "rcm/solver.hpp"

namespace rcm {

/// Corrector data for one direction i (0-based). sigma holds sigma_{ijk} for j < k;
/// sigma_{ikj} = -sigma_{ijk} and sigma_{ijj} = 0.
struct CorrectorBundle {
    int direction = 0;
    VertexField phi;
    VectorField grad_phi;
    VectorField flux;
    std::map<std::pair<int, int>, VertexField> sigma;
    SolveReport phi_report;
    std::map<std::pair<int, int>, double> sigma_residual;  // relative residual of each sigma solve

    /// sigma_{ijk} for any j, k (zero field on the diagonal).
    VertexField sigma_component(int j, int k) const;
    bool has_sigma() const noexcept { return !sigma.empty(); }
};

/// Solves -div* A grad phi_i = div*(A e_i) and fills grad_phi and flux = A(grad phi_i + e_i).
CorrectorBundle compute_corrector(const Environment& env, int i, double tol = 1e-8);

/// Fills sigma: -laplacian sigma_{ijk} = grad_j q_k - grad_k q_j for j < k. No-op in d = 1.
void compute_flux_corrector(CorrectorBundle& bundle, double tol = 1e-8);

/// Both steps for every direction.
std::vector<CorrectorBundle> compute_all_correctors(const Environment& env, double tol = 1e-8, bool with_sigma = true);

/// Solves (T^{-1} - div* A grad) phi_T = div*(A e_i).
VertexField compute_massive_corrector(const Environment& env, int i, double T, double tol = 1e-8);

/// div*(A e_i): the corrector right-hand side.
VertexField corrector_rhs(const Environment& env, int i);

/// (div* sigma_i)_j = sum_k grad*_k sigma_{ijk}, as a vector field indexed by j.
VectorField sigma_divergence(const CorrectorBundle& bundle);

enum class AuxKind { U, V, W };

/// Auxiliary fields driven by g:
///   -div* A grad u = div* g,  -laplacian v = div* g,
///   -div* A grad w_jk = div* A (grad*_k v e_j - grad*_j v e_k).
struct AuxFields {
    VectorField g;
    std::optional<VertexField> u;
    std::optional<VertexField> v;
    std::map<std::pair<int, int>, VertexField> w;
    std::vector<SolveReport> reports;
};

/// The vector field grad*_k v e_j - grad*_j v e_k.
VectorField aux_curl_field(const VertexField& v, int j, int k);

/// Computes the requested field in place. W needs V first (ContractError otherwise).
void solve_aux(const Environment& env, AuxFields& aux, AuxKind which, double tol = 1e-8, int j = 0, int k = 1);

}  // namespace rcm
