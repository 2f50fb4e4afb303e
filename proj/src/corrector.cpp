#include "rcm/corrector.hpp"

#include <algorithm>

#include "rcm/calculus.hpp"
#include "rcm/error.hpp"

namespace rcm {

namespace {

void check_direction(const Lattice& lat, int i) {
    if (i < 0 || i >= lat.dim())
        throw ContractError("direction " + std::to_string(i) + " out of range for d = " + std::to_string(lat.dim()));
}

}  // namespace

VertexField CorrectorBundle::sigma_component(int j, int k) const {
    if (j == k) return VertexField(phi.lattice());
    if (j < k) return sigma.at({j, k});
    VertexField s = sigma.at({k, j});
    s *= -1.0;
    return s;
}

VertexField corrector_rhs(const Environment& env, int i) {
    const Lattice& lat = env.lattice();
    check_direction(lat, i);
    VertexField rhs(lat);
    for (std::size_t x = 0; x < lat.volume(); ++x) rhs[x] = env.a(i, x) - env.a(i, lat.backward(x, i));
    return rhs;
}

CorrectorBundle compute_corrector(const Environment& env, int i, double tol) {
    CorrectorBundle b;
    b.direction = i;
    auto [phi, report] = solve_weighted(env, corrector_rhs(env, i), {.tol = tol, .project_rhs = true});
    b.phi = std::move(phi);
    b.phi_report = report;
    b.grad_phi = forward_gradient(b.phi);
    b.flux = VectorField(env.lattice());
    const std::size_t n = env.lattice().volume();
    for (int j = 0; j < env.lattice().dim(); ++j)
        for (std::size_t x = 0; x < n; ++x) b.flux(j, x) = env.a(j, x) * (b.grad_phi(j, x) + (i == j ? 1.0 : 0.0));
    return b;
}

void compute_flux_corrector(CorrectorBundle& bundle, double tol) {
    const Lattice& lat = bundle.flux.lattice();
    bundle.sigma.clear();
    bundle.sigma_residual.clear();
    const int d = lat.dim();
    if (d == 1) return;
    std::vector<VectorField> grad_q;
    for (int k = 0; k < d; ++k) grad_q.push_back(forward_gradient(bundle.flux.component_field(k)));
    for (int j = 0; j < d; ++j)
        for (int k = j + 1; k < d; ++k) {
            VertexField rhs(lat);
            for (std::size_t x = 0; x < lat.volume(); ++x) rhs[x] = grad_q[k](j, x) - grad_q[j](k, x);
            VertexField s = solve_poisson_spectral(rhs, true);
            auto r = laplacian(s);
            r += rhs;
            // Rounding-level floor: a constant flux has a curl of pure noise.
            const double rn = std::max(rhs.norm2(), 1e-13 * bundle.flux.norm2());
            const double rel = rn > 0.0 ? r.norm2() / rn : 0.0;
            if (rel > tol)
                throw ConvergenceError("flux-corrector residual " + std::to_string(rel) + " above tolerance",
                                       SolveReport{0, rel, tol, 0.0});
            bundle.sigma_residual[{j, k}] = rel;
            bundle.sigma.emplace(std::pair{j, k}, std::move(s));
        }
}

std::vector<CorrectorBundle> compute_all_correctors(const Environment& env, double tol, bool with_sigma) {
    std::vector<CorrectorBundle> out;
    for (int i = 0; i < env.lattice().dim(); ++i) {
        out.push_back(compute_corrector(env, i, tol));
        if (with_sigma) compute_flux_corrector(out.back(), tol);
    }
    return out;
}

VertexField compute_massive_corrector(const Environment& env, int i, double T, double tol) {
    if (!(T > 0.0)) throw ConfigError("massive term T must be positive");
    return solve_weighted(env, corrector_rhs(env, i), {.tol = tol, .massive = T}).first;
}

VectorField sigma_divergence(const CorrectorBundle& bundle) {
    const Lattice& lat = bundle.flux.lattice();
    VectorField out(lat);
    if (lat.dim() == 1) return out;
    for (int j = 0; j < lat.dim(); ++j)
        for (int k = 0; k < lat.dim(); ++k) {
            if (j == k) continue;
            const VertexField s = bundle.sigma_component(j, k);
            for (std::size_t x = 0; x < lat.volume(); ++x) out(j, x) += s[x] - s[lat.backward(x, k)];
        }
    return out;
}

VectorField aux_curl_field(const VertexField& v, int j, int k) {
    const Lattice& lat = v.lattice();
    VectorField h(lat);
    for (std::size_t x = 0; x < lat.volume(); ++x) {
        h(j, x) += v[x] - v[lat.backward(x, k)];
        h(k, x) -= v[x] - v[lat.backward(x, j)];
    }
    return h;
}

void solve_aux(const Environment& env, AuxFields& aux, AuxKind which, double tol, int j, int k) {
    const Lattice& lat = env.lattice();
    if (!(aux.g.lattice() == lat)) throw ContractError("driving field g lives on a different box");
    switch (which) {
        case AuxKind::U: {
            auto [u, rep] = solve_weighted(env, backward_divergence(aux.g), {.tol = tol, .project_rhs = true});
            aux.u = std::move(u);
            aux.reports.push_back(rep);
            break;
        }
        case AuxKind::V:
            aux.v = solve_poisson_spectral(backward_divergence(aux.g), true);
            break;
        case AuxKind::W: {
            if (!aux.v) throw ContractError("w requires v to be computed first");
            check_direction(lat, j);
            check_direction(lat, k);
            if (j == k) throw ContractError("w_jk needs j != k");
            const auto rhs = backward_divergence(multiply(env.conductances(), aux_curl_field(*aux.v, j, k)));
            auto [w, rep] = solve_weighted(env, rhs, {.tol = tol, .project_rhs = true});
            aux.w.insert_or_assign(std::pair{j, k}, std::move(w));
            aux.reports.push_back(rep);
            break;
        }
    }
}

}  // namespace rcm
