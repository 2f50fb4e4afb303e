#include "rcm/green.hpp"

#include <cmath>
#include <map>

#include "rcm/calculus.hpp"
#include "rcm/error.hpp"
#include "rcm/solver.hpp"
#include "rcm/stats.hpp"

namespace rcm {

GreenDiff green_difference(const Lattice& lattice, std::size_t x) {
    if (lattice.dim() < 2) throw ContractError("Green differences need d >= 2");
    if (x == 0) throw GeometryError("Green difference needs x != 0");
    if (!(2.0 * lattice.norm(x) < 0.5 * lattice.side()))
        throw GeometryError("Green difference pole too far from the origin for this box");
    GreenDiff gd;
    gd.x = x;
    VertexField rhs(lattice);
    rhs[x] = 1.0;
    rhs[0] = -1.0;
    gd.field = solve_poisson_spectral(rhs);
    gd.gradient = forward_gradient(gd.field);
    return gd;
}

double gradient_energy(const GreenDiff& gd) { return dot(gd.gradient, gd.gradient); }

DecayProfile gradient_decay_profile(const GreenDiff& gd) {
    const Lattice& lat = gd.field.lattice();
    const int d = lat.dim();
    const double xn = lat.norm(gd.x);
    const double rmax = 0.25 * lat.side();

    // Unit-width bins in |y|.
    std::map<int, double> bins;
    DecayProfile p;
    for (std::size_t y = 0; y < lat.volume(); ++y) {
        const double r = lat.norm(y);
        double g2 = 0.0;
        for (int i = 0; i < d; ++i) g2 += gd.gradient(i, y) * gd.gradient(i, y);
        const double g = std::sqrt(g2);
        if (r <= 2.0 * xn) {
            const double shape = std::pow(1.0 + lat.distance(gd.x, y), 1.0 - d) + std::pow(1.0 + r, 1.0 - d);
            p.near_constant = std::max(p.near_constant, g / shape);
        }
        if (r > rmax) continue;
        auto& m = bins[static_cast<int>(std::lround(r))];
        m = std::max(m, g);
    }
    std::vector<double> lx, ly;
    for (const auto& [r, m] : bins) {
        p.radius.push_back(r);
        p.max_grad.push_back(m);
        if (r >= 2.0 * xn && m > 0.0) {
            lx.push_back(std::log(1.0 + r));
            ly.push_back(std::log(m));
        }
    }
    if (lx.size() >= 3) {
        const LineFit f = least_squares(lx, ly);
        p.far_exponent = f.slope;
        p.far_r2 = f.r2;
        p.pass = f.slope <= -d + 0.3;
    }
    return p;
}

PhiRepresentationReport representation_phi_check(const CorrectorBundle& bundle, const GreenDiff& gd, double tol) {
    if (!(bundle.phi.lattice() == gd.field.lattice())) throw ContractError("bundle and Green difference differ in box");
    PhiRepresentationReport r;
    r.lhs = bundle.phi[gd.x] - bundle.phi[0];
    r.rhs = dot(bundle.grad_phi, gd.gradient);
    const double scale = std::max(std::abs(r.lhs), std::abs(r.rhs));
    r.gap = scale > 0.0 ? std::abs(r.lhs - r.rhs) / scale : 0.0;
    r.threshold = 100.0 * tol;
    r.pass = r.gap <= r.threshold;
    return r;
}

}  // namespace rcm
