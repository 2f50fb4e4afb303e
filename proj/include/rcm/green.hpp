#pragma once

#include <vector>

#include "rcm/corrector.hpp"
#include "rcm/fields.hpp"
#include "rcm/lattice.hpp"

namespace rcm {

/// G(., x) - G(., 0) on the torus, mean-zero gauge.
struct GreenDiff {
    std::size_t x = 0;
    VertexField field;
    VectorField gradient;
};

/// Spectral solve of -laplacian G = delta_x - delta_0. Requires d >= 2, x != 0 and 2|x| < L/2.
GreenDiff green_difference(const Lattice& lattice, std::size_t x);

/// sum_e |grad G_diff|^2.
double gradient_energy(const GreenDiff& gd);

struct DecayProfile {
    std::vector<double> radius;     // bin centre |y|
    std::vector<double> max_grad;   // max |grad G_diff(y)| over the bin
    double far_exponent = 0.0;      // slope of log max_grad against log(1 + |y|) for |y| >= 2|x|
    double far_r2 = 0.0;
    double near_constant = 0.0;     // max |grad G_diff| / ((1+|x-y|)^{1-d} + (1+|y|)^{1-d}) for |y| <= 2|x|
    bool pass = false;              // far_exponent <= -d + 0.3
};

/// Bins |grad G_diff(y)| by |y| out to L/4.
DecayProfile gradient_decay_profile(const GreenDiff& gd);

struct PhiRepresentationReport {
    double lhs = 0.0;   // phi(x) - phi(0)
    double rhs = 0.0;   // sum_e grad phi . grad G_diff
    double gap = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

PhiRepresentationReport representation_phi_check(const CorrectorBundle& bundle, const GreenDiff& gd, double tol);

}  // namespace rcm
