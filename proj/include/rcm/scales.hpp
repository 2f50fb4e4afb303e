#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rcm/corrector.hpp"
#include "rcm/env.hpp"
#include "rcm/fields.hpp"

namespace rcm {

enum class ScaleKind { Diamond, Spade };

struct ScaleField {
    ScaleKind kind = ScaleKind::Diamond;
    VertexField radii;               // diamond: real-valued 1/8-Lipschitz envelope; spade: dyadic
    VertexField raw;                 // diamond: dyadic max(r+, r-) before the envelope; spade: same as radii
    std::vector<unsigned char> censored;
    double C = 0.0;                  // diamond: post-check constant; spade: C_spade
    double m_plus = 0.0;             // diamond: target E[a^{d+1}]
    double m_minus = 0.0;            // diamond: target E[a^{-(d+1)}]
    std::vector<std::string> warnings;

    double censored_fraction() const;
};

/// 2 * 18^d.
double diamond_constant(int d);

/// Per vertex, the smallest dyadic r >= 2 with |avg_{edge ball R} a^{+-(d+1)} - m+-| <= m+-/2
/// for all dyadic R in [r, L/4], then the inf-convolution min_y r(y) + |x - y|/8.
/// Vertices with no admissible radius are censored at L/4. Targets default to the
/// law's moments (target_moment).
ScaleField compute_r_diamond(const Environment& env, double C, std::optional<double> m_plus = std::nullopt,
                             std::optional<double> m_minus = std::nullopt);

/// Dyadic radii up to L/4 starting at 2.
std::vector<double> dyadic_radii(double from, double to);

/// Exact periodic inf-convolution min_y f(y) + slope * |x - y| for f taking few distinct values.
VertexField lipschitz_envelope(const VertexField& f, double slope);

struct DiamondPostCheck {
    double worst_plus = 0.0;    // max over (x, R >= r(x)) of avg a^{d+1} / m+
    double worst_minus = 0.0;   // same for a^{-(d+1)}
    double max_lipschitz = 0.0; // max over neighbours of |r(x) - r(y)|
    std::size_t checked = 0;
    bool pass = false;          // both worst ratios <= C
};

DiamondPostCheck post_check_r_diamond(const Environment& env, const ScaleField& r);

/// Threshold max_i avg(a |grad phi_i|^2) / avg(a) over the box.
double spade_threshold(const Environment& env, const std::vector<CorrectorBundle>& bundles);

/// Smallest dyadic r >= r_diamond(x) such that for every dyadic R in [r, L/8] and every i,
/// avg_{edge ball R} a |grad phi_i|^2 <= C_spade avg_{edge ball 2R} a. Censored at L/8.
/// Throws ConfigError (message carries the measured threshold) if C_spade is not above it.
ScaleField compute_r_spade(const Environment& env, const std::vector<CorrectorBundle>& bundles, double C_spade,
                           const ScaleField& r_diamond);

/// Ball grid used by the maximal function and the Gehring probe: balls of every
/// dyadic radius 1 .. rmax centred on the stride-2 subgrid.
std::vector<double> ball_grid_radii(int side, double rmax);

/// M_p g(x) = sup over grid balls containing x (and the singleton {x}) of (avg_B g^p)^{1/p}.
VertexField maximal_function(const VertexField& g, double p = 1.0);

struct WeakTypeReport {
    std::vector<double> t;
    std::vector<double> ratio;   // t |{M g >= t}| / sum_{g >= t/2} g
    double c_low = 0.0;
    double c_high = 0.0;
};

WeakTypeReport weak_type_sweep(const VertexField& g, const std::vector<double>& t);

/// Generic inequality probe record.
struct ProbeReport {
    std::string probe;
    std::map<std::string, double> params;
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool pass = false;
};

/// Frozen Caccioppoli constant (4 x the largest ratio seen on constant environments).
double caccioppoli_constant(int d);
/// Recomputes the calibration: max ratio over Green differences on constant environments.
double calibrate_caccioppoli(int d);

/// lhs = avg_{edge ball r} a |grad u|^2,
/// rhs = r^{-2} avg_{edge ball 2r} a (u - c)_e^2 + avg_{edge ball 2r} a^{-1} f^2, c the a-weighted mean.
ProbeReport check_caccioppoli(const Environment& env, const VertexField& u, const VectorField& f, std::size_t x,
                              double r, std::optional<double> C = std::nullopt);

/// u with -div* A grad u = delta_p - delta_{p + e_1}, p the antipode of `center`.
VertexField harmonic_probe(const Environment& env, std::size_t center, double tol = 1e-10);
/// The f with div* f = delta_p - delta_{p + e_1} for the same p (unit on one edge).
VectorField harmonic_probe_forcing(const Lattice& lattice, std::size_t center);

struct HoleFillingReport {
    std::vector<double> r;
    std::vector<double> energy;   // sum over the edge ball r of a |grad u|^2
    double alpha = 0.0;           // log-log slope of energy against r
    double beta_prime = 0.0;      // d / alpha
    bool pass = false;            // alpha > 0
};

/// Dyadic sweep r = max(2, r_diamond(x)) .. R. Needs at least two radii and 2R < L.
HoleFillingReport check_hole_filling(const Environment& env, const VertexField& u, std::size_t x, double R,
                                     const ScaleField& r_diamond);

struct GehringReport {
    bool applicable = false;
    double p = 0.0;
    double C_in = 0.0;            // smallest C with the reverse Holder input on the grid
    std::vector<double> q;
    std::vector<double> K;        // max over grid balls of avg_B U^q / (avg_2B V^q + (avg_2B U)^q)
    double q_bar = 0.0;           // largest q on the grid (contiguous from p) with K(q) <= 1 + C
    bool censored = false;        // every grid q passed; q_bar is a lower bound
};

/// Scans q = p (1 + n q_step) up to q_max_factor p on the ball grid (radii 1 .. L/8).
/// C defaults to the measured C_in.
GehringReport gehring_probe(const VertexField& U, const VertexField& V, double p, std::optional<double> C = std::nullopt,
                            double q_step = 0.02, double q_max_factor = 4.0);

/// s = d(d+1)/(d^2+d+2), or 3/4 in d = 1.
double meyers_s(int d);

struct MeyersReport {
    double s = 0.0;
    GehringReport gehring;
    double beta_hat = 0.0;        // s * q_bar
    bool pass = false;            // beta_hat > 1
};

/// U = (avg_{B_diamond(x)} A grad u . grad u)^s, V = (avg_{B_diamond(x)} A^{-1} f . f)^s, p = 1/s.
MeyersReport meyers_pipeline(const Environment& env, const VertexField& u, const VectorField& f,
                             const ScaleField& r_diamond);

/// avg over B_{r(x)}(x) of F for every x (r(x) from radii, real-valued).
VertexField inhomogeneous_ball_mean(const VertexField& F, const VertexField& radii);

/// Vertex energy density sum_i a_i(x) |grad_i u(x)|^2.
VertexField energy_density(const Environment& env, const VertexField& u);

}  // namespace rcm
