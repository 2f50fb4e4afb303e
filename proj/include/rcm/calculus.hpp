#pragma once

#include <optional>
#include <vector>

#include "rcm/env.hpp"
#include "rcm/fields.hpp"

namespace rcm {

/// (grad f)_i(x) = f(x + e_i) - f(x).
VectorField forward_gradient(const VertexField& f);

/// Component i is f(x) - f(x - e_i), the one-sided derivative written grad*_i.
VectorField backward_gradient(const VertexField& f);

/// (div* g)(x) = sum_i g_i(x) - g_i(x - e_i). Adjoint: <grad f, g> = -<f, div* g>.
VertexField backward_divergence(const VectorField& g);

/// div* grad f. Negative semidefinite.
VertexField laplacian(const VertexField& f);

/// Mean of f at the two endpoints of e.
double edge_average(const VertexField& f, const Edge& e);

/// Edge-wise product a_e g_e.
VectorField multiply(const EdgeField& a, const VectorField& g);

/// T^{-1} u - div*(A grad u). Symmetric positive semidefinite; equals -laplacian(u)
/// when A = Id and no massive term is given.
VertexField apply_operator(const Environment& env, const VertexField& u, std::optional<double> T = std::nullopt);

/// Offsets o with |o| <= R (vertex ball), and per direction the offsets o with
/// both o and o + e_i in the ball (edge ball). Cached per (d, floor(R^2)).
struct BallStencil {
    int dim = 0;
    double radius = 0.0;
    std::vector<Coord> vertices;
    std::vector<std::vector<Coord>> edges;
    std::size_t num_edges() const noexcept;
};

const BallStencil& ball_stencil(int dim, double R);

/// B_R(x) and its edge ball under periodic wrap. Requires 2R < L.
struct Ball {
    std::size_t center = 0;
    double radius = 0.0;
    std::vector<std::size_t> vertices;
    std::vector<std::size_t> edges;  // edge indices dir * L^d + vertex
};

Ball make_ball(const Lattice& lattice, std::size_t x, double R);

/// Throws GeometryError unless 2R < L.
void check_ball_fits(const Lattice& lattice, double R);

double ball_average(const VertexField& f, const Ball& B);
/// Per-component vertex-ball averages of a vector field.
std::vector<double> ball_average(const VectorField& g, const Ball& B);
/// Average over the edges of the edge ball.
double edge_ball_average(const EdgeField& g, const Ball& B);

double ball_average(const VertexField& f, std::size_t x, double R);
std::vector<double> ball_average(const VectorField& g, std::size_t x, double R);
double edge_ball_average(const EdgeField& g, std::size_t x, double R);

/// S(x) = sum_{y in B_R(x)} f(y) for every x at once (FFT correlation).
VertexField ball_sum_field(const VertexField& f, double R);
/// S(x) = sum over edges of the edge ball around x, for every x at once.
VertexField edge_ball_sum_field(const EdgeField& g, double R);
/// Same as the sums divided by the ball (edge-ball) cardinality.
VertexField ball_mean_field(const VertexField& f, double R);
VertexField edge_ball_mean_field(const EdgeField& g, double R);

/// Mean over x in B of the mean of F over B_{r(x)}(x).
double inhomogeneous_double_average(const VertexField& F, const VertexField& radii, const Ball& B);

}  // namespace rcm
