#pragma once

#include <rcm/env.hpp>
#include <rcm/fields.hpp>
#include <rcm/rng.hpp>

#include <cmath>
#include <vector>

namespace testing {

inline rcm::VertexField random_vertex_field(const rcm::Lattice& lat, std::uint64_t seed) {
    rcm::CounterRng rng(seed, rcm::StreamTag::Probe, 7, 0);
    rcm::VertexField f(lat);
    for (auto& v : f.values()) v = 2.0 * rng.uniform() - 1.0;
    return f;
}

inline rcm::VectorField random_vector_field(const rcm::Lattice& lat, std::uint64_t seed) {
    rcm::CounterRng rng(seed, rcm::StreamTag::Probe, 8, 0);
    rcm::VectorField g(lat);
    for (auto& v : g.values()) v = 2.0 * rng.uniform() - 1.0;
    return g;
}

inline rcm::Environment make_env(int d, int L, rcm::Distribution dist, std::uint64_t seed) {
    rcm::EnvironmentSpec spec;
    spec.dim = d;
    spec.side = L;
    spec.distribution = dist;
    spec.seed = seed;
    return rcm::sample_environment(spec);
}

// Dense Gaussian elimination with partial pivoting.
inline std::vector<double> dense_solve(std::vector<std::vector<double>> M, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(M[r][c]) > std::abs(M[piv][c])) piv = r;
        std::swap(M[c], M[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = M[r][c] / M[c][c];
            for (std::size_t k = c; k < n; ++k) M[r][k] -= f * M[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t c = n; c-- > 0;) {
        double s = b[c];
        for (std::size_t k = c + 1; k < n; ++k) s -= M[c][k] * x[k];
        x[c] = s / M[c][c];
    }
    return x;
}

// Operator matrix of -div* A grad built edge by edge from the definition.
inline std::vector<std::vector<double>> dense_operator(const rcm::Environment& env) {
    const auto& lat = env.lattice();
    const std::size_t n = lat.volume();
    std::vector<std::vector<double>> M(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < lat.dim(); ++i)
        for (std::size_t x = 0; x < n; ++x) {
            auto c = lat.coords(x);
            c[i] += 1;
            const std::size_t y = lat.index(c);
            const double a = env.a(i, x);
            M[x][x] += a;
            M[y][y] += a;
            M[x][y] -= a;
            M[y][x] -= a;
        }
    return M;
}

// d = 1, bernoulli(p, lo, hi) on the ring of L edges: exact E[(phi(x+n) - phi(x))^2].
// phi(x+n) - phi(x) = H B_n - n with B_n the sum of 1/a over n consecutive edges and
// H = L / sum_all 1/a; enumerate the hi-counts inside and outside the window.
inline double bernoulli_increment_moment(int L, int n, double p, double lo, double hi) {
    auto logpmf = [&](int m, int k) {
        return std::lgamma(m + 1.0) - std::lgamma(k + 1.0) - std::lgamma(m - k + 1.0) + k * std::log(p) +
               (m - k) * std::log1p(-p);
    };
    double acc = 0.0;
    for (int j = 0; j <= n; ++j)
        for (int k = 0; k <= L - n; ++k) {
            const double Bw = j / hi + (n - j) / lo;
            const double Bo = k / hi + (L - n - k) / lo;
            const double v = L * Bw / (Bw + Bo) - n;
            acc += std::exp(logpmf(n, j) + logpmf(L - n, k)) * v * v;
        }
    return acc;
}

}  // namespace testing
