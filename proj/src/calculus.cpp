#include "rcm/calculus.hpp"

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>

#include "rcm/error.hpp"
#include "rcm/fourier.hpp"

namespace rcm {

VectorField forward_gradient(const VertexField& f) {
    const Lattice& lat = f.lattice();
    VectorField g(lat);
    for (int i = 0; i < lat.dim(); ++i)
        for (std::size_t x = 0; x < lat.volume(); ++x) g(i, x) = f[lat.forward(x, i)] - f[x];
    return g;
}

VectorField backward_gradient(const VertexField& f) {
    const Lattice& lat = f.lattice();
    VectorField g(lat);
    for (int i = 0; i < lat.dim(); ++i)
        for (std::size_t x = 0; x < lat.volume(); ++x) g(i, x) = f[x] - f[lat.backward(x, i)];
    return g;
}

VertexField backward_divergence(const VectorField& g) {
    const Lattice& lat = g.lattice();
    VertexField out(lat);
    for (int i = 0; i < lat.dim(); ++i)
        for (std::size_t x = 0; x < lat.volume(); ++x) out[x] += g(i, x) - g(i, lat.backward(x, i));
    return out;
}

VertexField laplacian(const VertexField& f) { return backward_divergence(forward_gradient(f)); }

double edge_average(const VertexField& f, const Edge& e) {
    return 0.5 * (f[e.vertex] + f[f.lattice().forward(e.vertex, e.dir)]);
}

VectorField multiply(const EdgeField& a, const VectorField& g) {
    if (a.size() != g.size()) throw ContractError("edge field size mismatch");
    VectorField out(g.lattice());
    for (std::size_t e = 0; e < g.size(); ++e) out[e] = a[e] * g[e];
    return out;
}

VertexField apply_operator(const Environment& env, const VertexField& u, std::optional<double> T) {
    const Lattice& lat = env.lattice();
    if (!(u.lattice() == lat)) throw ContractError("field and environment live on different boxes");
    VertexField out(lat);
    const double mass = T ? 1.0 / *T : 0.0;
    for (std::size_t x = 0; x < lat.volume(); ++x) out[x] = mass * u[x];
    for (int i = 0; i < lat.dim(); ++i) {
        for (std::size_t x = 0; x < lat.volume(); ++x) {
            const std::size_t y = lat.forward(x, i);
            const double flux = env.a(i, x) * (u[y] - u[x]);
            out[x] -= flux;
            out[y] += flux;
        }
    }
    return out;
}

std::size_t BallStencil::num_edges() const noexcept {
    std::size_t n = 0;
    for (const auto& e : edges) n += e.size();
    return n;
}

const BallStencil& ball_stencil(int dim, double R) {
    static std::mutex mutex;
    static std::map<std::pair<int, long>, std::unique_ptr<BallStencil>> cache;
    const long r2 = R < 0 ? -1 : static_cast<long>(std::floor(R * R + 1e-9));
    std::lock_guard lock(mutex);
    auto& slot = cache[{dim, r2}];
    if (slot) return *slot;

    auto st = std::make_unique<BallStencil>();
    st->dim = dim;
    st->radius = R;
    st->edges.resize(static_cast<std::size_t>(dim));
    const int m = r2 < 0 ? -1 : static_cast<int>(std::floor(std::sqrt(static_cast<double>(r2)) + 1e-9));
    auto inside = [&](const Coord& o) {
        long s = 0;
        for (int i = 0; i < dim; ++i) s += static_cast<long>(o[i]) * o[i];
        return s <= r2;
    };
    const int m1 = dim > 1 ? m : 0;
    const int m2 = dim > 2 ? m : 0;
    for (int c2 = -m2; c2 <= m2; ++c2)
        for (int c1 = -m1; c1 <= m1; ++c1)
            for (int c0 = -m; c0 <= m; ++c0) {
                const Coord o{c0, c1, c2};
                if (!inside(o)) continue;
                st->vertices.push_back(o);
                for (int i = 0; i < dim; ++i) {
                    Coord p = o;
                    ++p[i];
                    if (inside(p)) st->edges[i].push_back(o);
                }
            }
    slot = std::move(st);
    return *slot;
}

void check_ball_fits(const Lattice& lattice, double R) {
    if (!(2.0 * R < lattice.side()))
        throw GeometryError("ball of radius " + std::to_string(R) + " wraps around the box of side " +
                            std::to_string(lattice.side()));
}

Ball make_ball(const Lattice& lattice, std::size_t x, double R) {
    check_ball_fits(lattice, R);
    const BallStencil& st = ball_stencil(lattice.dim(), R);
    Ball B;
    B.center = x;
    B.radius = R;
    B.vertices.reserve(st.vertices.size());
    for (const Coord& o : st.vertices) B.vertices.push_back(lattice.translate(x, o));
    for (int i = 0; i < lattice.dim(); ++i)
        for (const Coord& o : st.edges[i]) B.edges.push_back(lattice.edge_index({lattice.translate(x, o), i}));
    return B;
}

double ball_average(const VertexField& f, const Ball& B) {
    double s = 0.0;
    for (std::size_t y : B.vertices) s += f[y];
    return s / static_cast<double>(B.vertices.size());
}

std::vector<double> ball_average(const VectorField& g, const Ball& B) {
    const int d = g.lattice().dim();
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < d; ++i) {
        for (std::size_t y : B.vertices) out[i] += g(i, y);
        out[i] /= static_cast<double>(B.vertices.size());
    }
    return out;
}

double edge_ball_average(const EdgeField& g, const Ball& B) {
    if (B.edges.empty()) throw GeometryError("edge ball is empty");
    double s = 0.0;
    for (std::size_t e : B.edges) s += g[e];
    return s / static_cast<double>(B.edges.size());
}

double ball_average(const VertexField& f, std::size_t x, double R) {
    return ball_average(f, make_ball(f.lattice(), x, R));
}

std::vector<double> ball_average(const VectorField& g, std::size_t x, double R) {
    return ball_average(g, make_ball(g.lattice(), x, R));
}

double edge_ball_average(const EdgeField& g, std::size_t x, double R) {
    return edge_ball_average(g, make_ball(g.lattice(), x, R));
}

namespace {

// Spectrum of the indicator of a set of offsets, conjugated so that
// multiplying by it turns a convolution into the correlation sum_o f(x + o).
void add_offset_mask(const Lattice& lat, const std::vector<Coord>& offsets, std::vector<std::complex<double>>& spec) {
    Fft& fft = fft_for(lat);
    std::vector<double> mask(lat.volume(), 0.0);
    for (const Coord& o : offsets) mask[lat.index(o)] += 1.0;
    std::vector<std::complex<double>> m;
    fft.forward(mask, m);
    spec.resize(m.size());
    for (std::size_t s = 0; s < m.size(); ++s) spec[s] = std::conj(m[s]);
}

}  // namespace

VertexField ball_sum_field(const VertexField& f, double R) {
    const Lattice& lat = f.lattice();
    check_ball_fits(lat, R);
    const BallStencil& st = ball_stencil(lat.dim(), R);
    Fft& fft = fft_for(lat);
    std::vector<std::complex<double>> F, M;
    fft.forward(f.values(), F);
    add_offset_mask(lat, st.vertices, M);
    for (std::size_t s = 0; s < F.size(); ++s) F[s] *= M[s];
    VertexField out(lat);
    fft.inverse(F, out.values());
    return out;
}

VertexField edge_ball_sum_field(const EdgeField& g, double R) {
    const Lattice& lat = g.lattice();
    check_ball_fits(lat, R);
    const BallStencil& st = ball_stencil(lat.dim(), R);
    Fft& fft = fft_for(lat);
    std::vector<std::complex<double>> acc(fft.spectrum_size(), 0.0), G, M;
    for (int i = 0; i < lat.dim(); ++i) {
        fft.forward(g.component(i), G);
        add_offset_mask(lat, st.edges[i], M);
        for (std::size_t s = 0; s < G.size(); ++s) acc[s] += G[s] * M[s];
    }
    VertexField out(lat);
    fft.inverse(acc, out.values());
    return out;
}

VertexField ball_mean_field(const VertexField& f, double R) {
    VertexField out = ball_sum_field(f, R);
    out *= 1.0 / static_cast<double>(ball_stencil(f.lattice().dim(), R).vertices.size());
    return out;
}

VertexField edge_ball_mean_field(const EdgeField& g, double R) {
    const std::size_t n = ball_stencil(g.lattice().dim(), R).num_edges();
    if (n == 0) throw GeometryError("edge ball is empty");
    VertexField out = edge_ball_sum_field(g, R);
    out *= 1.0 / static_cast<double>(n);
    return out;
}

double inhomogeneous_double_average(const VertexField& F, const VertexField& radii, const Ball& B) {
    const Lattice& lat = F.lattice();
    double outer = 0.0;
    for (std::size_t x : B.vertices) {
        const double r = radii[x];
        if (!std::isfinite(r)) throw ContractError("radius field is not finite on the ball");
        check_ball_fits(lat, r);
        const BallStencil& st = ball_stencil(lat.dim(), r);
        double inner = 0.0;
        for (const Coord& o : st.vertices) inner += F[lat.translate(x, o)];
        outer += inner / static_cast<double>(st.vertices.size());
    }
    return outer / static_cast<double>(B.vertices.size());
}

}  // namespace rcm
