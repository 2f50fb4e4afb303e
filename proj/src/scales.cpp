#include "rcm/scales.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rcm/calculus.hpp"
#include "rcm/error.hpp"
#include "rcm/solver.hpp"
#include "rcm/stats.hpp"

namespace rcm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

EdgeField edge_power(const Environment& env, double k) {
    EdgeField out(env.lattice());
    for (std::size_t e = 0; e < out.size(); ++e) out[e] = std::pow(env.a(e), k);
    return out;
}

double dyadic_ceil(double r) {
    double v = 2.0;
    while (v < r - 1e-12) v *= 2.0;
    return v;
}

// Lower envelope of parabolas h_k + (i - p_k)^2 evaluated at i = 0 .. L-1, with
// every site repeated at p - L, p, p + L so the distance is the periodic one.
void distance_transform_line(const std::vector<double>& h, std::vector<double>& out) {
    const int L = static_cast<int>(h.size());
    std::vector<int> pos;
    std::vector<double> val;
    for (int c = -1; c <= 1; ++c)
        for (int j = 0; j < L; ++j)
            if (std::isfinite(h[j])) {
                pos.push_back(j + c * L);
                val.push_back(h[j]);
            }
    out.assign(L, kInf);
    if (pos.empty()) return;
    std::vector<int> v;
    std::vector<double> z;
    auto meet = [&](int a, int b) {
        return ((val[b] + double(pos[b]) * pos[b]) - (val[a] + double(pos[a]) * pos[a])) / (2.0 * (pos[b] - pos[a]));
    };
    for (int k = 0; k < static_cast<int>(pos.size()); ++k) {
        while (!v.empty()) {
            const double s = meet(v.back(), k);
            if (s <= z[v.size() - 1]) {
                v.pop_back();
                z.pop_back();
            } else {
                break;
            }
        }
        if (v.empty()) {
            v.push_back(k);
            z = {-kInf, kInf};
        } else {
            z.back() = meet(v.back(), k);
            v.push_back(k);
            z.push_back(kInf);
        }
    }
    std::size_t m = 0;
    for (int i = 0; i < L; ++i) {
        while (z[m + 1] < i) ++m;
        const double dx = i - pos[v[m]];
        out[i] = dx * dx + val[v[m]];
    }
}

// Periodic squared Euclidean distance to the set {mask != 0}, separable over axes.
std::vector<double> squared_distance(const Lattice& lat, const std::vector<unsigned char>& mask) {
    const int L = lat.side();
    const std::size_t n = lat.volume();
    std::vector<double> d2(n);
    for (std::size_t x = 0; x < n; ++x) d2[x] = mask[x] ? 0.0 : kInf;
    std::vector<double> line(L), out(L);
    std::size_t stride = 1;
    for (int axis = 0; axis < lat.dim(); ++axis) {
        for (std::size_t base = 0; base < n; ++base) {
            if ((base / stride) % L != 0) continue;
            for (int k = 0; k < L; ++k) line[k] = d2[base + k * stride];
            distance_transform_line(line, out);
            for (int k = 0; k < L; ++k) d2[base + k * stride] = out[k];
        }
        stride *= static_cast<std::size_t>(L);
    }
    return d2;
}

}  // namespace

double ScaleField::censored_fraction() const {
    if (censored.empty()) return 0.0;
    std::size_t c = 0;
    for (auto v : censored) c += v;
    return static_cast<double>(c) / static_cast<double>(censored.size());
}

double diamond_constant(int d) { return 2.0 * std::pow(18.0, d); }

std::vector<double> dyadic_radii(double from, double to) {
    std::vector<double> out;
    for (double r = from; r <= to + 1e-12; r *= 2.0) out.push_back(r);
    return out;
}

VertexField lipschitz_envelope(const VertexField& f, double slope) {
    const Lattice& lat = f.lattice();
    std::vector<double> levels(f.values().begin(), f.values().end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    VertexField out(lat, kInf);
    std::vector<unsigned char> mask(lat.volume());
    for (double v : levels) {
        for (std::size_t x = 0; x < lat.volume(); ++x) mask[x] = f[x] == v;
        const auto d2 = squared_distance(lat, mask);
        for (std::size_t x = 0; x < lat.volume(); ++x) out[x] = std::min(out[x], v + slope * std::sqrt(d2[x]));
    }
    return out;
}

ScaleField compute_r_diamond(const Environment& env, double C, std::optional<double> m_plus,
                             std::optional<double> m_minus) {
    const Lattice& lat = env.lattice();
    const int d = lat.dim();
    const double k = d + 1.0;
    const auto radii = dyadic_radii(2.0, 0.25 * lat.side());
    if (radii.empty()) throw GeometryError("box too small for r_diamond (needs L >= 8)");

    ScaleField s;
    s.kind = ScaleKind::Diamond;
    s.C = C;
    s.m_plus = m_plus.value_or(target_moment(env.spec(), k));
    s.m_minus = m_minus.value_or(target_moment(env.spec(), -k));

    const std::size_t n = lat.volume();
    const double cap = radii.back();
    std::vector<double> r_pm[2];
    const double m[2] = {s.m_plus, s.m_minus};
    for (int sign = 0; sign < 2; ++sign) {
        const EdgeField pw = edge_power(env, sign == 0 ? k : -k);
        std::vector<double>& r = r_pm[sign];
        r.assign(n, kInf);
        std::vector<unsigned char> ok(n, 1);
        for (auto it = radii.rbegin(); it != radii.rend(); ++it) {
            const VertexField avg = edge_ball_mean_field(pw, *it);
            for (std::size_t x = 0; x < n; ++x) {
                ok[x] = ok[x] && std::abs(avg[x] - m[sign]) <= 0.5 * m[sign];
                if (ok[x]) r[x] = *it;
            }
        }
    }
    s.raw = VertexField(lat);
    s.censored.assign(n, 0);
    for (std::size_t x = 0; x < n; ++x) {
        const double r = std::max(r_pm[0][x], r_pm[1][x]);
        s.censored[x] = !std::isfinite(r);
        s.raw[x] = std::isfinite(r) ? r : cap;
    }
    s.radii = lipschitz_envelope(s.raw, 1.0 / 8.0);
    if (s.censored_fraction() == 1.0) s.warnings.push_back("every vertex censored at L/4");
    else if (s.censored_fraction() > 0.0) s.warnings.push_back("some vertices censored at L/4");
    return s;
}

DiamondPostCheck post_check_r_diamond(const Environment& env, const ScaleField& r) {
    const Lattice& lat = env.lattice();
    const double k = lat.dim() + 1.0;
    DiamondPostCheck pc;
    const EdgeField ap = edge_power(env, k), am = edge_power(env, -k);
    for (double R : dyadic_radii(2.0, 0.25 * lat.side())) {
        const VertexField vp = edge_ball_mean_field(ap, R), vm = edge_ball_mean_field(am, R);
        for (std::size_t x = 0; x < lat.volume(); ++x) {
            if (R < r.radii[x] - 1e-12) continue;
            pc.worst_plus = std::max(pc.worst_plus, vp[x] / r.m_plus);
            pc.worst_minus = std::max(pc.worst_minus, vm[x] / r.m_minus);
            ++pc.checked;
        }
    }
    for (std::size_t x = 0; x < lat.volume(); ++x)
        for (int i = 0; i < lat.dim(); ++i)
            pc.max_lipschitz = std::max(pc.max_lipschitz, std::abs(r.radii[x] - r.radii[lat.forward(x, i)]));
    pc.pass = pc.worst_plus <= r.C && pc.worst_minus <= r.C;
    return pc;
}

double spade_threshold(const Environment& env, const std::vector<CorrectorBundle>& bundles) {
    double asum = 0.0;
    for (double a : env.conductances().values()) asum += a;
    double worst = 0.0;
    for (const auto& b : bundles) {
        double e = 0.0;
        for (std::size_t q = 0; q < b.grad_phi.size(); ++q) e += env.a(q) * b.grad_phi[q] * b.grad_phi[q];
        worst = std::max(worst, e / asum);
    }
    return worst;
}

ScaleField compute_r_spade(const Environment& env, const std::vector<CorrectorBundle>& bundles, double C_spade,
                           const ScaleField& r_diamond) {
    const Lattice& lat = env.lattice();
    if (bundles.empty()) throw ContractError("r_spade needs corrector bundles");
    const double threshold = spade_threshold(env, bundles);
    if (!(C_spade > threshold))
        throw ConfigError("C_spade = " + std::to_string(C_spade) + " is not above the finiteness threshold " +
                          std::to_string(threshold));
    const auto radii = dyadic_radii(2.0, 0.125 * lat.side());
    if (radii.empty()) throw GeometryError("box too small for r_spade (needs L >= 16)");
    const std::size_t n = lat.volume();
    const double cap = radii.back();

    std::vector<double> top(n, kInf);
    std::vector<unsigned char> ok(n, 1);
    for (auto it = radii.rbegin(); it != radii.rend(); ++it) {
        const VertexField amean = edge_ball_mean_field(env.conductances(), 2.0 * *it);
        for (const auto& b : bundles) {
            EdgeField e(lat);
            for (std::size_t q = 0; q < e.size(); ++q) e[q] = env.a(q) * b.grad_phi[q] * b.grad_phi[q];
            const VertexField emean = edge_ball_mean_field(e, *it);
            for (std::size_t x = 0; x < n; ++x) ok[x] = ok[x] && emean[x] <= C_spade * amean[x];
        }
        for (std::size_t x = 0; x < n; ++x)
            if (ok[x]) top[x] = *it;
    }
    ScaleField s;
    s.kind = ScaleKind::Spade;
    s.C = C_spade;
    s.radii = VertexField(lat);
    s.censored.assign(n, 0);
    for (std::size_t x = 0; x < n; ++x) {
        const double start = dyadic_ceil(std::max(2.0, r_diamond.radii[x]));
        if (start > cap || !std::isfinite(top[x])) {
            s.censored[x] = 1;
            s.radii[x] = std::max(cap, start);  // keeps r_spade >= r_diamond
        } else {
            s.radii[x] = std::max(start, top[x]);
        }
    }
    s.raw = s.radii;
    if (s.censored_fraction() > 0.0) s.warnings.push_back("some vertices censored at L/8");
    return s;
}

std::vector<double> ball_grid_radii(int side, double rmax) {
    std::vector<double> out;
    for (double r = 1.0; r <= rmax + 1e-12 && 2.0 * r < side; r *= 2.0) out.push_back(r);
    return out;
}

namespace {

// Subgrid centres with every coordinate even.
std::vector<std::size_t> stride2_centres(const Lattice& lat) {
    std::vector<std::size_t> out;
    for (std::size_t x = 0; x < lat.volume(); ++x) {
        const Coord c = lat.coords(x);
        bool even = true;
        for (int i = 0; i < lat.dim(); ++i) even = even && c[i] % 2 == 0;
        if (even) out.push_back(x);
    }
    return out;
}

VertexField power(const VertexField& f, double p) {
    VertexField out(f.lattice());
    for (std::size_t x = 0; x < f.size(); ++x) out[x] = std::pow(f[x], p);
    return out;
}

}  // namespace

VertexField maximal_function(const VertexField& g, double p) {
    const Lattice& lat = g.lattice();
    if (!(p >= 1.0)) throw ContractError("maximal function needs p >= 1");
    for (double v : g.values())
        if (v < 0.0) throw ContractError("maximal function needs a non-negative field");
    VertexField M = g;
    const VertexField gp = power(g, p);
    const auto centres = stride2_centres(lat);
    for (double R : ball_grid_radii(lat.side(), 0.25 * lat.side())) {
        const VertexField avg = ball_mean_field(gp, R);
        const BallStencil& st = ball_stencil(lat.dim(), R);
        for (std::size_t c : centres) {
            const double v = std::pow(std::max(avg[c], 0.0), 1.0 / p);
            for (const Coord& o : st.vertices) {
                const std::size_t y = lat.translate(c, o);
                M[y] = std::max(M[y], v);
            }
        }
    }
    return M;
}

WeakTypeReport weak_type_sweep(const VertexField& g, const std::vector<double>& t) {
    const VertexField M = maximal_function(g, 1.0);
    WeakTypeReport r;
    r.c_low = kInf;
    r.c_high = 0.0;
    for (double tv : t) {
        double level = 0.0, mass = 0.0;
        for (std::size_t x = 0; x < g.size(); ++x) {
            level += M[x] >= tv;
            if (g[x] >= 0.5 * tv) mass += g[x];
        }
        if (mass <= 0.0) continue;
        const double q = tv * level / mass;
        r.t.push_back(tv);
        r.ratio.push_back(q);
        r.c_low = std::min(r.c_low, q);
        r.c_high = std::max(r.c_high, q);
    }
    return r;
}

double caccioppoli_constant(int d) {
    // 4 x calibrate_caccioppoli(d), frozen.
    static constexpr double frozen[4] = {0.0, 3.2, 3.2, 3.63};
    if (d < 1 || d > 3) throw ContractError("dimension out of range");
    return frozen[d];
}

ProbeReport check_caccioppoli(const Environment& env, const VertexField& u, const VectorField& f, std::size_t x,
                              double r, std::optional<double> C) {
    const Lattice& lat = env.lattice();
    if (!(4.0 * r < lat.side())) throw GeometryError("Caccioppoli probe needs 4r < L");
    const Ball Br = make_ball(lat, x, r);
    const Ball B2 = make_ball(lat, x, 2.0 * r);
    const VectorField gu = forward_gradient(u);

    ProbeReport rep;
    rep.probe = "caccioppoli";
    rep.params = {{"r", r}, {"x", static_cast<double>(x)}};
    for (std::size_t e : Br.edges) rep.lhs += env.a(e) * gu[e] * gu[e];
    rep.lhs /= static_cast<double>(Br.edges.size());

    double wsum = 0.0, wu = 0.0;
    std::vector<double> ue(B2.edges.size());
    for (std::size_t k = 0; k < B2.edges.size(); ++k) {
        ue[k] = edge_average(u, lat.edge_at(B2.edges[k]));
        wsum += env.a(B2.edges[k]);
        wu += env.a(B2.edges[k]) * ue[k];
    }
    const double c = wu / wsum;
    double osc = 0.0, force = 0.0;
    for (std::size_t k = 0; k < B2.edges.size(); ++k) {
        const double a = env.a(B2.edges[k]);
        osc += a * (ue[k] - c) * (ue[k] - c);
        force += f[B2.edges[k]] * f[B2.edges[k]] / a;
    }
    const double m = static_cast<double>(B2.edges.size());
    rep.rhs = osc / (m * r * r) + force / m;
    rep.ratio = rep.rhs > 0.0 ? rep.lhs / rep.rhs : (rep.lhs > 0.0 ? kInf : 0.0);
    const double bound = C.value_or(caccioppoli_constant(lat.dim()));
    rep.params["C"] = bound;
    rep.pass = rep.ratio <= bound;
    return rep;
}

double calibrate_caccioppoli(int d) {
    const int L = d == 1 ? 256 : (d == 2 ? 64 : 32);
    EnvironmentSpec spec;
    spec.dim = d;
    spec.side = L;
    const Environment env = sample_environment(spec);
    const Lattice& lat = env.lattice();
    const VectorField f(lat);
    double worst = 0.0;
    for (int pole : {1, 2, 4}) {
        Coord cx{0, 0, 0};
        cx[0] = pole;
        const std::size_t px = lat.index(cx);
        VertexField rhs(lat);
        rhs[px] = 1.0;
        rhs[0] = -1.0;
        const VertexField G = solve_poisson_spectral(rhs);
        for (double r = 1.0; 4.0 * r < L; r *= 2.0)
            for (std::size_t z = 0; z < lat.volume(); z += 7) {
                if (lat.distance(z, 0) <= 2.0 * r + 1.0 || lat.distance(z, px) <= 2.0 * r + 1.0) continue;
                worst = std::max(worst, check_caccioppoli(env, G, f, z, r, kInf).ratio);
            }
    }
    return worst;
}

namespace {

std::size_t antipode(const Lattice& lat, std::size_t center) {
    Coord c = lat.coords(center);
    for (int i = 0; i < lat.dim(); ++i) c[i] = (c[i] + lat.side() / 2) % lat.side();
    return lat.index(c);
}

}  // namespace

VectorField harmonic_probe_forcing(const Lattice& lattice, std::size_t center) {
    VectorField f(lattice);
    f(0, antipode(lattice, center)) = 1.0;
    return f;
}

VertexField harmonic_probe(const Environment& env, std::size_t center, double tol) {
    const Lattice& lat = env.lattice();
    const std::size_t p = antipode(lat, center);
    VertexField rhs(lat);
    rhs[p] = 1.0;
    rhs[lat.forward(p, 0)] = -1.0;
    SolveOptions opt;
    opt.tol = tol;
    return solve_weighted(env, rhs, opt).first;
}

HoleFillingReport check_hole_filling(const Environment& env, const VertexField& u, std::size_t x, double R,
                                     const ScaleField& r_diamond) {
    const Lattice& lat = env.lattice();
    check_ball_fits(lat, R);
    const VectorField gu = forward_gradient(u);
    HoleFillingReport rep;
    const double r0 = dyadic_ceil(std::max(2.0, r_diamond.radii[x]));
    for (double r = r0; r <= R + 1e-12; r *= 2.0) {
        const Ball B = make_ball(lat, x, r);
        double e = 0.0;
        for (std::size_t q : B.edges) e += env.a(q) * gu[q] * gu[q];
        rep.r.push_back(r);
        rep.energy.push_back(e);
    }
    if (rep.r.size() < 2) throw GeometryError("hole-filling sweep needs at least two dyadic radii in [r_diamond, R]");
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < rep.r.size(); ++k) {
        lx.push_back(std::log(rep.r[k]));
        ly.push_back(std::log(rep.energy[k]));
    }
    rep.alpha = least_squares(lx, ly).slope;
    rep.beta_prime = rep.alpha > 0.0 ? lat.dim() / rep.alpha : kInf;
    rep.pass = rep.alpha > 0.0;
    return rep;
}

namespace {

// Direct ball means at the given centres; exact and non-negative for non-negative F.
std::vector<double> ball_means_at(const VertexField& F, const std::vector<std::size_t>& centres, double R) {
    const Lattice& lat = F.lattice();
    const BallStencil& st = ball_stencil(lat.dim(), R);
    std::vector<double> out(centres.size());
    for (std::size_t k = 0; k < centres.size(); ++k) {
        double s = 0.0;
        for (const Coord& o : st.vertices) s += F[lat.translate(centres[k], o)];
        out[k] = s / static_cast<double>(st.vertices.size());
    }
    return out;
}

}  // namespace

GehringReport gehring_probe(const VertexField& U, const VertexField& V, double p, std::optional<double> C,
                            double q_step, double q_max_factor) {
    const Lattice& lat = U.lattice();
    for (std::size_t x = 0; x < U.size(); ++x)
        if (U[x] < 0.0 || V[x] < 0.0) throw ContractError("Gehring probe needs non-negative U and V");
    const auto radii = ball_grid_radii(lat.side(), 0.125 * lat.side());
    if (radii.empty()) throw GeometryError("box too small for the Gehring ball grid");
    const auto centres = stride2_centres(lat);

    std::vector<std::vector<double>> Umean2;
    for (double R : radii) Umean2.push_back(ball_means_at(U, centres, 2.0 * R));

    GehringReport rep;
    rep.p = p;
    double cin = 0.0;
    bool finite = true;
    {
        const VertexField Up = power(U, p), Vp = power(V, p);
        for (std::size_t k = 0; k < radii.size(); ++k) {
            const auto a = ball_means_at(Up, centres, radii[k]), b = ball_means_at(Vp, centres, 2.0 * radii[k]);
            for (std::size_t c = 0; c < centres.size(); ++c) {
                const double excess = a[c] - b[c];
                if (excess <= 0.0) continue;
                if (Umean2[k][c] <= 0.0) {
                    finite = false;
                    continue;
                }
                cin = std::max(cin, excess / std::pow(Umean2[k][c], p));
            }
        }
    }
    rep.C_in = finite ? cin : kInf;
    const double bound = C.value_or(rep.C_in);
    rep.applicable = finite && rep.C_in <= bound;
    if (!rep.applicable) return rep;

    bool contiguous = true;
    const int steps = static_cast<int>(std::floor((q_max_factor - 1.0) / q_step + 1e-9));
    for (int n = 0; n <= steps; ++n) {
        const double q = p * (1.0 + n * q_step);
        const VertexField Uq = power(U, q), Vq = power(V, q);
        double K = 0.0;
        for (std::size_t k = 0; k < radii.size(); ++k) {
            const auto a = ball_means_at(Uq, centres, radii[k]), b = ball_means_at(Vq, centres, 2.0 * radii[k]);
            for (std::size_t c = 0; c < centres.size(); ++c) {
                const double den = b[c] + std::pow(Umean2[k][c], q);
                if (den > 0.0) K = std::max(K, a[c] / den);
                else if (a[c] > 0.0) K = kInf;
            }
        }
        rep.q.push_back(q);
        rep.K.push_back(K);
        if (contiguous && K <= 1.0 + bound) rep.q_bar = q;
        else contiguous = false;
    }
    rep.censored = contiguous;
    return rep;
}

double meyers_s(int d) {
    if (d == 1) return 0.75;
    return static_cast<double>(d * (d + 1)) / static_cast<double>(d * d + d + 2);
}

VertexField inhomogeneous_ball_mean(const VertexField& F, const VertexField& radii) {
    const Lattice& lat = F.lattice();
    VertexField out(lat);
    for (std::size_t x = 0; x < lat.volume(); ++x) {
        if (!std::isfinite(radii[x])) throw ContractError("radius field is not finite");
        check_ball_fits(lat, radii[x]);
        const BallStencil& st = ball_stencil(lat.dim(), radii[x]);
        double s = 0.0;
        for (const Coord& o : st.vertices) s += F[lat.translate(x, o)];
        out[x] = s / static_cast<double>(st.vertices.size());
    }
    return out;
}

VertexField energy_density(const Environment& env, const VertexField& u) {
    const Lattice& lat = env.lattice();
    const VectorField gu = forward_gradient(u);
    VertexField out(lat);
    for (int i = 0; i < lat.dim(); ++i)
        for (std::size_t x = 0; x < lat.volume(); ++x) out[x] += env.a(i, x) * gu(i, x) * gu(i, x);
    return out;
}

MeyersReport meyers_pipeline(const Environment& env, const VertexField& u, const VectorField& f,
                             const ScaleField& r_diamond) {
    const Lattice& lat = env.lattice();
    MeyersReport rep;
    rep.s = meyers_s(lat.dim());
    VertexField F(lat);
    for (int i = 0; i < lat.dim(); ++i)
        for (std::size_t x = 0; x < lat.volume(); ++x) F[x] += f(i, x) * f(i, x) / env.a(i, x);
    const VertexField U = power(inhomogeneous_ball_mean(energy_density(env, u), r_diamond.radii), rep.s);
    const VertexField V = power(inhomogeneous_ball_mean(F, r_diamond.radii), rep.s);
    rep.gehring = gehring_probe(U, V, 1.0 / rep.s);
    rep.beta_hat = rep.s * rep.gehring.q_bar;
    rep.pass = rep.gehring.applicable && rep.beta_hat > 1.0;
    return rep;
}

}  // namespace rcm
