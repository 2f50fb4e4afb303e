#include "rcm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "rcm/calculus.hpp"
#include "rcm/error.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"
#include "rcm/solver.hpp"

namespace rcm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> log_of(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](double t) { return std::log(t); });
    return out;
}

}  // namespace

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ContractError("least_squares needs >= 2 matched points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx <= 0.0) throw ContractError("least_squares needs two distinct abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    f.slope_lo = f.slope_hi = f.slope;
    return f;
}

LineFit scaling_fit(const std::vector<double>& x, const std::vector<double>& y, std::size_t n_boot,
                    std::uint64_t seed) {
    if (x.size() != y.size() || x.size() < 3) throw ContractError("scaling_fit needs >= 3 matched points");
    for (std::size_t k = 0; k < x.size(); ++k)
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw ContractError("scaling_fit needs positive data");
    const auto lx = log_of(x), ly = log_of(y);
    LineFit f = least_squares(lx, ly);
    if (n_boot == 0) return f;
    CounterRng rng(seed, StreamTag::Bootstrap, 0, 0);
    std::vector<double> slopes;
    std::vector<double> bx(x.size()), by(x.size());
    for (std::size_t b = 0; b < n_boot; ++b) {
        for (std::size_t k = 0; k < x.size(); ++k) {
            const std::size_t j = rng.below(x.size());
            bx[k] = lx[j];
            by[k] = ly[j];
        }
        if (*std::min_element(bx.begin(), bx.end()) == *std::max_element(bx.begin(), bx.end())) continue;
        slopes.push_back(least_squares(bx, by).slope);
    }
    if (!slopes.empty()) {
        f.slope_lo = quantile(slopes, 0.025);
        f.slope_hi = quantile(slopes, 0.975);
    }
    return f;
}

MomentNorm power_mean_norm(const std::vector<double>& m, double p, std::optional<double> tail_index,
                           std::size_t n_boot, std::uint64_t seed) {
    if (!(p > 0.0)) throw ContractError("moment order must be positive");
    if (m.size() < 2) throw ContractError("moment norm needs >= 2 samples");
    MomentNorm r;
    r.p = p;
    r.value = std::pow(mean(m), 1.0 / p);
    CounterRng rng(seed, StreamTag::Bootstrap, 1, static_cast<std::uint64_t>(p * 1000.0));
    std::vector<double> reps(n_boot);
    for (std::size_t b = 0; b < n_boot; ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) s += m[rng.below(m.size())];
        reps[b] = std::pow(s / static_cast<double>(m.size()), 1.0 / p);
    }
    r.lo = n_boot ? quantile(reps, 0.025) : r.value;
    r.hi = n_boot ? quantile(reps, 0.975) : r.value;

    if (tail_index && p > 0.5 * *tail_index) r.reasons.push_back("p above half the tail index");
    if (r.value > 0.0 && (r.hi - r.lo) / r.value > kMaxRelativeCiWidth) r.reasons.push_back("wide bootstrap CI");
    const double total = std::accumulate(m.begin(), m.end(), 0.0);
    if (total > 0.0 && *std::max_element(m.begin(), m.end()) / total > kMaxTermShare)
        r.reasons.push_back("single sample dominates");
    r.non_convergent = !r.reasons.empty();
    return r;
}

MomentNorm moment_norm(const std::vector<double>& samples, double p, std::optional<double> tail_index,
                       std::size_t n_boot, std::uint64_t seed) {
    std::vector<double> m(samples.size());
    std::transform(samples.begin(), samples.end(), m.begin(), [p](double v) { return std::pow(std::abs(v), p); });
    return power_mean_norm(m, p, tail_index, n_boot, seed);
}

std::uint64_t ensemble_seed(std::uint64_t base, std::size_t sample) {
    return hash_key(base, StreamTag::Ensemble, 0, sample);
}

namespace {

std::optional<double> law_tail(const EnvironmentSpec& spec) {
    if (spec.truncation) return std::nullopt;
    const double t = spec.distribution.tail_index();
    if (std::isfinite(t)) return t;
    return std::nullopt;
}

EnvironmentSpec member(const EnvironmentSpec& spec, std::size_t s) {
    EnvironmentSpec m = spec;
    m.seed = ensemble_seed(spec.seed, s);
    return m;
}

}  // namespace

EnsembleStats estimate_CR(const EnvironmentSpec& spec, const EnsembleOptions& opt) {
    spec.validate();
    const int d = spec.dim;
    if (opt.n_samples < 2) throw ContractError("estimate_CR needs n >= 2");
    if (opt.R_list.empty()) throw ContractError("estimate_CR needs radii");
    if (opt.direction < 0 || opt.direction >= d) throw ContractError("direction out of range");
    for (double R : opt.R_list)
        if (R > opt.guard * spec.side + 1e-12 || R < 1.0)
            throw GeometryError("radius " + std::to_string(R) + " violates the periodization guard R <= " +
                                std::to_string(opt.guard) + " L");

    EnsembleStats st;
    st.spec = spec;
    st.options = opt;
    st.records.resize(opt.n_samples);
    const std::size_t nr = opt.R_list.size();
    parallel_for(opt.n_samples, opt.threads, [&](std::size_t s) {
        SampleRecord& rec = st.records[s];
        const EnvironmentSpec ms = member(spec, s);
        rec.seed = ms.seed;
        const Environment env = sample_environment(ms);
        CorrectorBundle b = compute_corrector(env, opt.direction, opt.tol);
        if (opt.with_sigma) compute_flux_corrector(b, opt.tol);
        rec.solver_iterations = b.phi_report.iterations;
        if (opt.on_sample) opt.on_sample(s, env, b);
        const VertexField gi = b.grad_phi.component_field(opt.direction);
        rec.pmean.assign(nr, std::vector<double>(opt.p_list.size(), 0.0));
        rec.sq_mean.assign(nr, 0.0);
        rec.full_sq_mean.assign(nr, 0.0);
        for (std::size_t r = 0; r < nr; ++r) {
            const double R = opt.R_list[r];
            const double scale = std::pow(R, 0.5 * d);
            const VertexField m = ball_mean_field(gi, R);
            const double inv = 1.0 / static_cast<double>(m.size());
            for (std::size_t x = 0; x < m.size(); ++x) {
                const double c = scale * std::abs(m[x]);
                rec.sq_mean[r] += m[x] * m[x] * inv;
                for (std::size_t k = 0; k < opt.p_list.size(); ++k) rec.pmean[r][k] += std::pow(c, opt.p_list[k]) * inv;
            }
            if (opt.with_sigma) {
                VertexField acc(env.lattice());
                auto add = [&](const VertexField& f) {
                    const VertexField mf = ball_mean_field(f, R);
                    for (std::size_t x = 0; x < acc.size(); ++x) acc[x] += mf[x] * mf[x];
                };
                for (int j = 0; j < d; ++j) add(b.grad_phi.component_field(j));
                for (const auto& [jk, sig] : b.sigma) {
                    const VectorField gs = forward_gradient(sig);
                    for (int l = 0; l < d; ++l) add(gs.component_field(l));
                }
                rec.full_sq_mean[r] = acc.mean();
            }
        }
    });

    const auto tail = law_tail(spec);
    st.cr_norms.resize(nr);
    for (std::size_t r = 0; r < nr; ++r) {
        for (std::size_t k = 0; k < opt.p_list.size(); ++k) {
            std::vector<double> m(opt.n_samples);
            for (std::size_t s = 0; s < opt.n_samples; ++s) m[s] = st.records[s].pmean[r][k];
            st.cr_norms[r].push_back(power_mean_norm(m, opt.p_list[k], tail, opt.n_boot, spec.seed + r));
            st.any_non_convergent = st.any_non_convergent || st.cr_norms[r].back().non_convergent;
        }
        std::vector<double> sq(opt.n_samples), fsq(opt.n_samples);
        for (std::size_t s = 0; s < opt.n_samples; ++s) {
            sq[s] = st.records[s].sq_mean[r];
            fsq[s] = st.records[s].full_sq_mean[r];
        }
        st.rms.push_back(power_mean_norm(sq, 2.0, tail, opt.n_boot, spec.seed + r));
        if (opt.with_sigma) st.full_rms.push_back(power_mean_norm(fsq, 2.0, tail, opt.n_boot, spec.seed + r));
    }

    if (nr >= 2) {
        std::vector<double> y(nr);
        for (std::size_t r = 0; r < nr; ++r) y[r] = st.rms[r].value;
        const auto lx = log_of(opt.R_list);
        const bool positive = std::all_of(y.begin(), y.end(), [](double v) { return v > 0.0; });
        if (positive) {
            st.slope = least_squares(lx, log_of(y));
            CounterRng rng(spec.seed, StreamTag::Bootstrap, 2, 0);
            std::vector<double> slopes;
            for (std::size_t b = 0; b < opt.n_boot; ++b) {
                std::vector<double> acc(nr, 0.0);
                for (std::size_t k = 0; k < opt.n_samples; ++k) {
                    const auto& rec = st.records[rng.below(opt.n_samples)];
                    for (std::size_t r = 0; r < nr; ++r) acc[r] += rec.sq_mean[r];
                }
                for (double& v : acc) v = 0.5 * std::log(v / static_cast<double>(opt.n_samples));
                slopes.push_back(least_squares(lx, acc).slope);
            }
            if (!slopes.empty()) {
                st.slope.slope_lo = quantile(slopes, 0.025);
                st.slope.slope_hi = quantile(slopes, 0.975);
            }
        }
    }
    return st;
}

double growth_shape(int d, double t) {
    if (d == 1) return std::sqrt(t);
    if (d == 2) return std::sqrt(std::log1p(t));
    return 1.0;
}

GrowthCurve corrector_growth(const EnvironmentSpec& spec, const GrowthOptions& opt) {
    spec.validate();
    if (opt.n_samples < 2) throw ContractError("corrector_growth needs n >= 2");
    const Lattice lat(spec.dim, spec.side);
    GrowthCurve g;
    g.offsets = opt.offsets;
    for (const Coord& o : opt.offsets) {
        double r2 = 0.0;
        for (int i = 0; i < spec.dim; ++i) r2 += double(o[i]) * o[i];
        if (std::sqrt(r2) > opt.guard * spec.side + 1e-12)
            throw GeometryError("growth offset beyond the periodization guard");
        g.distance.push_back(std::sqrt(r2));
    }
    const std::size_t nx = opt.offsets.size();
    g.per_sample.assign(opt.n_samples, std::vector<double>(nx, 0.0));
    parallel_for(opt.n_samples, opt.threads, [&](std::size_t s) {
        const Environment env = sample_environment(member(spec, s));
        const CorrectorBundle b = compute_corrector(env, opt.direction, opt.tol);
        const double inv = 1.0 / static_cast<double>(lat.volume());
        for (std::size_t k = 0; k < nx; ++k)
            for (std::size_t y = 0; y < lat.volume(); ++y)
                g.per_sample[s][k] += std::pow(std::abs(b.phi[lat.translate(y, opt.offsets[k])] - b.phi[y]), opt.p) * inv;
    });
    const auto tail = law_tail(spec);
    for (std::size_t k = 0; k < nx; ++k) {
        std::vector<double> m(opt.n_samples);
        for (std::size_t s = 0; s < opt.n_samples; ++s) m[s] = g.per_sample[s][k];
        g.norm.push_back(power_mean_norm(m, opt.p, tail, opt.n_boot, spec.seed + k));
    }
    std::vector<double> fx, px, y;
    for (std::size_t k = 0; k < nx; ++k) {
        if (g.distance[k] == 0.0) continue;
        fx.push_back(growth_shape(spec.dim, g.distance[k]));
        px.push_back(std::pow(g.distance[k], 0.25));
        y.push_back(g.norm[k].value);
    }
    const auto distinct = [](const std::vector<double>& v) {
        return v.size() >= 2 && *std::min_element(v.begin(), v.end()) < *std::max_element(v.begin(), v.end());
    };
    if (distinct(fx)) g.shape_fit = least_squares(fx, y);
    if (distinct(px)) g.power_fit = least_squares(px, y);
    return g;
}

SublinearityReport sublinearity_check(const CorrectorBundle& bundle, const std::vector<double>& n_list) {
    const Lattice& lat = bundle.phi.lattice();
    std::vector<const VertexField*> comps{&bundle.phi};
    for (const auto& [jk, f] : bundle.sigma) comps.push_back(&f);
    int stride = 1;
    while (std::pow(static_cast<double>(lat.side() / stride), lat.dim()) > 1024.0) stride *= 2;
    std::vector<std::size_t> centres;
    for (std::size_t x = 0; x < lat.volume(); ++x) {
        const Coord c = lat.coords(x);
        bool on = true;
        for (int i = 0; i < lat.dim(); ++i) on = on && c[i] % stride == 0;
        if (on) centres.push_back(x);
    }
    SublinearityReport rep;
    for (double n : n_list) {
        if (n > 0.25 * lat.side() + 1e-12 || n < 1.0) throw GeometryError("sublinearity radius outside [1, L/4]");
        const BallStencil& st = ball_stencil(lat.dim(), n);
        double total = 0.0;
        for (std::size_t x : centres) {
            double acc = 0.0;
            for (const Coord& o : st.vertices) {
                const std::size_t y = lat.translate(x, o);
                double s2 = 0.0;
                for (const VertexField* f : comps) s2 += ((*f)[y] - (*f)[x]) * ((*f)[y] - (*f)[x]);
                acc += std::sqrt(s2);
            }
            total += acc / static_cast<double>(st.vertices.size());
        }
        rep.n.push_back(n);
        rep.value.push_back(total / static_cast<double>(centres.size()) / n);
    }
    const double peak = rep.value.empty() ? 0.0 : *std::max_element(rep.value.begin(), rep.value.end());
    if (peak <= 1e-14) {
        rep.pass = true;
        return rep;
    }
    bool decreasing = true;
    for (std::size_t k = 1; k < rep.value.size(); ++k) decreasing = decreasing && rep.value[k] < rep.value[k - 1];
    rep.pass = decreasing && rep.value.back() <= 0.5 * rep.value.front();
    if (rep.n.size() >= 2) rep.fit = least_squares(log_of(rep.n), log_of(rep.value));
    return rep;
}

double sobolev_S(int d) { return 2.0 * (1.0 + 1.0 / d); }
double sobolev_s(int d) { return 2.0 * (d + 1.0) / (d + 2.0); }

SobolevReport avg_sobolev_probe(const VertexField& psi, std::size_t center, double R, double mu, double S, double s,
                                std::optional<double> bound) {
    const Lattice& lat = psi.lattice();
    const int d = lat.dim();
    SobolevReport r;
    r.R = R;
    r.mu = mu;
    r.S = S;
    r.s = s;
    r.tau = d * (1.0 / s - 1.0 / S);
    if (!(s > 0.0) || !(S > 0.0) || r.tau < -1e-12 || r.tau > 1.0 + 1e-12)
        throw ConfigError("averaged Sobolev probe needs tau = d(1/s - 1/S) in [0, 1]");
    if (!(mu > 0.0 && mu < 1.0)) throw ConfigError("averaged Sobolev probe needs mu in (0, 1)");
    if (!(4.0 * R < lat.side())) throw GeometryError("averaged Sobolev probe needs 2R < L/2");

    const Ball B = make_ball(lat, center, R);
    const Ball B2 = make_ball(lat, center, 2.0 * R);
    const VectorField g = forward_gradient(psi);

    const double avg = ball_average(psi, B);
    double osc = 0.0;
    for (std::size_t y : B.vertices) osc += std::pow(std::abs(psi[y] - avg), S);
    r.lhs = std::pow(osc / static_cast<double>(B.vertices.size()), 1.0 / S) / R;

    double gs = 0.0;
    for (std::size_t y : B2.vertices) {
        double n2 = 0.0;
        for (int i = 0; i < d; ++i) n2 += g(i, y) * g(i, y);
        gs += std::pow(n2, 0.5 * s);
    }
    r.gradient = std::pow(R, -(1.0 - r.tau) * (1.0 - mu)) * std::pow(gs / static_cast<double>(B2.vertices.size()), 1.0 / s);

    const BallStencil& small = ball_stencil(d, std::pow(R, mu));
    double ls = 0.0;
    for (std::size_t y : B.vertices) {
        double n2 = 0.0;
        for (int i = 0; i < d; ++i) {
            double m = 0.0;
            for (const Coord& o : small.vertices) m += g(i, lat.translate(y, o));
            m /= static_cast<double>(small.vertices.size());
            n2 += m * m;
        }
        ls += std::pow(n2, 0.5 * s);
    }
    r.local = std::pow(ls / static_cast<double>(B.vertices.size()), 1.0 / s);

    const double den = r.gradient + r.local;
    r.constant = den > 0.0 ? r.lhs / den : (r.lhs > 0.0 ? kInf : 0.0);
    r.bound = bound.value_or(sobolev_constant(d));
    r.pass = r.constant <= r.bound;
    return r;
}

double sobolev_constant(int d) {
    // 4 x calibrate_sobolev(d), frozen.
    static constexpr double frozen[4] = {0.0, 2.32, 1.54, 1.32};
    if (d < 1 || d > 3) throw ContractError("dimension out of range");
    return frozen[d];
}

double calibrate_sobolev(int d, std::size_t trials) {
    const int L = d == 3 ? 32 : 64;
    const Lattice lat(d, L);
    const double S = sobolev_S(d), s = sobolev_s(d);
    Coord mid{0, 0, 0};
    for (int i = 0; i < d; ++i) mid[i] = L / 2;
    const std::size_t centre = lat.index(mid);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        CounterRng rng(0, StreamTag::Probe, static_cast<std::uint64_t>(d), t);
        VertexField psi(lat);
        const int kind = static_cast<int>(t % 4);
        for (std::size_t x = 0; x < lat.volume(); ++x) {
            const Coord c = lat.coords(x);
            if (kind == 0) psi[x] = rng.normal();
            if (kind == 2) {
                // ramp, continuous inside the probed balls around the box centre
                for (int i = 0; i < d; ++i) psi[x] += (i + 1.0) * c[i];
            }
        }
        if (kind == 1 || kind == 3) {
            const int modes = kind == 1 ? 3 : 12;
            const int kmax = kind == 1 ? 2 : 8;
            for (int m = 0; m < modes; ++m) {
                int k[3] = {0, 0, 0};
                for (int i = 0; i < d; ++i) k[i] = static_cast<int>(rng.below(2 * kmax + 1)) - kmax;
                const double amp = rng.normal(), phase = 2.0 * std::numbers::pi * rng.uniform();
                for (std::size_t x = 0; x < lat.volume(); ++x) {
                    const Coord c = lat.coords(x);
                    double arg = phase;
                    for (int i = 0; i < d; ++i) arg += 2.0 * std::numbers::pi * k[i] * c[i] / L;
                    psi[x] += amp * std::cos(arg);
                }
            }
        }
        for (double R = 2.0; 4.0 * R < L; R *= 2.0)
            worst = std::max(worst, avg_sobolev_probe(psi, centre, R, 0.5, S, s, kInf).constant);
    }
    return worst;
}

}  // namespace rcm
