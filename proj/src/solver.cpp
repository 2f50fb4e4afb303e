#include "rcm/solver.hpp"

#include <chrono>
#include <cmath>
#include <complex>
#include <iomanip>
#include <sstream>
#include <vector>

#include "rcm/calculus.hpp"
#include "rcm/error.hpp"
#include "rcm/fourier.hpp"

namespace rcm {

void check_compatible(const VertexField& rhs) {
    double s = 0.0;
    double l1 = 0.0;
    for (double v : rhs.values()) {
        s += v;
        l1 += std::abs(v);
    }
    if (std::abs(s) > 1e-12 * l1 + 1e-300)
    {
        std::ostringstream os;
        os << std::scientific << std::setprecision(3) << "right-hand side does not sum to zero (sum = " << s
           << ", l1 norm = " << l1 << ")";
        throw ContractError(os.str());
    }
}

std::size_t default_iteration_cap(const Environment& env) {
    const Lattice& lat = env.lattice();
    const double cond = std::sqrt(env.max_conductance() / env.min_conductance());
    const double cap = 50.0 * std::pow(static_cast<double>(lat.side()), 0.5 * lat.dim()) * cond;
    return static_cast<std::size_t>(std::ceil(cap));
}

namespace {

void project_mean_zero(std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    s /= static_cast<double>(v.size());
    for (double& x : v) x -= s;
}

double dotv(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

// out = T^{-1} u - div*(A grad u), written against raw arrays for the inner loop.
void matvec(const Environment& env, double mass, const std::vector<double>& u, std::vector<double>& out) {
    const Lattice& lat = env.lattice();
    const std::size_t n = lat.volume();
    for (std::size_t x = 0; x < n; ++x) out[x] = mass * u[x];
    const auto a = env.conductances().values();
    for (int i = 0; i < lat.dim(); ++i) {
        const double* ai = a.data() + static_cast<std::size_t>(i) * n;
        for (std::size_t x = 0; x < n; ++x) {
            const std::size_t y = lat.forward(x, i);
            const double flux = ai[x] * (u[y] - u[x]);
            out[x] -= flux;
            out[y] += flux;
        }
    }
}

}  // namespace

std::pair<VertexField, SolveReport> solve_weighted(const Environment& env, const VertexField& rhs,
                                                   const SolveOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    const Lattice& lat = env.lattice();
    if (!(rhs.lattice() == lat)) throw ContractError("rhs and environment live on different boxes");
    if (!(options.tol > 0.0 && options.tol < 1.0)) throw ContractError("solver tolerance must lie in (0, 1)");
    if (options.massive && !(*options.massive > 0.0)) throw ContractError("massive term T must be positive");
    const bool massless = !options.massive;
    if (massless && !options.project_rhs) check_compatible(rhs);

    const std::size_t n = lat.volume();
    const double mass = massless ? 0.0 : 1.0 / *options.massive;
    const std::size_t cap = options.max_iterations.value_or(default_iteration_cap(env));

    std::vector<double> b(rhs.values().begin(), rhs.values().end());
    if (massless) project_mean_zero(b);
    const double bnorm = std::sqrt(dotv(b, b));

    SolveReport report;
    report.tolerance = options.tol;
    std::vector<double> u(n, 0.0);
    auto finish = [&](double rel) {
        report.relative_residual = rel;
        report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return std::pair{VertexField(lat, std::move(u)), report};
    };
    if (bnorm == 0.0) return finish(0.0);

    std::vector<double> dinv(n, mass);
    for (int i = 0; i < lat.dim(); ++i)
        for (std::size_t x = 0; x < n; ++x) {
            dinv[x] += env.a(i, x);
            dinv[lat.forward(x, i)] += env.a(i, x);
        }
    for (double& v : dinv) v = 1.0 / v;

    std::vector<double> r(n), z(n), p(n), Ap(n);
    double rel = 1.0;
    while (true) {
        // Restart: true residual from scratch.
        matvec(env, mass, u, Ap);
        for (std::size_t x = 0; x < n; ++x) r[x] = b[x] - Ap[x];
        rel = std::sqrt(dotv(r, r)) / bnorm;
        if (rel <= options.tol) break;
        if (report.iterations >= cap) {
            report.relative_residual = rel;
            report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            throw ConvergenceError("CG did not reach tolerance " + std::to_string(options.tol) + " within " +
                                       std::to_string(cap) + " iterations (residual " + std::to_string(rel) + ")",
                                   report);
        }
        for (std::size_t x = 0; x < n; ++x) z[x] = dinv[x] * r[x];
        if (massless) project_mean_zero(z);
        p = z;
        double rz = dotv(r, z);
        for (std::size_t k = 0; k < options.restart && report.iterations < cap; ++k) {
            matvec(env, mass, p, Ap);
            const double alpha = rz / dotv(p, Ap);
            for (std::size_t x = 0; x < n; ++x) {
                u[x] += alpha * p[x];
                r[x] -= alpha * Ap[x];
            }
            ++report.iterations;
            // Stop a bit below tol on the recurrence so the true residual usually passes first time.
            if (std::sqrt(dotv(r, r)) / bnorm <= 0.5 * options.tol) break;
            for (std::size_t x = 0; x < n; ++x) z[x] = dinv[x] * r[x];
            if (massless) project_mean_zero(z);
            const double rz_new = dotv(r, z);
            const double beta = rz_new / rz;
            rz = rz_new;
            for (std::size_t x = 0; x < n; ++x) p[x] = z[x] + beta * p[x];
        }
        if (massless) project_mean_zero(u);
    }
    if (massless) project_mean_zero(u);
    return finish(rel);
}

VertexField solve_poisson_spectral(const VertexField& rhs, bool project_rhs) {
    if (!project_rhs) check_compatible(rhs);
    const Lattice& lat = rhs.lattice();
    Fft& fft = fft_for(lat);
    std::vector<std::complex<double>> F;
    fft.forward(rhs.values(), F);
    const auto& lam = fft.symbol();
    F[0] = 0.0;
    for (std::size_t s = 1; s < F.size(); ++s) F[s] /= lam[s];
    VertexField u(lat);
    fft.inverse(F, u.values());
    u.subtract_mean();
    return u;
}

}  // namespace rcm
