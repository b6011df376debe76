#include "fbsde/paths.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "fbsde/errors.hpp"
#include "fbsde/parallel.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

namespace parallel {

int apply_thread_cap_from_env() {
    if (const char* cap = std::getenv("FBSDE_NUM_THREADS")) {
        const int n = std::atoi(cap);
        if (n > 0) omp_set_num_threads(n);
    }
    return omp_get_max_threads();
}

}  // namespace parallel

TimeGrid build_grid(double t0, double T, long long n_steps) {
    if (!(std::isfinite(t0) && std::isfinite(T)) || !(t0 < T))
        throw InvalidGrid("grid endpoints must satisfy t0 < T (got " + std::to_string(t0) + ", " +
                          std::to_string(T) + ")");
    if (n_steps < 1) throw InvalidGrid("n_steps must be >= 1");
    TimeGrid grid;
    grid.t0 = t0;
    grid.T = T;
    grid.n_steps = static_cast<std::size_t>(n_steps);
    grid.dt = (T - t0) / static_cast<double>(n_steps);
    grid.nodes.resize(grid.n_steps + 1);
    for (std::size_t k = 0; k <= grid.n_steps; ++k)
        grid.nodes[k] = t0 + static_cast<double>(k) * grid.dt;
    grid.nodes.back() = T;
    return grid;
}

void DiffusionSpec::validate() const {
    if (dim == 0) throw InvalidSpec("diffusion dimension must be positive");
    if (initial_state.size() != dim) throw InvalidSpec("initial_state has wrong dimension");
    if (corr_chol.rows() != static_cast<Eigen::Index>(dim) || corr_chol.cols() != static_cast<Eigen::Index>(dim))
        throw InvalidSpec("corr_chol must be d x d");
    for (Eigen::Index i = 0; i < corr_chol.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < corr_chol.cols(); ++j)
            if (corr_chol(i, j) != 0.0) throw InvalidSpec("corr_chol must be lower triangular");
        if (std::abs(corr_chol.row(i).squaredNorm() - 1.0) > 1e-12)
            throw InvalidSpec("corr_chol row " + std::to_string(i) + " does not have unit norm");
    }
    if (scheme == Scheme::LogEuler)
        for (double x : initial_state)
            if (!(x > 0.0)) throw InvalidSpec("log-Euler scheme requires a positive initial state");
}

JumpSpec JumpSpec::fixed_size(double size, double intensity, JumpImpactFn impact) {
    JumpSpec spec;
    spec.kind = JumpKind::FixedSizePoisson;
    spec.atoms = {{size, intensity}};
    spec.impact = std::move(impact);
    return spec;
}

JumpSpec JumpSpec::levy(std::vector<JumpAtom> atoms, JumpImpactFn impact) {
    JumpSpec spec;
    spec.kind = JumpKind::FiniteActivityLevy;
    spec.atoms = std::move(atoms);
    spec.impact = std::move(impact);
    return spec;
}

double JumpSpec::total_rate() const {
    double total = 0.0;
    for (const auto& a : atoms) total += a.rate;
    return total;
}

void JumpSpec::evaluate_impact(double t, std::span<const double> x, double z, std::span<double> out) const {
    if (impact) {
        impact(t, x, z, out);
    } else {
        std::fill(out.begin(), out.end(), z);
    }
}

void JumpSpec::validate() const {
    if (kind == JumpKind::None && !atoms.empty()) throw InvalidSpec("jump kind none with atoms");
    if (kind == JumpKind::FixedSizePoisson && atoms.size() != 1)
        throw InvalidSpec("fixed-size Poisson jumps need exactly one atom");
    for (const auto& a : atoms) {
        if (!(a.rate >= 0.0) || !std::isfinite(a.rate)) throw InvalidSpec("jump intensity must be finite and >= 0");
        if (!std::isfinite(a.size) || a.size == 0.0) throw InvalidSpec("jump sizes must be finite and nonzero");
    }
}

void PathBundle::correlated_increment(std::size_t path, std::size_t step, std::span<double> out) const {
    const auto raw = increment(path, step);
    for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += corr_chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * raw[j];
        out[i] = acc;
    }
}

namespace {

void draw_path(Increments& inc, std::span<const JumpAtom> atoms, double dt, std::size_t path, std::uint64_t seed) {
    const double sqdt = std::sqrt(dt);
    for (std::size_t k = 0; k < inc.n_steps; ++k) {
        CounterRng bm(seed, path, k, 0);
        double* dw = inc.dW.data() + (path * inc.n_steps + k) * inc.dim;
        for (std::size_t i = 0; i < inc.dim; ++i) dw[i] = sqdt * bm.normal();
        std::int32_t* counts = inc.jump_counts.data() + (path * inc.n_steps + k) * inc.n_atoms;
        for (std::size_t j = 0; j < inc.n_atoms; ++j) {
            CounterRng pois(seed, path, k, 1 + j);
            counts[j] = static_cast<std::int32_t>(pois.poisson(atoms[j].rate * dt));
        }
    }
}

Increments allocate_increments(std::size_t dim, std::size_t n_atoms, std::size_t n_steps, std::size_t n_paths) {
    Increments inc;
    inc.n_paths = n_paths;
    inc.n_steps = n_steps;
    inc.dim = dim;
    inc.n_atoms = n_atoms;
    inc.dW.assign(n_paths * n_steps * dim, 0.0);
    inc.jump_counts.assign(n_paths * n_steps * n_atoms, 0);
    return inc;
}

// Scratch buffers for one path evolution.
struct StepScratch {
    std::vector<double> drift, vol, corr, impact;
    explicit StepScratch(std::size_t d) : drift(d), vol(d), corr(d), impact(d) {}
};

// Evolves one path in place. Returns the first step producing a non-finite state,
// or SIZE_MAX on success.
std::size_t evolve_path(const DiffusionSpec& diff, const JumpSpec& jumps, const TimeGrid& grid,
                        const PathBundle& bundle, std::vector<double>& states, std::size_t path,
                        StepScratch& s) {
    const std::size_t d = diff.dim;
    const std::size_t n = grid.n_steps;
    const double dt = grid.dt;
    double* xs = states.data() + path * (n + 1) * d;
    std::copy(diff.initial_state.begin(), diff.initial_state.end(), xs);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = grid.at(k);
        std::span<const double> x(xs + k * d, d);
        double* next = xs + (k + 1) * d;
        if (diff.drift) diff.drift(t, x, s.drift); else std::fill(s.drift.begin(), s.drift.end(), 0.0);
        if (diff.volatility) diff.volatility(t, x, s.vol); else std::fill(s.vol.begin(), s.vol.end(), 0.0);
        bundle.correlated_increment(path, k, s.corr);
        const auto counts = bundle.jumps(path, k);

        if (diff.scheme == Scheme::Euler) {
            for (std::size_t i = 0; i < d; ++i) next[i] = x[i] + s.drift[i] * dt + s.vol[i] * s.corr[i];
            for (std::size_t j = 0; j < bundle.atoms.size(); ++j) {
                jumps.evaluate_impact(t, x, bundle.atoms[j].size, s.impact);
                const double compensated = static_cast<double>(counts[j]) - bundle.atoms[j].rate * dt;
                for (std::size_t i = 0; i < d; ++i) next[i] += s.impact[i] * compensated;
            }
        } else {
            for (std::size_t i = 0; i < d; ++i) {
                const double m = s.drift[i] / x[i];
                const double v = s.vol[i] / x[i];
                s.corr[i] = (m - 0.5 * v * v) * dt + v * s.corr[i];
            }
            for (std::size_t j = 0; j < bundle.atoms.size(); ++j) {
                jumps.evaluate_impact(t, x, bundle.atoms[j].size, s.impact);
                for (std::size_t i = 0; i < d; ++i) {
                    const double rel = s.impact[i] / x[i];
                    s.corr[i] += static_cast<double>(counts[j]) * std::log1p(rel) - bundle.atoms[j].rate * dt * rel;
                }
            }
            for (std::size_t i = 0; i < d; ++i) next[i] = x[i] * std::exp(s.corr[i]);
        }
        for (std::size_t i = 0; i < d; ++i)
            if (!std::isfinite(next[i])) return k + 1;
    }
    return std::numeric_limits<std::size_t>::max();
}

PathBundle make_bundle(const DiffusionSpec& diff, const JumpSpec& jumps, const TimeGrid& grid,
                       Increments&& inc, std::uint64_t seed) {
    diff.validate();
    jumps.validate();
    if (inc.n_steps != grid.n_steps || inc.dim != diff.dim || inc.n_atoms != jumps.atoms.size())
        throw InvalidSpec("increments do not match grid/spec");
    PathBundle b;
    b.grid = grid;
    b.n_paths = inc.n_paths;
    b.seed = seed;
    b.dim = diff.dim;
    b.corr_chol = diff.corr_chol;
    b.atoms = jumps.atoms;
    b.dW = std::move(inc.dW);
    b.jump_counts = std::move(inc.jump_counts);
    b.states.assign(b.n_paths * (grid.n_steps + 1) * b.dim, 0.0);
    return b;
}

}  // namespace

Increments draw_increments(std::size_t dim, std::span<const JumpAtom> atoms, const TimeGrid& grid,
                           std::size_t n_paths, std::uint64_t seed) {
    Increments inc = allocate_increments(dim, atoms.size(), grid.n_steps, n_paths);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n_paths); ++p)
        draw_path(inc, atoms, grid.dt, static_cast<std::size_t>(p), seed);
    return inc;
}

PathBundle integrate_paths(const DiffusionSpec& diff, const JumpSpec& jumps, const TimeGrid& grid,
                           Increments increments, std::uint64_t seed) {
    PathBundle b = make_bundle(diff, jumps, grid, std::move(increments), seed);
    std::atomic<std::size_t> first_bad{std::numeric_limits<std::size_t>::max()};
    std::size_t bad_step = 0;
#pragma omp parallel
    {
        StepScratch scratch(b.dim);
#pragma omp for schedule(static)
        for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(b.n_paths); ++p) {
            const auto path = static_cast<std::size_t>(p);
            const std::size_t step = evolve_path(diff, jumps, grid, b, b.states, path, scratch);
            if (step != std::numeric_limits<std::size_t>::max()) {
#pragma omp critical(fbsde_diverged)
                if (path < first_bad.load()) {
                    first_bad.store(path);
                    bad_step = step;
                }
            }
        }
    }
    if (first_bad.load() != std::numeric_limits<std::size_t>::max())
        throw SimulationDiverged(first_bad.load(), bad_step);
    return b;
}

PathBundle simulate_paths(const DiffusionSpec& diff, const JumpSpec& jumps, const TimeGrid& grid,
                          std::size_t n_paths, std::uint64_t seed) {
    if (n_paths == 0) throw InvalidSpec("n_paths must be positive");
    diff.validate();
    jumps.validate();
    return integrate_paths(diff, jumps, grid, draw_increments(diff.dim, jumps.atoms, grid, n_paths, seed), seed);
}

Increments coarsen(const Increments& fine, std::size_t factor) {
    if (factor == 0 || fine.n_steps % factor != 0)
        throw InvalidGrid("coarsening factor must divide the number of steps");
    Increments c = allocate_increments(fine.dim, fine.n_atoms, fine.n_steps / factor, fine.n_paths);
    for (std::size_t p = 0; p < fine.n_paths; ++p)
        for (std::size_t k = 0; k < fine.n_steps; ++k) {
            const std::size_t kc = k / factor;
            for (std::size_t i = 0; i < fine.dim; ++i)
                c.dW[(p * c.n_steps + kc) * c.dim + i] += fine.dW[(p * fine.n_steps + k) * fine.dim + i];
            for (std::size_t j = 0; j < fine.n_atoms; ++j)
                c.jump_counts[(p * c.n_steps + kc) * c.n_atoms + j] +=
                    fine.jump_counts[(p * fine.n_steps + k) * fine.n_atoms + j];
        }
    return c;
}

std::vector<double> brownian_terminal(const PathBundle& bundle, std::size_t coord) {
    if (coord >= bundle.dim)
        throw IndexError("Brownian coordinate " + std::to_string(coord) + " out of range for dimension " +
                         std::to_string(bundle.dim));
    std::vector<double> out(bundle.n_paths, 0.0);
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        double w = 0.0;
        for (std::size_t k = 0; k < bundle.n_steps(); ++k) w += bundle.increment(p, k)[coord];
        out[p] = w;
    }
    return out;
}

double estimate_lipschitz(const CoefficientFn& fn, std::size_t dim, double lo, double hi, std::size_t samples,
                          std::uint64_t seed) {
    std::vector<double> x(dim), y(dim), fx(dim), fy(dim);
    double worst = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        CounterRng rng(seed, s, 0, 99);
        for (std::size_t i = 0; i < dim; ++i) {
            x[i] = lo + (hi - lo) * rng.uniform();
            y[i] = lo + (hi - lo) * rng.uniform();
        }
        fn(0.0, x, fx);
        fn(0.0, y, fy);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            num += (fx[i] - fy[i]) * (fx[i] - fy[i]);
            den += (x[i] - y[i]) * (x[i] - y[i]);
        }
        if (den > 0.0) worst = std::max(worst, std::sqrt(num / den));
    }
    return worst;
}

namespace reference {

PathBundle simulate_paths_serial(const DiffusionSpec& diff, const JumpSpec& jumps, const TimeGrid& grid,
                                 std::size_t n_paths, std::uint64_t seed) {
    diff.validate();
    jumps.validate();
    Increments inc = allocate_increments(diff.dim, jumps.atoms.size(), grid.n_steps, n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) draw_path(inc, jumps.atoms, grid.dt, p, seed);
    PathBundle b = make_bundle(diff, jumps, grid, std::move(inc), seed);
    StepScratch scratch(b.dim);
    for (std::size_t p = 0; p < n_paths; ++p) {
        const std::size_t step = evolve_path(diff, jumps, grid, b, b.states, p, scratch);
        if (step != std::numeric_limits<std::size_t>::max()) throw SimulationDiverged(p, step);
    }
    return b;
}

}  // namespace reference

}  // namespace fbsde
