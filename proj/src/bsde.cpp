#include "fbsde/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "fbsde/errors.hpp"
#include "fbsde/parallel.hpp"
#include "fbsde/regression.hpp"

namespace fbsde {

std::vector<double> jump_u_weights(const MeasureTilt& tilt, std::span<const JumpAtom> atoms) {
    std::vector<double> w;
    w.reserve(atoms.size());
    for (const auto& a : atoms) w.push_back(tilt.delta_at(a.size) * a.rate);
    return w;
}

BsdeProblem under_tilted_measure(const BsdeProblem& problem) {
    BsdeProblem out = problem;
    out.tilt = MeasureTilt::identity(problem.tilt.label.empty() ? "tilted" : problem.tilt.label);
    return out;
}

void SolverConfig::validate() const {
    if (degree < 0) throw InvalidSpec("basis degree must be >= 0");
    if (picard_max < 1) throw InvalidSpec("picard_max must be >= 1");
    if (!(picard_tol > 0.0)) throw InvalidSpec("picard_tol must be positive");
    if (clip && !(clip->first <= clip->second)) throw InvalidSpec("clip bounds are reversed");
}

std::pair<double, double> mean_and_stderr(std::span<const double> sample) {
    const std::size_t n = sample.size();
    if (n == 0) return {0.0, 0.0};
    const double mean = parallel::sum(n, [&](std::size_t i) { return sample[i]; }) / static_cast<double>(n);
    if (n < 2) return {mean, 0.0};
    const double ss = parallel::sum(n, [&](std::size_t i) {
        const double e = sample[i] - mean;
        return e * e;
    });
    return {mean, std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n))};
}

double paired_stderr(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidSpec("paired samples differ in size");
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    return mean_and_stderr(diff).second;
}

namespace {

// Shared machinery of the three solvers. step_factor(path, k) multiplies the cash
// flow carried from node k+1 back to node k.
template <class StepFactor>
class BackwardEngine {
public:
    BackwardEngine(const BsdeProblem& problem, const PathBundle& bundle, const SolverConfig& cfg,
                   StepFactor step_factor, bool tilt_terms)
        : problem_(problem), b_(bundle), cfg_(cfg), step_factor_(std::move(step_factor)), tilt_terms_(tilt_terms) {
        cfg.validate();
        if (!problem.terminal) throw InvalidSpec("BSDE problem needs a terminal condition");
        if (!problem.u_weights.empty() && problem.u_weights.size() != bundle.n_atoms())
            throw InvalidSpec("u_weights do not match the jump atoms of the bundle");
        if (tilt_terms_) {
            problem.tilt.validate(bundle.atoms);
            tilt_u_weights_ = jump_u_weights(problem.tilt, bundle.atoms);
        }
    }

    ValueSurface allocate() const {
        ValueSurface s;
        s.n_paths = b_.n_paths;
        s.n_steps = b_.n_steps();
        s.dim = b_.dim;
        s.n_atoms = b_.n_atoms();
        s.Y.assign(s.n_paths * (s.n_steps + 1), 0.0);
        s.Z.assign(s.n_paths * s.n_steps * s.dim, 0.0);
        s.U.assign(s.n_paths * s.n_steps * s.n_atoms, 0.0);
        s.pathwise.assign(s.n_paths, 0.0);
        return s;
    }

    // One backward pass. y_prev holds the previous Picard iterate of Y (empty: zero).
    void sweep(const std::vector<double>& y_prev, ValueSurface& s) const {
        const std::size_t n = s.n_steps;
        const std::size_t d = s.dim;
        const std::size_t atoms = s.n_atoms;
        const std::size_t m = d + atoms;
        const double dt = b_.grid.dt;
        std::vector<double>& w = s.pathwise;

#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(s.n_paths); ++pp) {
            const auto p = static_cast<std::size_t>(pp);
            const double g = problem_.terminal(b_.state(p, n));
            s.Y[p * (n + 1) + n] = g;
            w[p] = g;
        }

        std::vector<double> zu(s.n_paths * m);
        std::vector<double> fitted(s.n_paths);
        for (std::size_t kk = n; kk-- > 0;) {
            const std::size_t k = kk;
            const NodeRegression& reg = regression(k);

            if (m > 0) {
                // Centring Y_{k+1} on its regressed conditional mean leaves E[. dW | F_k]
                // unchanged and removes most of the variance of the Z and U targets.
                reg.project([&](std::size_t p) { return s.Y[p * (n + 1) + k + 1]; }, fitted);
                reg.project_many(
                    m,
                    [&](std::size_t p, std::span<double> out) {
                        const double y1 = s.Y[p * (n + 1) + k + 1] - fitted[p];
                        const auto dw = b_.increment(p, k);
                        for (std::size_t i = 0; i < d; ++i) out[i] = y1 * dw[i] / dt;
                        const auto counts = b_.jumps(p, k);
                        for (std::size_t j = 0; j < atoms; ++j) {
                            const double lam = b_.atoms[j].rate * dt;
                            out[d + j] = lam > 0.0 ? y1 * (static_cast<double>(counts[j]) - lam) / lam : 0.0;
                        }
                    },
                    zu);
            }

            const double t = b_.grid.at(k);
#pragma omp parallel
            {
                std::vector<double> beta(d);
#pragma omp for schedule(static)
                for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(s.n_paths); ++pp) {
                    const auto p = static_cast<std::size_t>(pp);
                    double* z = s.Z.data() + (p * n + k) * d;
                    double* u = s.U.data() + (p * n + k) * atoms;
                    std::copy_n(zu.data() + p * m, d, z);
                    std::copy_n(zu.data() + p * m + d, atoms, u);

                    const auto x = b_.state(p, k);
                    double drive = 0.0;
                    if (problem_.driver) {
                        double u_arg = 0.0;
                        for (std::size_t j = 0; j < problem_.u_weights.size(); ++j) u_arg += u[j] * problem_.u_weights[j];
                        const double y = y_prev.empty() ? 0.0 : y_prev[p * (n + 1) + k];
                        drive += problem_.driver(t, x, y, std::span<const double>(z, d), u_arg);
                    }
                    if (tilt_terms_) {
                        if (problem_.tilt.has_beta()) {
                            problem_.tilt.beta_at(t, x, beta);
                            for (std::size_t i = 0; i < d; ++i) drive += beta[i] * z[i];
                        }
                        for (std::size_t j = 0; j < atoms; ++j) drive += u[j] * tilt_u_weights_[j];
                    }
                    w[p] = step_factor_(p, k) * w[p] + drive * dt;
                }
            }

            reg.project([&](std::size_t p) { return w[p]; }, fitted);
            for (std::size_t p = 0; p < s.n_paths; ++p) {
                double v = fitted[p];
                if (cfg_.clip) v = std::clamp(v, cfg_.clip->first, cfg_.clip->second);
                s.Y[p * (n + 1) + k] = v;
            }
        }
        const auto [mean, se] = mean_and_stderr(w);
        s.y0 = mean;
        s.std_error = se;
    }

    // Picard loop. Returns the final surface and fills the report.
    ValueSurface run(ContractionReport& report) const {
        ValueSurface s = allocate();
        std::vector<double> y_prev;
        for (int it = 1; it <= cfg_.picard_max; ++it) {
            sweep(y_prev, s);
            s.iterations = it;
            report.y0_history.push_back(s.y0);
            if (!std::isfinite(s.y0)) break;
            if (!problem_.driver) {
                // Without a driver the next sweep reproduces this one bit for bit.
                report.gaps.push_back(0.0);
                report.converged = true;
                break;
            }
            if (it >= 2) {
                const double gap = std::abs(report.y0_history[it - 1] - report.y0_history[it - 2]);
                report.gaps.push_back(gap);
                if (gap < cfg_.picard_tol) {
                    report.converged = true;
                    break;
                }
            }
            y_prev = s.Y;
        }
        report.contracting = report.converged;
        for (std::size_t i = 2; i < report.gaps.size(); ++i)
            if (report.gaps[i] > report.gaps[i - 1]) report.contracting = false;
        s.gaps = report.gaps;
        return s;
    }

    ValueSurface solve() const {
        ContractionReport report;
        ValueSurface s = run(report);
        if (!report.converged) {
            throw PicardDiverged("Picard iteration did not reach tolerance " + std::to_string(cfg_.picard_tol) +
                                     " within " + std::to_string(cfg_.picard_max) + " iterations",
                                 report.y0_history);
        }
        return s;
    }

private:
    // Regressions are reused across Picard sweeps when more than one sweep is expected.
    const NodeRegression& regression(std::size_t k) const {
        if (!problem_.driver) {
            scratch_ = std::make_unique<NodeRegression>(b_, k, cfg_.degree);
            return *scratch_;
        }
        if (cache_.empty()) cache_.resize(b_.n_steps());
        if (!cache_[k]) cache_[k] = std::make_unique<NodeRegression>(b_, k, cfg_.degree);
        return *cache_[k];
    }

    const BsdeProblem& problem_;
    const PathBundle& b_;
    const SolverConfig& cfg_;
    StepFactor step_factor_;
    bool tilt_terms_;
    std::vector<double> tilt_u_weights_;
    mutable std::vector<std::unique_ptr<NodeRegression>> cache_;
    mutable std::unique_ptr<NodeRegression> scratch_;
};

auto discount_factor(const BsdeProblem& problem, const PathBundle& bundle) {
    const double dt = bundle.grid.dt;
    return [&problem, &bundle, dt](std::size_t p, std::size_t k) {
        if (!problem.discount) return 1.0;
        return std::exp(-problem.discount(bundle.grid.at(k), bundle.state(p, k)) * dt);
    };
}

void check_density(const DensityPath& h, const PathBundle& bundle) {
    if (h.n_paths != bundle.n_paths || h.first_node != 0 || h.last_node() != bundle.n_steps())
        throw InvalidSpec("density must cover the whole grid of the bundle");
}

}  // namespace

ValueSurface solve_backward(const BsdeProblem& problem, const PathBundle& bundle, const SolverConfig& cfg) {
    BackwardEngine engine(problem, bundle, cfg, discount_factor(problem, bundle), true);
    return engine.solve();
}

ValueSurface price_under_P(const BsdeProblem& problem, const PathBundle& bundle, const DensityPath& density,
                           const SolverConfig& cfg) {
    check_density(density, bundle);
    const double dt = bundle.grid.dt;
    auto factor = [&problem, &bundle, &density, dt](std::size_t p, std::size_t k) {
        const double alpha = problem.discount ? problem.discount(bundle.grid.at(k), bundle.state(p, k)) : 0.0;
        return std::exp(-alpha * dt + density.log_value(p, k + 1) - density.log_value(p, k));
    };
    BackwardEngine engine(problem, bundle, cfg, factor, false);
    return engine.solve();
}

ValueSurface solve_deflated(const BsdeProblem& problem, const PathBundle& bundle, const DensityPath& log_deflator,
                            const SolverConfig& cfg) {
    check_density(log_deflator, bundle);
    auto factor = [&log_deflator](std::size_t p, std::size_t k) {
        return std::exp(log_deflator.log_value(p, k + 1) - log_deflator.log_value(p, k));
    };
    BackwardEngine engine(problem, bundle, cfg, factor, false);
    return engine.solve();
}

ContractionReport picard_contraction_report(const BsdeProblem& problem, const PathBundle& bundle,
                                            const SolverConfig& cfg) {
    BackwardEngine engine(problem, bundle, cfg, discount_factor(problem, bundle), true);
    ContractionReport report;
    engine.run(report);
    return report;
}

}  // namespace fbsde
