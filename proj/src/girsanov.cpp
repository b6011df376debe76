#include "fbsde/girsanov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fbsde/errors.hpp"

namespace fbsde {

MeasureTilt MeasureTilt::identity(std::string label) {
    MeasureTilt t;
    t.label = std::move(label);
    return t;
}

MeasureTilt MeasureTilt::constant(std::vector<double> beta, double delta, std::string label) {
    MeasureTilt t;
    t.label = std::move(label);
    const bool zero_beta = std::all_of(beta.begin(), beta.end(), [](double b) { return b == 0.0; });
    if (!zero_beta)
        t.beta = [beta = std::move(beta)](double, std::span<const double>, std::span<double> out) {
            std::copy(beta.begin(), beta.end(), out.begin());
        };
    if (delta != 0.0) t.delta = [delta](double) { return delta; };
    return t;
}

void MeasureTilt::beta_at(double t, std::span<const double> x, std::span<double> out) const {
    if (beta) {
        beta(t, x, out);
    } else {
        std::fill(out.begin(), out.end(), 0.0);
    }
}

void MeasureTilt::validate(std::span<const JumpAtom> atoms) const {
    double l2 = 0.0;
    for (const auto& a : atoms) {
        const double d = delta_at(a.size);
        if (!(d > -1.0))
            throw InvalidJumpKernel("jump kernel delta(" + std::to_string(a.size) + ") = " + std::to_string(d) +
                                    " must exceed -1");
        l2 += d * d * a.rate;
    }
    if (l2 > bound) throw InvalidJumpKernel("int delta^2 dnu exceeds the configured bound");
}

MeasureTilt compose(const MeasureTilt& first, const MeasureTilt& second, std::string label) {
    MeasureTilt out;
    out.label = std::move(label);
    out.bound = std::max(first.bound, second.bound);
    if (first.has_beta() || second.has_beta()) {
        out.beta = [a = first, b = second](double t, std::span<const double> x, std::span<double> res) {
            thread_local std::vector<double> tmp;
            tmp.resize(res.size());
            a.beta_at(t, x, res);
            b.beta_at(t, x, tmp);
            for (std::size_t i = 0; i < res.size(); ++i) res[i] += tmp[i];
        };
    }
    if (first.has_delta() || second.has_delta()) {
        out.delta = [a = first, b = second](double z) {
            return (1.0 + a.delta_at(z)) * (1.0 + b.delta_at(z)) - 1.0;
        };
    }
    return out;
}

void theta_kernel(const MarketSpec& market, double t, std::span<const double> state, std::span<double> theta) {
    const std::size_t d = market.d;
    if (!market.sigma) throw SingularVolatility("market has no diffusion coefficient");
    thread_local std::vector<double> mu, sigma;
    mu.assign(d, 0.0);
    sigma.assign(d, 0.0);
    if (market.mu) market.mu(t, state, mu);
    market.sigma(t, state, sigma);
    // (diag(sigma) rho) theta = mu - r + k, lower triangular forward substitution.
    for (std::size_t i = 0; i < d; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        double rhs = mu[i] - market.repo(i) + market.yield(i);
        for (std::size_t j = 0; j < i; ++j) rhs -= sigma[i] * market.corr_chol(ii, static_cast<Eigen::Index>(j)) * theta[j];
        const double pivot = sigma[i] * market.corr_chol(ii, ii);
        if (std::abs(pivot) < 1e-14) {
            // A redundant asset (e.g. correlation 1) is fine as long as its excess return
            // is already priced by the others; its component of theta is then free.
            if (std::abs(rhs) > 1e-12) throw SingularVolatility("Sigma rho is singular at row " + std::to_string(i));
            theta[i] = 0.0;
            continue;
        }
        theta[i] = rhs / pivot;
    }
}

std::vector<double> theta_kernel(const MarketSpec& market, double t, std::span<const double> state) {
    std::vector<double> theta(market.d, 0.0);
    theta_kernel(market, t, state, theta);
    return theta;
}

namespace {

std::size_t node_of(const TimeGrid& grid, double t) {
    const double pos = (t - grid.t0) / grid.dt;
    const double k = std::round(pos);
    if (std::abs(pos - k) > 1e-9 || k < 0.0 || k > static_cast<double>(grid.n_steps))
        throw InvalidGrid("time " + std::to_string(t) + " is not a grid node");
    return static_cast<std::size_t>(k);
}

// Accumulates log H along one path; returns false on a non-finite value.
bool density_path(const MeasureTilt& tilt, const PathBundle& bundle, std::span<const double> log_jump_factor,
                  std::span<const double> jump_drift, std::size_t first, std::size_t last, std::size_t path,
                  std::span<double> log_out, std::vector<double>& beta) {
    const double dt = bundle.grid.dt;
    double log_h = 0.0;
    log_out[0] = 0.0;
    for (std::size_t k = first; k < last; ++k) {
        if (tilt.has_beta()) {
            tilt.beta_at(bundle.grid.at(k), bundle.state(path, k), beta);
            const auto dw = bundle.increment(path, k);
            double b2 = 0.0, bdw = 0.0;
            for (std::size_t i = 0; i < bundle.dim; ++i) {
                b2 += beta[i] * beta[i];
                bdw += beta[i] * dw[i];
            }
            log_h += -0.5 * b2 * dt + bdw;
        }
        if (!log_jump_factor.empty()) {
            const auto counts = bundle.jumps(path, k);
            for (std::size_t j = 0; j < counts.size(); ++j)
                log_h += log_jump_factor[j] * static_cast<double>(counts[j]) - jump_drift[j] * dt;
        }
        if (!std::isfinite(log_h)) return false;
        log_out[k + 1 - first] = log_h;
    }
    return true;
}

struct JumpTerms {
    std::vector<double> log_factor;  // ln(1 + delta_j)
    std::vector<double> drift;       // delta_j lambda_j
};

JumpTerms jump_terms(const MeasureTilt& tilt, const PathBundle& bundle) {
    tilt.validate(bundle.atoms);
    JumpTerms terms;
    if (!tilt.has_delta()) return terms;
    for (const auto& a : bundle.atoms) {
        const double d = tilt.delta_at(a.size);
        terms.log_factor.push_back(std::log1p(d));
        terms.drift.push_back(d * a.rate);
    }
    return terms;
}

DensityPath allocate_density(const PathBundle& bundle, std::size_t first, std::size_t last) {
    DensityPath h;
    h.n_paths = bundle.n_paths;
    h.first_node = first;
    h.n_nodes = last - first + 1;
    h.log_values.assign(h.n_paths * h.n_nodes, 0.0);
    h.values.assign(h.n_paths * h.n_nodes, 1.0);
    return h;
}

}  // namespace

DensityPath stochastic_exponential(const MeasureTilt& tilt, const PathBundle& bundle, double from, double to) {
    const std::size_t first = node_of(bundle.grid, from);
    const std::size_t last = node_of(bundle.grid, to);
    if (last < first) throw InvalidGrid("density interval is reversed");
    const JumpTerms jt = jump_terms(tilt, bundle);
    DensityPath h = allocate_density(bundle, first, last);
    std::size_t bad = std::numeric_limits<std::size_t>::max();
#pragma omp parallel
    {
        std::vector<double> beta(bundle.dim);
#pragma omp for schedule(static)
        for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(h.n_paths); ++p) {
            const auto path = static_cast<std::size_t>(p);
            std::span<double> log_out(h.log_values.data() + path * h.n_nodes, h.n_nodes);
            if (!density_path(tilt, bundle, jt.log_factor, jt.drift, first, last, path, log_out, beta)) {
#pragma omp critical(fbsde_density)
                bad = std::min(bad, path);
            }
            for (std::size_t k = 0; k < h.n_nodes; ++k) h.values[path * h.n_nodes + k] = std::exp(log_out[k]);
        }
    }
    if (bad != std::numeric_limits<std::size_t>::max())
        throw DensityOverflow("non-finite log density on path " + std::to_string(bad));
    return h;
}

std::vector<double> tilt_brownian(const MeasureTilt& tilt, const PathBundle& bundle) {
    return tilt_brownian(tilt, bundle, bundle.dW);
}

std::vector<double> tilt_brownian(const MeasureTilt& tilt, const PathBundle& bundle,
                                  std::span<const double> increments) {
    std::vector<double> out(increments.begin(), increments.end());
    if (!tilt.has_beta()) return out;
    const double dt = bundle.grid.dt;
    const std::size_t n = bundle.n_steps();
#pragma omp parallel
    {
        std::vector<double> beta(bundle.dim);
#pragma omp for schedule(static)
        for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(bundle.n_paths); ++p) {
            const auto path = static_cast<std::size_t>(p);
            for (std::size_t k = 0; k < n; ++k) {
                tilt.beta_at(bundle.grid.at(k), bundle.state(path, k), beta);
                double* dw = out.data() + (path * n + k) * bundle.dim;
                for (std::size_t i = 0; i < bundle.dim; ++i) dw[i] -= beta[i] * dt;
            }
        }
    }
    return out;
}

JumpSpec tilt_compensator(const MeasureTilt& tilt, const JumpSpec& jumps) {
    tilt.validate(jumps.atoms);
    JumpSpec out = jumps;
    for (auto& a : out.atoms) a.rate *= 1.0 + tilt.delta_at(a.size);
    return out;
}

double pure_jump_girsanov_kernel(double mu, double r, double alpha, double lambda) {
    if (alpha == 0.0 || !(lambda > 0.0))
        throw DegenerateJumpModel("pure-jump kernel needs a nonzero jump size and positive intensity");
    const double delta = -(mu - r) / (std::expm1(alpha) * lambda);
    if (!(delta > -1.0))
        throw InvalidJumpKernel("pure-jump kernel delta = " + std::to_string(delta) +
                                " <= -1: no equivalent martingale measure");
    return delta;
}

PathBundle simulate_under_tilt(const DiffusionSpec& diff, const JumpSpec& jumps, const MeasureTilt& tilt,
                               const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed) {
    const JumpSpec tilted_jumps = tilt_compensator(tilt, jumps);
    const bool jump_shift = tilt.has_delta() && !jumps.atoms.empty();
    DiffusionSpec shifted = diff;
    if (tilt.has_beta() || jump_shift) {
        // dW^P = dW^{P2} + beta dt adds vol * (rho beta) dt, and compensating at the tilted
        // intensities adds sum_j gamma(x, z_j) delta(z_j) lambda_j dt.
        shifted.drift = [base = diff, tilt, jumps, jump_shift](double t, std::span<const double> x,
                                                               std::span<double> out) {
            const std::size_t d = base.dim;
            if (base.drift) base.drift(t, x, out); else std::fill(out.begin(), out.end(), 0.0);
            if (tilt.has_beta()) {
                thread_local std::vector<double> beta, vol;
                beta.assign(d, 0.0);
                vol.assign(d, 0.0);
                if (base.volatility) base.volatility(t, x, vol);
                tilt.beta_at(t, x, beta);
                for (std::size_t i = 0; i < d; ++i) {
                    double rb = 0.0;
                    for (std::size_t j = 0; j <= i; ++j)
                        rb += base.corr_chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * beta[j];
                    out[i] += vol[i] * rb;
                }
            }
            if (jump_shift) {
                thread_local std::vector<double> gamma;
                gamma.assign(d, 0.0);
                for (const auto& a : jumps.atoms) {
                    jumps.evaluate_impact(t, x, a.size, gamma);
                    const double w = tilt.delta_at(a.size) * a.rate;
                    for (std::size_t i = 0; i < d; ++i) out[i] += gamma[i] * w;
                }
            }
        };
    }
    PathBundle b = simulate_paths(shifted, tilted_jumps, grid, n_paths, seed);
    b.measure = tilt.label;
    return b;
}

double max_beta_norm(const MeasureTilt& tilt, const PathBundle& bundle, std::size_t stride) {
    if (!tilt.has_beta()) return 0.0;
    std::vector<double> beta(bundle.dim);
    double worst = 0.0;
    for (std::size_t p = 0; p < bundle.n_paths; p += std::max<std::size_t>(stride, 1))
        for (std::size_t k = 0; k <= bundle.n_steps(); ++k) {
            tilt.beta_at(bundle.grid.at(k), bundle.state(p, k), beta);
            double n2 = 0.0;
            for (double b : beta) n2 += b * b;
            worst = std::max(worst, std::sqrt(n2));
        }
    return worst;
}

namespace reference {

DensityPath stochastic_exponential_serial(const MeasureTilt& tilt, const PathBundle& bundle, double from, double to) {
    const std::size_t first = node_of(bundle.grid, from);
    const std::size_t last = node_of(bundle.grid, to);
    const JumpTerms jt = jump_terms(tilt, bundle);
    DensityPath h = allocate_density(bundle, first, last);
    std::vector<double> beta(bundle.dim);
    for (std::size_t p = 0; p < h.n_paths; ++p) {
        std::span<double> log_out(h.log_values.data() + p * h.n_nodes, h.n_nodes);
        if (!density_path(tilt, bundle, jt.log_factor, jt.drift, first, last, p, log_out, beta))
            throw DensityOverflow("non-finite log density on path " + std::to_string(p));
        for (std::size_t k = 0; k < h.n_nodes; ++k) h.values[p * h.n_nodes + k] = std::exp(log_out[k]);
    }
    return h;
}

}  // namespace reference

}  // namespace fbsde
