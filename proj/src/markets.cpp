#include "fbsde/markets.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fbsde/errors.hpp"

namespace fbsde {

Measure Measure::parse(const std::string& text) {
    if (text == "P") return P();
    if (text == "Q") return Q();
    if (text == "gop" || text == "GOP") return gop();
    const std::string prefix = "numeraire:";
    if (text.rfind(prefix, 0) == 0) {
        const std::string idx = text.substr(prefix.size());
        if (!idx.empty() && std::all_of(idx.begin(), idx.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            const unsigned long i = std::stoul(idx);
            if (i >= 1) return numeraire(i - 1);
        }
    }
    throw InvalidSpec("unknown measure '" + text + "' (expected P, Q, gop or numeraire:<i>)");
}

std::string Measure::label() const {
    switch (kind) {
        case Kind::P: return "P";
        case Kind::Q: return "Q";
        case Kind::GOP: return "gop";
        case Kind::Numeraire: return "numeraire:" + std::to_string(asset + 1);
    }
    return "?";
}

ContractSpec ContractSpec::call(std::size_t asset, double strike, double maturity) {
    return {[asset, strike](std::span<const double> x) { return std::max(x[asset] - strike, 0.0); }, maturity,
            "call"};
}

ContractSpec ContractSpec::put(std::size_t asset, double strike, double maturity) {
    return {[asset, strike](std::span<const double> x) { return std::max(strike - x[asset], 0.0); }, maturity, "put"};
}

ContractSpec ContractSpec::exchange(std::size_t long_asset, std::size_t short_asset, double maturity) {
    return {[long_asset, short_asset](std::span<const double> x) {
                return std::max(x[long_asset] - x[short_asset], 0.0);
            },
            maturity, "exchange"};
}

ContractSpec ContractSpec::identity(std::size_t asset, double maturity) {
    return {[asset](std::span<const double> x) { return x[asset]; }, maturity, "identity"};
}

ContractSpec ContractSpec::constant(double value, double maturity) {
    return {[value](std::span<const double>) { return value; }, maturity, "constant"};
}

double CollateralSpec::level(double v) const {
    switch (kind) {
        case Kind::None: return 0.0;
        case Kind::Full: return v;
        case Kind::Fraction: return kappa * v;
    }
    return 0.0;
}

std::pair<double, double> split_collateral(double c) { return {std::max(c, 0.0), std::max(-c, 0.0)}; }

void validate_market(const MarketSpec& m) {
    if (m.d == 0) throw InvalidMarket("market needs at least one asset");
    if (m.s0.size() != m.d) throw InvalidMarket("s0 has " + std::to_string(m.s0.size()) + " entries, expected d");
    for (double s : m.s0)
        if (!(s > 0.0)) throw InvalidMarket("initial prices must be positive");
    if (m.corr_chol.rows() != static_cast<Eigen::Index>(m.d) || m.corr_chol.cols() != static_cast<Eigen::Index>(m.d))
        throw InvalidMarket("corr_chol must be d x d");
    if (!m.r_repo.empty() && m.r_repo.size() != m.d) throw InvalidMarket("r_repo must have d entries");
    if (!m.dividend.empty() && m.dividend.size() != m.d) throw InvalidMarket("dividend must have d entries");
    auto check = [&](double rate, const std::string& name) {
        if (!std::isfinite(rate) || std::abs(rate) > m.rate_bound)
            throw InvalidMarket("rate " + name + " = " + std::to_string(rate) + " exceeds the bound " +
                                std::to_string(m.rate_bound));
    };
    check(m.r, "r");
    check(m.r_cl, "r_cl");
    check(m.r_cb, "r_cb");
    for (std::size_t i = 0; i < m.d; ++i) {
        check(m.repo(i), "r_repo[" + std::to_string(i) + "]");
        check(m.yield(i), "dividend[" + std::to_string(i) + "]");
    }
    if (m.has_jumps() && m.jumps.total_rate() < 0.0) throw InvalidMarket("negative jump intensity");
}

DiffusionSpec market_diffusion(const MarketSpec& m) {
    DiffusionSpec diff;
    diff.dim = m.d;
    diff.corr_chol = m.corr_chol;
    diff.initial_state = m.s0;
    diff.scheme = m.scheme;
    if (m.mu)
        diff.drift = [mu = m.mu](double t, std::span<const double> x, std::span<double> out) {
            mu(t, x, out);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] *= x[i];
        };
    if (m.sigma)
        diff.volatility = [sigma = m.sigma](double t, std::span<const double> x, std::span<double> out) {
            sigma(t, x, out);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] *= x[i];
        };
    return diff;
}

JumpSpec market_jumps(const MarketSpec& m) {
    JumpSpec j = m.jumps;
    if (j.atoms.empty()) return JumpSpec::none();
    j.impact = [](double, std::span<const double> x, double z, std::span<double> out) {
        const double factor = std::expm1(z);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
    };
    return j;
}

MeasureTilt p_to_q_tilt(const MarketSpec& market) {
    validate_market(market);
    if (market.has_diffusion()) {
        // Surfaces SingularVolatility here rather than inside a parallel kernel.
        (void)theta_kernel(market, 0.0, market.s0);
        MeasureTilt tilt;
        tilt.label = "Q";
        tilt.beta = [market](double t, std::span<const double> x, std::span<double> out) {
            theta_kernel(market, t, x, out);
            for (double& b : out) b = -b;
        };
        return tilt;
    }
    if (market.has_jumps()) {
        if (market.d != 1 || market.jumps.atoms.size() != 1)
            throw UnsupportedConfiguration("pure-jump measure change needs one asset and one jump size");
        std::vector<double> mu(1, 0.0);
        if (market.mu) market.mu(0.0, market.s0, mu);
        const auto& atom = market.jumps.atoms[0];
        const double delta = pure_jump_girsanov_kernel(mu[0] + market.yield(0), market.repo(0), atom.size, atom.rate);
        return MeasureTilt::constant({}, delta, "Q");
    }
    return MeasureTilt::identity("Q");
}

MeasureTilt numeraire_tilt(const MarketSpec& market, std::size_t asset) {
    if (asset >= market.d)
        throw InvalidNumeraire("numeraire asset " + std::to_string(asset + 1) + " is not traded in a " +
                               std::to_string(market.d) + "-asset market");
    if (asset >= market.s0.size() || !(market.s0[asset] > 0.0))
        throw InvalidNumeraire("numeraire asset must have a positive price");
    if (market.repo(asset) != market.r)
        throw UnsupportedConfiguration("numeraire change needs the repo rate of the numeraire to equal r");
    if (market.has_jumps()) throw UnsupportedConfiguration("numeraire assets with jumps are not supported");
    if (!market.has_diffusion()) return MeasureTilt::identity("numeraire:" + std::to_string(asset + 1));
    MeasureTilt tilt;
    tilt.label = "numeraire:" + std::to_string(asset + 1);
    tilt.beta = [sigma = market.sigma, chol = market.corr_chol, asset, d = market.d](
                    double t, std::span<const double> x, std::span<double> out) {
        thread_local std::vector<double> s;
        s.assign(d, 0.0);
        sigma(t, x, s);
        for (std::size_t j = 0; j < d; ++j)
            out[j] = s[asset] * chol(static_cast<Eigen::Index>(asset), static_cast<Eigen::Index>(j));
    };
    return tilt;
}

MeasureTilt measure_tilt(const MarketSpec& market, const Measure& measure) {
    switch (measure.kind) {
        case Measure::Kind::P:
        case Measure::Kind::GOP: return MeasureTilt::identity("P");
        case Measure::Kind::Q: return p_to_q_tilt(market);
        case Measure::Kind::Numeraire:
            return compose(p_to_q_tilt(market), numeraire_tilt(market, measure.asset), measure.label());
    }
    return MeasureTilt::identity("P");
}

PathBundle simulate_market(const MarketSpec& market, const Measure& measure, const TimeGrid& grid,
                           std::size_t n_paths, std::uint64_t seed) {
    validate_market(market);
    const MeasureTilt tilt = measure_tilt(market, measure);
    const DiffusionSpec diff = market_diffusion(market);
    const JumpSpec jumps = market_jumps(market);
    PathBundle b = (tilt.has_beta() || tilt.has_delta()) ? simulate_under_tilt(diff, jumps, tilt, grid, n_paths, seed)
                                                         : simulate_paths(diff, jumps, grid, n_paths, seed);
    b.measure = measure.kind == Measure::Kind::GOP ? "P" : measure.label();
    return b;
}

BsdeProblem build_collateral_bsde(const MarketSpec& market, const ContractSpec& contract,
                                  const CollateralSpec& coll, const Measure& measure) {
    validate_market(market);
    if (!contract.payoff) throw InvalidSpec("contract has no payoff");
    BsdeProblem problem;
    problem.terminal = contract.payoff;
    problem.discount = [r = market.r](double, std::span<const double>) { return r; };
    const double borrow = market.r - market.r_cb;
    const double lend = market.r - market.r_cl;
    if (coll.active() && (borrow != 0.0 || lend != 0.0)) {
        problem.driver = [coll, borrow, lend](double, std::span<const double>, double y, std::span<const double>,
                                              double) {
            const auto [plus, minus] = split_collateral(coll.level(y));
            return borrow * plus - lend * minus;
        };
    }
    switch (measure.kind) {
        case Measure::Kind::P:
        case Measure::Kind::GOP:
            problem.tilt = p_to_q_tilt(market);
            problem.tilt.label = "P";
            problem.u_weights = jump_u_weights(problem.tilt, market.jumps.atoms);
            break;
        case Measure::Kind::Q: problem.tilt = MeasureTilt::identity("Q"); break;
        case Measure::Kind::Numeraire:
            throw InvalidSpec("build the Q problem and apply change_numeraire for numeraire measures");
    }
    return problem;
}

HedgeRatios extract_hedge(const ValueSurface& surface, const MarketSpec& market, const PathBundle& bundle) {
    if (surface.n_paths != bundle.n_paths || surface.n_steps != bundle.n_steps() || surface.dim != market.d)
        throw InvalidSpec("surface, bundle and market do not match");
    const std::size_t d = market.d;
    HedgeRatios h;
    h.n_paths = surface.n_paths;
    h.n_steps = surface.n_steps;
    h.dim = d;
    h.xi.assign(h.n_paths * h.n_steps * d, 0.0);
    h.psi.assign(h.xi.size(), 0.0);
    std::vector<double> sigma(d, 0.0);
    for (std::size_t p = 0; p < h.n_paths; ++p) {
        for (std::size_t k = 0; k < h.n_steps; ++k) {
            const double t = bundle.grid.at(k);
            const auto s = bundle.state(p, k);
            const auto z = surface.z(p, k);
            if (market.sigma) market.sigma(t, s, sigma);
            double* xi = h.xi.data() + (p * h.n_steps + k) * d;
            // xi M = Z with M = diag(S sigma) rho lower triangular: back substitution.
            for (std::size_t jj = d; jj-- > 0;) {
                double rhs = z[jj];
                for (std::size_t i = jj + 1; i < d; ++i)
                    rhs -= xi[i] * s[i] * sigma[i] *
                           market.corr_chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(jj));
                const double pivot =
                    s[jj] * sigma[jj] * market.corr_chol(static_cast<Eigen::Index>(jj), static_cast<Eigen::Index>(jj));
                if (std::abs(pivot) < 1e-14) throw SingularVolatility("diag(S) Sigma rho is singular");
                xi[jj] = rhs / pivot;
            }
            for (std::size_t i = 0; i < d; ++i)
                h.psi[(p * h.n_steps + k) * d + i] = -xi[i] * s[i] / std::exp(market.repo(i) * t);
        }
    }
    return h;
}

DensityPath gop_path(const MarketSpec& market, const PathBundle& bundle) {
    if (bundle.measure != "P") throw InvalidSpec("GOP paths need a bundle simulated under P");
    const std::size_t n = bundle.n_steps();
    const double dt = bundle.grid.dt;
    DensityPath g;
    g.n_paths = bundle.n_paths;
    g.first_node = 0;
    g.n_nodes = n + 1;
    g.log_values.assign(g.n_paths * g.n_nodes, 0.0);
    g.values.assign(g.log_values.size(), 1.0);
    if (market.has_diffusion()) (void)theta_kernel(market, bundle.grid.t0, market.s0);
    bool finite = true;
#pragma omp parallel for schedule(static) reduction(&& : finite)
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(g.n_paths); ++pp) {
        const auto p = static_cast<std::size_t>(pp);
        thread_local std::vector<double> theta;
        theta.assign(market.d, 0.0);
        double log_s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double drift = market.r;
            if (market.has_diffusion()) {
                theta_kernel(market, bundle.grid.at(k), bundle.state(p, k), theta);
                const auto dw = bundle.increment(p, k);
                double t2 = 0.0, tdw = 0.0;
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    t2 += theta[i] * theta[i];
                    tdw += theta[i] * dw[i];
                }
                log_s += (drift + 0.5 * t2) * dt + tdw;
            } else {
                log_s += drift * dt;
            }
            g.log_values[p * g.n_nodes + k + 1] = log_s;
            g.values[p * g.n_nodes + k + 1] = std::exp(log_s);
        }
        finite = finite && std::isfinite(log_s);
    }
    if (!finite) throw DensityOverflow("non-finite GOP value");
    return g;
}

ValueSurface real_world_price(const MarketSpec& market, const ContractSpec& contract, const CollateralSpec& coll,
                              const PathBundle& bundle, const SolverConfig& cfg) {
    if (market.has_jumps())
        throw UnsupportedConfiguration("real-world pricing is implemented for diffusion markets only");
    const BsdeProblem problem = build_collateral_bsde(market, contract, coll, Measure::P());
    DensityPath deflator = gop_path(market, bundle);
    for (std::size_t i = 0; i < deflator.log_values.size(); ++i) {
        deflator.log_values[i] = -deflator.log_values[i];
        deflator.values[i] = 1.0 / deflator.values[i];
    }
    return solve_deflated(problem, bundle, deflator, cfg);
}

NumeraireChange change_numeraire(const BsdeProblem& problem, const MarketSpec& market,
                                 std::optional<std::size_t> asset, double maturity) {
    if (!asset) return {problem, MeasureTilt::identity("Q")};
    if (problem.tilt.has_beta() || problem.tilt.has_delta())
        throw UnsupportedConfiguration("change_numeraire expects a problem written under Q");
    if (!problem.terminal) throw InvalidSpec("problem has no terminal condition");
    const std::size_t i = *asset;
    NumeraireChange out{problem, numeraire_tilt(market, i)};
    const double k = market.yield(i);
    const double r = market.r;

    out.problem.terminal = [g = problem.terminal, i, k, maturity](std::span<const double> x) {
        return g(x) / (x[i] * std::exp(k * maturity));
    };
    out.problem.discount = [alpha = problem.discount, r](double t, std::span<const double> x) {
        return (alpha ? alpha(t, x) : 0.0) - r;
    };
    if (problem.driver) {
        out.problem.driver = [f = problem.driver, sigma = market.sigma, chol = market.corr_chol, i, k,
                              d = market.d](double t, std::span<const double> x, double y, std::span<const double> z,
                                            double u) {
            const double n = x[i] * std::exp(k * t);
            thread_local std::vector<double> s, zz;
            s.assign(d, 0.0);
            zz.assign(d, 0.0);
            if (sigma) sigma(t, x, s);
            for (std::size_t j = 0; j < d; ++j)
                zz[j] = n * z[j] + n * y * s[i] * chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            return f(t, x, n * y, zz, n * u) / n;
        };
    }
    out.problem.tilt = MeasureTilt::identity(out.tilt.label);
    return out;
}

namespace {

PriceEstimate from_surface(const std::string& label, const ValueSurface& s, double scale) {
    PriceEstimate e;
    e.measure = label;
    e.y0 = scale * s.y0;
    e.std_error = std::abs(scale) * s.std_error;
    e.iterations = s.iterations;
    e.gaps = s.gaps;
    e.pathwise = s.pathwise;
    if (scale != 1.0)
        for (double& v : e.pathwise) v *= scale;
    return e;
}

void require_measure(const PathBundle& bundle, const Measure& measure) {
    const std::string want = measure.kind == Measure::Kind::GOP ? "P" : measure.label();
    if (bundle.measure != want)
        throw InvalidSpec("bundle was simulated under " + bundle.measure + ", expected " + want);
}

}  // namespace

PriceEstimate exchange_option_numeraire_price(const MarketSpec& market, const CollateralSpec& coll,
                                              const PathBundle& bundle, const SolverConfig& cfg,
                                              double maturity) {
    if (market.d != 2) throw InvalidSpec("the exchange option needs a two-asset market");
    if (market.repo(1) != market.r)
        throw UnsupportedConfiguration("the exchange option under Q^{S2} requires r^2 = r");
    const Measure measure = Measure::numeraire(1);
    require_measure(bundle, measure);
    const BsdeProblem q = build_collateral_bsde(market, ContractSpec::exchange(0, 1, maturity), coll, Measure::Q());
    const NumeraireChange nc = change_numeraire(q, market, 1, maturity);
    const ValueSurface s = solve_backward(nc.problem, bundle, cfg);
    return from_surface(measure.label(), s, market.s0[1] * std::exp(market.yield(1) * bundle.grid.t0));
}

ValueSurface pure_jump_market_price(const MarketSpec& market, const ContractSpec& contract,
                                    const CollateralSpec& coll, const PathBundle& bundle, const SolverConfig& cfg,
                                    const Measure& measure) {
    if (market.d != 1 || market.has_diffusion() || market.jumps.kind != JumpKind::FixedSizePoisson)
        throw InvalidSpec("pure-jump pricing needs one asset driven by a fixed-size Poisson process only");
    if (measure.kind != Measure::Kind::P && measure.kind != Measure::Kind::Q)
        throw InvalidSpec("pure-jump pricing runs under P or Q");
    require_measure(bundle, measure);
    const BsdeProblem problem = build_collateral_bsde(market, contract, coll, measure);
    return solve_backward(problem, bundle, cfg);
}

PriceEstimate price_contract(const MarketSpec& market, const ContractSpec& contract, const CollateralSpec& coll,
                             const Measure& measure, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                             const SolverConfig& cfg) {
    if (std::abs(grid.T - contract.maturity) > 1e-12 * std::max(1.0, contract.maturity))
        throw InvalidSpec("grid horizon does not match the contract maturity");
    const PathBundle bundle = simulate_market(market, measure, grid, n_paths, seed);
    switch (measure.kind) {
        case Measure::Kind::P: {
            const BsdeProblem problem = build_collateral_bsde(market, contract, coll, measure);
            const DensityPath h = stochastic_exponential(problem.tilt, bundle, grid.t0, grid.T);
            return from_surface(measure.label(), price_under_P(problem, bundle, h, cfg), 1.0);
        }
        case Measure::Kind::Q: {
            const BsdeProblem problem = build_collateral_bsde(market, contract, coll, measure);
            return from_surface(measure.label(), solve_backward(problem, bundle, cfg), 1.0);
        }
        case Measure::Kind::GOP:
            return from_surface(measure.label(), real_world_price(market, contract, coll, bundle, cfg), 1.0);
        case Measure::Kind::Numeraire: {
            const BsdeProblem q = build_collateral_bsde(market, contract, coll, Measure::Q());
            const NumeraireChange nc = change_numeraire(q, market, measure.asset, contract.maturity);
            const double n0 = market.s0[measure.asset] * std::exp(market.yield(measure.asset) * grid.t0);
            return from_surface(measure.label(), solve_backward(nc.problem, bundle, cfg), n0);
        }
    }
    throw InvalidSpec("unknown measure");
}

std::vector<double> discounted_cum_dividend_increments(const MarketSpec& market, const PathBundle& bundle,
                                                       std::size_t asset) {
    if (asset >= bundle.dim) throw IndexError("asset index out of range");
    const std::size_t n = bundle.n_steps();
    const double dt = bundle.grid.dt;
    const double ri = market.repo(asset);
    const double k = market.yield(asset);
    std::vector<double> out(bundle.n_paths * n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(bundle.n_paths); ++pp) {
        const auto p = static_cast<std::size_t>(pp);
        for (std::size_t s = 0; s < n; ++s) {
            const double disc0 = std::exp(-ri * bundle.grid.at(s));
            const double disc1 = std::exp(-ri * bundle.grid.at(s + 1));
            const double s0 = bundle.state(p, s)[asset];
            const double s1 = bundle.state(p, s + 1)[asset];
            out[p * n + s] = disc1 * s1 - disc0 * s0 + disc0 * k * s0 * dt;
        }
    }
    return out;
}

namespace {

// Cholesky factor of a correlation matrix, tolerating rank deficiency (e.g. rho = 1).
Eigen::MatrixXd correlation_factor(const Eigen::MatrixXd& corr) {
    const Eigen::Index d = corr.rows();
    if (corr.cols() != d) throw InvalidMarket("correlation matrix must be square");
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        if (std::abs(corr(j, j) - 1.0) > 1e-12) throw InvalidMarket("correlation matrix needs a unit diagonal");
        double diag = corr(j, j);
        for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (diag < -1e-12) throw InvalidMarket("correlation matrix is not positive semidefinite");
        l(j, j) = std::sqrt(std::max(diag, 0.0));
        for (Eigen::Index i = j + 1; i < d; ++i) {
            if (std::abs(corr(i, j) - corr(j, i)) > 1e-12) throw InvalidMarket("correlation matrix is not symmetric");
            double v = corr(i, j);
            for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = l(j, j) > 1e-14 ? v / l(j, j) : 0.0;
        }
    }
    return l;
}

CoefficientFn constant_coefficient(std::vector<double> v) {
    return [v = std::move(v)](double, std::span<const double>, std::span<double> out) {
        std::copy(v.begin(), v.end(), out.begin());
    };
}

}  // namespace

MarketSpec black_scholes_market(std::vector<double> s0, std::vector<double> mu, std::vector<double> sigma,
                                const Eigen::MatrixXd& corr, double r) {
    const std::size_t d = s0.size();
    if (mu.size() != d || sigma.size() != d) throw InvalidMarket("s0, mu and sigma must have the same length");
    MarketSpec m;
    m.d = d;
    m.s0 = std::move(s0);
    m.mu = constant_coefficient(std::move(mu));
    m.sigma = constant_coefficient(std::move(sigma));
    m.corr_chol = correlation_factor(corr);
    m.r = r;
    return m;
}

MarketSpec pure_jump_market(double s0, double mu, double r, double alpha, double lambda) {
    MarketSpec m;
    m.d = 1;
    m.s0 = {s0};
    m.mu = constant_coefficient({mu});
    m.corr_chol = Eigen::MatrixXd::Identity(1, 1);
    m.jumps = JumpSpec::fixed_size(alpha, lambda);
    m.r = r;
    return m;
}

}  // namespace fbsde
