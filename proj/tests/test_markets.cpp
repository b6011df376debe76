#include <cmath>

#include <gtest/gtest.h>

#include "fbsde/errors.hpp"
#include "fbsde/markets.hpp"
#include "fbsde/oracles.hpp"
#include "helpers.hpp"

namespace fbsde {
namespace {

using testing::stats;

Eigen::MatrixXd corr2(double rho) {
    Eigen::MatrixXd c(2, 2);
    c << 1.0, rho, rho, 1.0;
    return c;
}

MarketSpec exchange_market(Scheme scheme = Scheme::LogEuler) {
    auto m = black_scholes_market({100.0, 100.0}, {0.08, 0.06}, {0.2, 0.3}, corr2(0.5), 0.02);
    m.scheme = scheme;
    return m;
}

MarketSpec call_market() {
    auto m = black_scholes_market({100.0}, {0.08}, {0.2}, Eigen::MatrixXd::Identity(1, 1), 0.02);
    m.scheme = Scheme::LogEuler;
    return m;
}

double paired(const PriceEstimate& a, const PriceEstimate& b) { return paired_stderr(a.pathwise, b.pathwise); }

TEST(Measure, ParseAndLabel) {
    EXPECT_EQ(Measure::parse("P").kind, Measure::Kind::P);
    EXPECT_EQ(Measure::parse("gop").kind, Measure::Kind::GOP);
    const auto n = Measure::parse("numeraire:2");
    EXPECT_EQ(n.kind, Measure::Kind::Numeraire);
    EXPECT_EQ(n.asset, 1u);
    EXPECT_EQ(n.label(), "numeraire:2");
    EXPECT_THROW(Measure::parse("numeraire:0"), InvalidSpec);
    EXPECT_THROW(Measure::parse("R"), InvalidSpec);
}

TEST(Collateral, SignSplit) {
    for (double c : {-3.0, -0.5, 0.0, 0.25, 7.0}) {
        const auto [plus, minus] = split_collateral(c);
        EXPECT_EQ(plus - minus, c);
        EXPECT_EQ(plus * minus, 0.0);
        EXPECT_GE(plus, 0.0);
        EXPECT_GE(minus, 0.0);
    }
    EXPECT_EQ(CollateralSpec::fraction(0.4).level(10.0), 4.0);
    EXPECT_EQ(CollateralSpec::full().level(-2.0), -2.0);
    EXPECT_FALSE(CollateralSpec::none().active());
}

TEST(ValidateMarket, RateBound) {
    auto m = call_market();
    m.r_cl = 2.0;
    EXPECT_THROW(validate_market(m), InvalidMarket);
    EXPECT_THROW(build_collateral_bsde(m, ContractSpec::constant(1.0, 1.0), CollateralSpec::full(), Measure::Q()),
                 InvalidMarket);
    m = call_market();
    m.s0 = {-1.0};
    EXPECT_THROW(validate_market(m), InvalidMarket);
}

TEST(ValidateMarket, CorrelationMatrix) {
    EXPECT_THROW(black_scholes_market({1.0, 1.0}, {0.0, 0.0}, {0.1, 0.1}, corr2(1.2), 0.0), InvalidMarket);
    const auto m = black_scholes_market({1.0, 1.0}, {0.0, 0.0}, {0.1, 0.1}, corr2(1.0), 0.0);
    EXPECT_NEAR(m.corr_chol(1, 0), 1.0, 1e-15);
    EXPECT_EQ(m.corr_chol(1, 1), 0.0);
}

TEST(CollateralBsde, UncollateralizedCallIsBlackScholes) {
    const auto m = call_market();
    const auto grid = build_grid(0.0, 1.0, 20);
    const auto est = price_contract(m, ContractSpec::call(0, 100.0, 1.0), CollateralSpec::none(), Measure::Q(), grid,
                                    100000, 42, SolverConfig{});
    const double bs = oracles::black_scholes_call(100.0, 100.0, 0.02, 0.2, 1.0).value;
    EXPECT_NEAR(est.y0, bs, 3.0 * est.std_error);
    EXPECT_EQ(est.iterations, 1);
}

TEST(CollateralBsde, FullCollateralDiscountsAtCollateralRate) {
    auto m = call_market();
    m.r = 0.05;
    m.r_cl = m.r_cb = 0.03;
    const auto grid = build_grid(0.0, 1.0, 50);
    const auto est = price_contract(m, ContractSpec::constant(1.0, 1.0), CollateralSpec::full(), Measure::Q(), grid,
                                    100000, 42, SolverConfig{});
    EXPECT_NEAR(est.y0, 0.970445533548508, 0.005 * 0.970445533548508);
}

TEST(CollateralBsde, PartialCollateralClosedForm) {
    // C = kappa V: discount rate r - kappa (r - r_c).
    auto m = call_market();
    m.r = 0.05;
    m.r_cl = m.r_cb = 0.01;
    const auto grid = build_grid(0.0, 1.0, 50);
    const auto est = price_contract(m, ContractSpec::constant(1.0, 1.0), CollateralSpec::fraction(0.5), Measure::Q(),
                                    grid, 20000, 42, SolverConfig{});
    const double want = std::exp(-(0.05 - 0.5 * 0.04));
    EXPECT_NEAR(est.y0, want, 0.005 * want);
}

TEST(CollateralBsde, PAndQAgree) {
    auto m = call_market();
    m.r = 0.05;
    m.r_cl = m.r_cb = 0.03;
    const auto grid = build_grid(0.0, 1.0, 50);
    const auto contract = ContractSpec::call(0, 100.0, 1.0);
    const auto q = price_contract(m, contract, CollateralSpec::full(), Measure::Q(), grid, 50000, 42, SolverConfig{});
    const auto p = price_contract(m, contract, CollateralSpec::full(), Measure::P(), grid, 50000, 42, SolverConfig{});
    EXPECT_LE(std::abs(p.y0 - q.y0), 2.0 * paired(p, q));
}

TEST(CollateralBsde, NumeraireKindIsRejected) {
    EXPECT_THROW(build_collateral_bsde(call_market(), ContractSpec::constant(1.0, 1.0), CollateralSpec::none(),
                                       Measure::numeraire(0)),
                 InvalidSpec);
}

TEST(ExtractHedge, ScalarExample) {
    const auto m = call_market();
    const auto b = simulate_market(m, Measure::Q(), build_grid(0.0, 1.0, 1), 1, 1);
    ValueSurface s;
    s.n_paths = 1;
    s.n_steps = 1;
    s.dim = 1;
    s.Z = {2.0};
    const auto h = extract_hedge(s, m, b);
    EXPECT_NEAR(h.xi_at(0, 0, 0), 0.1, 1e-15);
    s.Z = {0.0};
    const auto h0 = extract_hedge(s, m, b);
    EXPECT_EQ(h0.xi_at(0, 0, 0), 0.0);
    EXPECT_EQ(h0.psi_at(0, 0, 0), 0.0);
}

TEST(ExtractHedge, InvertsZAndSatisfiesRepoConstraint) {
    auto m = exchange_market(Scheme::Euler);
    m.r_repo = {0.03, 0.02};
    const auto b = simulate_market(m, Measure::Q(), build_grid(0.0, 1.0, 10), 5000, 3);
    const auto q = build_collateral_bsde(m, ContractSpec::exchange(0, 1, 1.0), CollateralSpec::none(), Measure::Q());
    const auto s = solve_backward(q, b, SolverConfig{});
    const auto h = extract_hedge(s, m, b);
    for (std::size_t p = 0; p < b.n_paths; p += 50)
        for (std::size_t k = 0; k < 10; ++k) {
            const auto x = b.state(p, k);
            const double t = b.grid.at(k);
            // Z = xi diag(S) Sigma rho
            for (std::size_t j = 0; j < 2; ++j) {
                double zj = 0.0;
                for (std::size_t i = j; i < 2; ++i)
                    zj += h.xi_at(p, k, i) * x[i] * (i == 0 ? 0.2 : 0.3) *
                          m.corr_chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                EXPECT_NEAR(zj, s.z(p, k)[j], 1e-12 * (1.0 + std::abs(s.z(p, k)[j])));
            }
            for (std::size_t i = 0; i < 2; ++i) {
                const double lhs = h.psi_at(p, k, i) * std::exp(m.repo(i) * t);
                const double rhs = h.xi_at(p, k, i) * x[i];
                EXPECT_LE(std::abs(lhs + rhs), 1e-12 * std::max(1e-300, std::abs(rhs)));
            }
        }
}

TEST(GopPath, ZeroThetaIsBankAccount) {
    auto m = call_market();
    m.mu = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.02; };
    const auto b = simulate_market(m, Measure::P(), build_grid(0.0, 1.0, 10), 20, 1);
    const auto g = gop_path(m, b);
    for (std::size_t p = 0; p < 20; ++p)
        for (std::size_t k = 0; k <= 10; ++k) EXPECT_NEAR(g.value(p, k), std::exp(0.02 * b.grid.at(k)), 1e-14);
}

TEST(GopPath, ScalarExample) {
    auto m = call_market();
    m.mu = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.07; };  // theta = 0.25
    Increments inc;
    inc.n_paths = 1;
    inc.n_steps = 1;
    inc.dim = 1;
    inc.dW = {0.0};
    const auto b = integrate_paths(market_diffusion(m), JumpSpec::none(), build_grid(0.0, 1.0, 1), inc);
    EXPECT_NEAR(gop_path(m, b).value(0, 1), 1.052586006894356, 1e-14);
}

TEST(GopPath, RequiresPBundle) {
    const auto m = call_market();
    const auto b = simulate_market(m, Measure::Q(), build_grid(0.0, 1.0, 4), 4, 1);
    EXPECT_THROW(gop_path(m, b), InvalidSpec);
}

TEST(GopPath, DeflatorIdentity) {
    const auto m = exchange_market(Scheme::Euler);
    const auto b = simulate_market(m, Measure::P(), build_grid(0.0, 1.0, 50), 2000, 5);
    const auto g = gop_path(m, b);
    const auto tilt = p_to_q_tilt(m);
    for (std::size_t k0 : {0u, 20u}) {
        const auto h = stochastic_exponential(tilt, b, b.grid.at(k0), 1.0);
        const double bank = std::exp(-m.r * (1.0 - b.grid.at(k0)));
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            const double lhs = bank * h.value(p, 50);
            const double rhs = g.value(p, k0) / g.value(p, 50);
            EXPECT_LE(std::abs(lhs - rhs), 1e-10 * rhs);
        }
    }
}

TEST(RealWorldPrice, MatchesDensityRepresentation) {
    auto m = call_market();
    m.r = 0.05;
    m.r_cl = m.r_cb = 0.03;
    const auto grid = build_grid(0.0, 1.0, 20);
    const auto b = simulate_market(m, Measure::P(), grid, 20000, 9);
    const auto contract = ContractSpec::call(0, 100.0, 1.0);
    const auto rw = real_world_price(m, contract, CollateralSpec::full(), b, SolverConfig{});
    const auto prob = build_collateral_bsde(m, contract, CollateralSpec::full(), Measure::P());
    const auto pp = price_under_P(prob, b, stochastic_exponential(prob.tilt, b, 0.0, 1.0), SolverConfig{});
    EXPECT_NEAR(rw.y0, pp.y0, 1e-10 * std::abs(pp.y0));
}

TEST(RealWorldPrice, ZeroThetaIsDiscountedPExpectation) {
    auto m = call_market();
    m.mu = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.02; };
    const auto b = simulate_market(m, Measure::P(), build_grid(0.0, 1.0, 10), 20000, 9);
    const auto rw = real_world_price(m, ContractSpec::call(0, 100.0, 1.0), CollateralSpec::none(), b, SolverConfig{});
    double mean = 0.0;
    for (std::size_t p = 0; p < b.n_paths; ++p) mean += std::max(b.state(p, 10)[0] - 100.0, 0.0);
    mean /= static_cast<double>(b.n_paths);
    EXPECT_NEAR(rw.y0, std::exp(-0.02) * mean, 1e-10);
}

TEST(RealWorldPrice, AgreesWithQ) {
    const auto m = call_market();
    const auto grid = build_grid(0.0, 1.0, 20);
    const auto contract = ContractSpec::call(0, 100.0, 1.0);
    const auto q = price_contract(m, contract, CollateralSpec::none(), Measure::Q(), grid, 50000, 4, SolverConfig{});
    const auto g = price_contract(m, contract, CollateralSpec::none(), Measure::gop(), grid, 50000, 4, SolverConfig{});
    EXPECT_LE(std::abs(q.y0 - g.y0), 2.0 * paired(q, g));
}

TEST(RealWorldPrice, JumpsUnsupported) {
    const auto m = pure_jump_market(1.0, 0.05, 0.01, 0.1, 2.0);
    const auto b = simulate_market(m, Measure::P(), build_grid(0.0, 1.0, 4), 10, 1);
    EXPECT_THROW(real_world_price(m, ContractSpec::constant(1.0, 1.0), CollateralSpec::none(), b, SolverConfig{}),
                 UnsupportedConfiguration);
}

TEST(ExchangeOption, MargrabeUnderSecondAssetMeasure) {
    const auto m = exchange_market();
    const auto b = simulate_market(m, Measure::numeraire(1), build_grid(0.0, 1.0, 25), 400000, 7);
    const auto est = exchange_option_numeraire_price(m, CollateralSpec::none(), b, SolverConfig{}, 1.0);
    const double want = oracles::margrabe(100.0, 100.0, 0.2, 0.3, 0.5, 1.0).value;
    EXPECT_NEAR(est.y0, want, 0.01 * want);
    EXPECT_EQ(est.measure, "numeraire:2");
}

TEST(ExchangeOption, FullCollateralAtFundingRateIsMargrabe) {
    auto m = exchange_market();
    m.r_cl = m.r_cb = m.r;
    const auto b = simulate_market(m, Measure::numeraire(1), build_grid(0.0, 1.0, 25), 400000, 7);
    const auto est = exchange_option_numeraire_price(m, CollateralSpec::full(), b, SolverConfig{}, 1.0);
    const double want = oracles::margrabe(100.0, 100.0, 0.2, 0.3, 0.5, 1.0).value;
    EXPECT_NEAR(est.y0, want, 0.01 * want);
}

TEST(ExchangeOption, IdenticalAssetsAreWorthless) {
    auto m = black_scholes_market({100.0, 100.0}, {0.06, 0.06}, {0.2, 0.2}, corr2(1.0), 0.02);
    m.scheme = Scheme::LogEuler;
    const auto b = simulate_market(m, Measure::numeraire(1), build_grid(0.0, 1.0, 25), 20000, 7);
    const auto est = exchange_option_numeraire_price(m, CollateralSpec::none(), b, SolverConfig{}, 1.0);
    EXPECT_LT(std::abs(est.y0), 1e-10);
}

TEST(ExchangeOption, RequiresRepoEqualToFunding) {
    auto m = exchange_market();
    m.r_repo = {0.02, 0.03};
    EXPECT_THROW(simulate_market(m, Measure::numeraire(1), build_grid(0.0, 1.0, 4), 10, 1), UnsupportedConfiguration);
    const auto ok = exchange_market();
    const auto b = simulate_market(ok, Measure::numeraire(1), build_grid(0.0, 1.0, 4), 10, 1);
    EXPECT_THROW(exchange_option_numeraire_price(m, CollateralSpec::none(), b, SolverConfig{}, 1.0),
                 UnsupportedConfiguration);
}

TEST(ChangeNumeraire, BankAccountIsIdentity) {
    const auto m = exchange_market();
    const auto q = build_collateral_bsde(m, ContractSpec::exchange(0, 1, 1.0), CollateralSpec::none(), Measure::Q());
    const auto nc = change_numeraire(q, m, std::nullopt, 1.0);
    EXPECT_FALSE(nc.tilt.has_beta());
    EXPECT_FALSE(nc.tilt.has_delta());
    const std::vector<double> x{110.0, 90.0};
    EXPECT_EQ(nc.problem.terminal(x), q.terminal(x));
    EXPECT_EQ(nc.problem.discount(0.5, x), q.discount(0.5, x));
}

TEST(ChangeNumeraire, TiltKernelAndDensity) {
    const auto m = exchange_market();
    const auto q = build_collateral_bsde(m, ContractSpec::exchange(0, 1, 1.0), CollateralSpec::none(), Measure::Q());
    const auto nc = change_numeraire(q, m, 1, 1.0);
    std::vector<double> beta(2);
    nc.tilt.beta_at(0.0, m.s0, beta);
    EXPECT_NEAR(beta[0], 0.3 * 0.5, 1e-15);
    EXPECT_NEAR(beta[1], 0.3 * std::sqrt(0.75), 1e-15);
    const auto b = simulate_market(m, Measure::Q(), build_grid(0.0, 1.0, 25), 5000, 2);
    for (std::size_t k0 : {0u, 10u}) {
        const auto h = stochastic_exponential(nc.tilt, b, b.grid.at(k0), 1.0);
        const double bank = std::exp(-m.r * (1.0 - b.grid.at(k0)));
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            const double ratio = bank * b.state(p, 25)[1] / b.state(p, k0)[1];
            EXPECT_LE(std::abs(h.value(p, 25) - ratio), 1e-10 * ratio);
        }
    }
}

TEST(ChangeNumeraire, PriceInvariance) {
    const auto m = exchange_market();
    const auto grid = build_grid(0.0, 1.0, 25);
    const auto contract = ContractSpec::identity(0, 1.0);
    const auto q = price_contract(m, contract, CollateralSpec::none(), Measure::Q(), grid, 100000, 3, SolverConfig{});
    const auto n = price_contract(m, contract, CollateralSpec::none(), Measure::numeraire(1), grid, 100000, 3,
                                  SolverConfig{});
    EXPECT_LE(std::abs(q.y0 - n.y0), 2.0 * paired(q, n));
    EXPECT_NEAR(n.y0, 100.0, 1.0);
}

TEST(ChangeNumeraire, DriverShift) {
    const auto m = exchange_market();
    BsdeProblem q;
    q.terminal = [](std::span<const double> x) { return x[0]; };
    q.driver = [](double, std::span<const double>, double y, std::span<const double> z, double) { return y + 10.0 * z[0]; };
    const auto nc = change_numeraire(q, m, 1, 1.0);
    const std::vector<double> x{100.0, 50.0};
    const std::vector<double> z{0.2, 0.1};
    // f'(y', z') = f(N y', N z' + N y' sigma^2 rho_{2,.}) / N with N = 50.
    const double want = (50.0 * 0.4 + 10.0 * (50.0 * 0.2 + 50.0 * 0.4 * 0.3 * 0.5)) / 50.0;
    EXPECT_NEAR(nc.problem.driver(0.0, x, 0.4, z, 0.0), want, 1e-14);
    EXPECT_NEAR(nc.problem.terminal(x), 2.0, 1e-15);
}

TEST(ChangeNumeraire, Errors) {
    const auto m = exchange_market();
    const auto q = build_collateral_bsde(m, ContractSpec::exchange(0, 1, 1.0), CollateralSpec::none(), Measure::Q());
    EXPECT_THROW(change_numeraire(q, m, 2, 1.0), InvalidNumeraire);
    auto zero = m;
    zero.s0 = {100.0, 0.0};
    EXPECT_THROW(change_numeraire(q, zero, 1, 1.0), InvalidNumeraire);
    const auto p = build_collateral_bsde(m, ContractSpec::exchange(0, 1, 1.0), CollateralSpec::none(), Measure::P());
    EXPECT_THROW(change_numeraire(p, m, 1, 1.0), UnsupportedConfiguration);
}

TEST(PureJump, DiscountedAssetIsMartingale) {
    const auto m = pure_jump_market(1.0, 0.05, 0.01, 0.1, 2.0);
    const auto grid = build_grid(0.0, 1.0, 50);
    for (const auto& meas : {Measure::P(), Measure::Q()}) {
        const auto b = simulate_market(m, meas, grid, 100000, 42);
        const auto s = pure_jump_market_price(m, ContractSpec::identity(0, 1.0), CollateralSpec::none(), b,
                                              SolverConfig{}, meas);
        EXPECT_NEAR(s.y0, 1.0, 0.01) << meas.label();
    }
}

TEST(PureJump, DriftAtFundingRateMakesMeasuresCoincide) {
    const auto m = pure_jump_market(1.0, 0.01, 0.01, 0.1, 2.0);
    const auto grid = build_grid(0.0, 1.0, 20);
    const auto bp = simulate_market(m, Measure::P(), grid, 20000, 42);
    const auto bq = simulate_market(m, Measure::Q(), grid, 20000, 42);
    const auto c = ContractSpec::call(0, 1.0, 1.0);
    const auto p = pure_jump_market_price(m, c, CollateralSpec::none(), bp, SolverConfig{}, Measure::P());
    const auto q = pure_jump_market_price(m, c, CollateralSpec::none(), bq, SolverConfig{}, Measure::Q());
    EXPECT_NEAR(p.y0, q.y0, 1e-10);
}

TEST(PureJump, UnitClaimIsDiscounted) {
    const auto m = pure_jump_market(1.0, 0.05, 0.01, 0.1, 2.0);
    const auto b = simulate_market(m, Measure::Q(), build_grid(0.0, 1.0, 20), 10000, 42);
    const auto s = pure_jump_market_price(m, ContractSpec::constant(1.0, 1.0), CollateralSpec::none(), b, SolverConfig{},
                                          Measure::Q());
    EXPECT_NEAR(s.y0, 0.990049833749168, 0.005 * 0.990049833749168);
}

TEST(PureJump, InvalidKernelPropagates) {
    const auto m = pure_jump_market(1.0, 0.5, 0.0, 0.1, 2.0);
    EXPECT_THROW(simulate_market(m, Measure::Q(), build_grid(0.0, 1.0, 4), 10, 1), InvalidJumpKernel);
}

TEST(PureJump, PAndQAgree) {
    const auto m = pure_jump_market(1.0, 0.05, 0.01, 0.1, 2.0);
    const auto grid = build_grid(0.0, 1.0, 50);
    const auto c = ContractSpec::call(0, 1.0, 1.0);
    const auto p = price_contract(m, c, CollateralSpec::none(), Measure::P(), grid, 100000, 42, SolverConfig{});
    const auto q = price_contract(m, c, CollateralSpec::none(), Measure::Q(), grid, 100000, 42, SolverConfig{});
    EXPECT_LE(std::abs(p.y0 - q.y0), 2.0 * paired(p, q));
}

TEST(CumDividend, MartingaleUnderQ) {
    auto m = exchange_market(Scheme::Euler);
    m.r_repo = {0.03, 0.02};
    m.dividend = {0.01, 0.02};
    const auto b = simulate_market(m, Measure::Q(), build_grid(0.0, 1.0, 20), 100000, 8);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto inc = discounted_cum_dividend_increments(m, b, i);
        for (std::size_t k = 0; k < 20; ++k) {
            std::vector<double> v(b.n_paths);
            for (std::size_t p = 0; p < b.n_paths; ++p) v[p] = inc[p * 20 + k];
            const auto s = stats(v);
            EXPECT_NEAR(s.mean, 0.0, 4.0 * s.se) << "asset " << i << " step " << k;
        }
    }
    EXPECT_THROW(discounted_cum_dividend_increments(m, b, 2), IndexError);
}

TEST(CumDividend, DriftUnderPIsDetected) {
    const auto m = exchange_market(Scheme::Euler);
    const auto b = simulate_market(m, Measure::P(), build_grid(0.0, 1.0, 1), 100000, 8);
    const auto inc = discounted_cum_dividend_increments(m, b, 0);
    const auto s = stats(inc);
    EXPECT_GT(std::abs(s.mean), 4.0 * s.se);
}

}  // namespace
}  // namespace fbsde
