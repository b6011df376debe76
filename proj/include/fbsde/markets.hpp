#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fbsde/bsde.hpp"
#include "fbsde/girsanov.hpp"
#include "fbsde/market_spec.hpp"
#include "fbsde/paths.hpp"

namespace fbsde {

// Prices are reported buyer-positive: p = E^Q[ e^{-rT} X + int e^{-ru} F(C_u) du ].

// Measures a market can be simulated and priced under. Numeraire assets are
// 0-based internally and 1-based in labels ("numeraire:2" is asset index 1).
struct Measure {
    enum class Kind { P, Q, GOP, Numeraire };
    Kind kind = Kind::Q;
    std::size_t asset = 0;

    static Measure P() { return {Kind::P, 0}; }
    static Measure Q() { return {Kind::Q, 0}; }
    static Measure gop() { return {Kind::GOP, 0}; }
    static Measure numeraire(std::size_t asset) { return {Kind::Numeraire, asset}; }
    // Accepts P, Q, gop and numeraire:<i> with i 1-based. Throws InvalidSpec.
    static Measure parse(const std::string& text);
    std::string label() const;
};

struct ContractSpec {
    TerminalFn payoff;
    double maturity = 1.0;
    std::string name;

    static ContractSpec call(std::size_t asset, double strike, double maturity);
    static ContractSpec put(std::size_t asset, double strike, double maturity);
    // (S^long - S^short)^+
    static ContractSpec exchange(std::size_t long_asset, std::size_t short_asset, double maturity);
    static ContractSpec identity(std::size_t asset, double maturity);
    static ContractSpec constant(double value, double maturity);
};

// C = c(V). The collateral integrand is (r - r_cb) C+ - (r - r_cl) C-.
struct CollateralSpec {
    enum class Kind { None, Full, Fraction };
    Kind kind = Kind::None;
    double kappa = 0.0;

    static CollateralSpec none() { return {Kind::None, 0.0}; }
    static CollateralSpec full() { return {Kind::Full, 1.0}; }
    static CollateralSpec fraction(double kappa) { return {Kind::Fraction, kappa}; }

    double level(double v) const;
    bool active() const { return kind != Kind::None && kappa != 0.0; }
    double lipschitz() const { return std::abs(kappa); }
};

// (C+, C-) with C = C+ - C-.
std::pair<double, double> split_collateral(double c);

// Throws InvalidMarket on inconsistent sizes, non-positive prices or rates above rate_bound.
void validate_market(const MarketSpec& market);

DiffusionSpec market_diffusion(const MarketSpec& market);
JumpSpec market_jumps(const MarketSpec& market);

// P -> Q. With diffusion: beta = -theta. Pure fixed-size jumps (d = 1): the constant
// delta that makes S / B^1 a martingale. Jump-diffusions keep the P intensities.
MeasureTilt p_to_q_tilt(const MarketSpec& market);

// Q -> Q^{N} for N = S^i e^{k^i t}: beta = sigma^i rho_{i,.}.
// Throws InvalidNumeraire for a bad index or a non-positive S^i_0 and
// UnsupportedConfiguration when r^i != r or the numeraire jumps.
MeasureTilt numeraire_tilt(const MarketSpec& market, std::size_t asset);

// P -> the requested measure. GOP pricing runs on P paths.
MeasureTilt measure_tilt(const MarketSpec& market, const Measure& measure);

PathBundle simulate_market(const MarketSpec& market, const Measure& measure, const TimeGrid& grid,
                           std::size_t n_paths, std::uint64_t seed);

// Collateralized pricing BSDE with alpha = r and f = (r - r_cb) c(y)+ - (r - r_cl) c(y)-.
// Under P the tilt is P -> Q, under Q it is the identity.
BsdeProblem build_collateral_bsde(const MarketSpec& market, const ContractSpec& contract,
                                  const CollateralSpec& coll, const Measure& measure);

struct HedgeRatios {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::size_t dim = 0;
    std::vector<double> xi;   // [path][step][asset]
    std::vector<double> psi;  // repo positions -xi S / B^i

    double xi_at(std::size_t p, std::size_t k, std::size_t i) const { return xi[(p * n_steps + k) * dim + i]; }
    double psi_at(std::size_t p, std::size_t k, std::size_t i) const { return psi[(p * n_steps + k) * dim + i]; }
};

// xi = Z (diag(S) Sigma rho)^{-1} per path and step.
HedgeRatios extract_hedge(const ValueSurface& surface, const MarketSpec& market, const PathBundle& bundle);

// log S^{delta*} along P paths, S^{delta*}_{t0} = 1.
DensityPath gop_path(const MarketSpec& market, const PathBundle& bundle);

// Real-world pricing with GOP deflators S^{delta*}_t / S^{delta*}_u on a P bundle.
ValueSurface real_world_price(const MarketSpec& market, const ContractSpec& contract, const CollateralSpec& coll,
                              const PathBundle& bundle, const SolverConfig& cfg);

struct NumeraireChange {
    BsdeProblem problem;  // written under Q^{N}, in units of N
    MeasureTilt tilt;     // Q -> Q^{N}
};

// Rewrites a Q-form problem in units of N = S^i e^{k^i t}: g' = g / N_T,
// alpha' = alpha - r, f'(y', z') = f(N y', N z' + N y' sigma^i rho_{i,.}) / N.
// An empty asset selects the bank account and returns the problem unchanged.
NumeraireChange change_numeraire(const BsdeProblem& problem, const MarketSpec& market,
                                 std::optional<std::size_t> asset, double maturity);

struct PriceEstimate {
    std::string measure;
    double y0 = 0.0;
    double std_error = 0.0;
    int iterations = 0;
    std::vector<double> gaps;
    std::vector<double> pathwise;  // in price units
};

// Exchange option (S^1 - S^2)^+ priced under Q^{S2} on a bundle simulated under
// Measure::numeraire(1). Requires d = 2 and r^2 = r.
PriceEstimate exchange_option_numeraire_price(const MarketSpec& market, const CollateralSpec& coll,
                                              const PathBundle& bundle, const SolverConfig& cfg,
                                              double maturity);

// Fixed-size Poisson market (d = 1, no diffusion) solved as a BSDE under P (with the
// jump kernel term) or under Q, on a bundle simulated under that measure.
ValueSurface pure_jump_market_price(const MarketSpec& market, const ContractSpec& contract,
                                    const CollateralSpec& coll, const PathBundle& bundle, const SolverConfig& cfg,
                                    const Measure& measure);

// End-to-end price under one measure: P uses the density-weighted representation,
// Q the backward solve, gop the real-world formula and numeraire:i the Q^{S^i} solve
// rescaled by N_0.
PriceEstimate price_contract(const MarketSpec& market, const ContractSpec& contract, const CollateralSpec& coll,
                             const Measure& measure, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                             const SolverConfig& cfg);

// Per-path increments of the discounted cum-dividend price
//   S^i_t / B^i_t + int_0^t (B^i_u)^{-1} k^i S^i_u du
// over each step, [path][step].
std::vector<double> discounted_cum_dividend_increments(const MarketSpec& market, const PathBundle& bundle,
                                                       std::size_t asset);

// Constant-coefficient geometric Brownian market. sigma.size() == s0.size().
MarketSpec black_scholes_market(std::vector<double> s0, std::vector<double> mu, std::vector<double> sigma,
                                const Eigen::MatrixXd& corr, double r);

// dS = S (mu dt + (e^alpha - 1) dN~) with N Poisson(lambda).
MarketSpec pure_jump_market(double s0, double mu, double r, double alpha, double lambda);

}  // namespace fbsde
