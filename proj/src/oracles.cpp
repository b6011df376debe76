#include "fbsde/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "fbsde/errors.hpp"

namespace fbsde::oracles {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

OracleResult margrabe(double s1, double s2, double sigma1, double sigma2, double rho, double T) {
    OracleResult out{0.0, "margrabe",
                     {{"S1", s1}, {"S2", s2}, {"sigma1", sigma1}, {"sigma2", sigma2}, {"rho", rho}, {"T", T}}};
    if (s1 < 0.0 || s2 < 0.0 || sigma1 < 0.0 || sigma2 < 0.0 || std::abs(rho) > 1.0 || !(T > 0.0))
        throw InvalidSpec("margrabe: inputs outside the formula's domain");
    if (s1 == 0.0) return out;
    if (s2 == 0.0) {
        out.value = s1;
        return out;
    }
    const double var = std::max(0.0, sigma1 * sigma1 + sigma2 * sigma2 - 2.0 * rho * sigma1 * sigma2);
    const double vol = std::sqrt(var * T);
    if (vol == 0.0) {
        out.value = std::max(s1 - s2, 0.0);
        return out;
    }
    const double d1 = (std::log(s1 / s2) + 0.5 * vol * vol) / vol;
    const double d2 = d1 - vol;
    out.value = s1 * normal_cdf(d1) - s2 * normal_cdf(d2);
    return out;
}

OracleResult discount_bond(double r, double T) {
    if (T < 0.0) throw InvalidSpec("discount_bond: negative maturity");
    return {std::exp(-r * T), "discount_bond", {{"r", r}, {"T", T}}};
}

OracleResult black_scholes_call(double S, double K, double r, double sigma, double T) {
    OracleResult out{0.0, "black_scholes_call", {{"S", S}, {"K", K}, {"r", r}, {"sigma", sigma}, {"T", T}}};
    if (S < 0.0 || K < 0.0 || sigma < 0.0 || T < 0.0) throw InvalidSpec("black_scholes_call: negative input");
    const double df = std::exp(-r * T);
    if (K == 0.0) {
        out.value = S;
        return out;
    }
    const double vol = sigma * std::sqrt(T);
    if (vol == 0.0 || S == 0.0) {
        out.value = std::max(S - K * df, 0.0);
        return out;
    }
    const double d1 = (std::log(S / K) + r * T + 0.5 * vol * vol) / vol;
    out.value = S * normal_cdf(d1) - K * df * normal_cdf(d1 - vol);
    return out;
}

OracleResult geometric_poisson_mean(double S0, double r, double T) {
    if (T < 0.0) throw InvalidSpec("geometric_poisson_mean: negative maturity");
    return {S0 * std::exp(r * T), "geometric_poisson_mean", {{"S0", S0}, {"r", r}, {"T", T}}};
}

}  // namespace fbsde::oracles
