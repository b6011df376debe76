#pragma once

#include <map>
#include <string>

namespace fbsde::oracles {

// Closed-form reference value with the formula used and its inputs.
struct OracleResult {
    double value = 0.0;
    std::string formula_id;
    std::map<std::string, double> inputs;
};

// Standard normal CDF.
double normal_cdf(double x);

// Exchange option (S1 - S2)^+ with sigma~^2 = sigma1^2 + sigma2^2 - 2 rho sigma1 sigma2.
OracleResult margrabe(double s1, double s2, double sigma1, double sigma2, double rho, double T);

OracleResult discount_bond(double r, double T);

OracleResult black_scholes_call(double S, double K, double r, double sigma, double T);

// E^Q[S_T] = S0 e^{rT} for the pure-jump asset.
OracleResult geometric_poisson_mean(double S0, double r, double T);

}  // namespace fbsde::oracles
