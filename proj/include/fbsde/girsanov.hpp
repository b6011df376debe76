#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fbsde/market_spec.hpp"
#include "fbsde/paths.hpp"

namespace fbsde {

using JumpKernelFn = std::function<double(double z)>;

// Girsanov kernels taking a reference measure P to P2:
//   W^{P2} = W^P - int beta dt,   nu^{P2}(dz) = (1 + delta(z)) nu^P(dz).
struct MeasureTilt {
    CoefficientFn beta;   // empty means zero
    JumpKernelFn delta;   // empty means zero
    std::string label;
    double bound = 100.0;  // K in |beta| <= K and int delta^2 dnu <= K

    static MeasureTilt identity(std::string label = "identity");
    static MeasureTilt constant(std::vector<double> beta, double delta, std::string label);

    bool has_beta() const { return static_cast<bool>(beta); }
    bool has_delta() const { return static_cast<bool>(delta); }
    double delta_at(double z) const { return delta ? delta(z) : 0.0; }
    void beta_at(double t, std::span<const double> x, std::span<double> out) const;

    // Throws InvalidJumpKernel unless delta > -1 on every atom and int delta^2 dnu <= bound.
    void validate(std::span<const JumpAtom> atoms) const;
};

// The tilt P -> P3 obtained by applying `first` (P -> P2) then `second` (P2 -> P3).
MeasureTilt compose(const MeasureTilt& first, const MeasureTilt& second, std::string label);

// Density process H_r / H_from on nodes from..to, log-accumulated.
struct DensityPath {
    std::size_t n_paths = 0;
    std::size_t first_node = 0;
    std::size_t n_nodes = 0;
    std::vector<double> log_values;  // [path][node - first_node]
    std::vector<double> values;

    double log_value(std::size_t path, std::size_t node) const {
        return log_values[path * n_nodes + (node - first_node)];
    }
    double value(std::size_t path, std::size_t node) const { return values[path * n_nodes + (node - first_node)]; }
    std::size_t last_node() const { return first_node + n_nodes - 1; }
};

// theta = (Sigma rho)^{-1} (mu - r_repo + k), the market price of diffusion risk.
// A singular row whose right-hand side is already zero gets theta_i = 0; otherwise
// SingularVolatility.
std::vector<double> theta_kernel(const MarketSpec& market, double t, std::span<const double> state);
void theta_kernel(const MarketSpec& market, double t, std::span<const double> state, std::span<double> theta);

// Doleans-Dade exponential of the tilt along the bundle's increments between the
// grid nodes at times `from` and `to`.
DensityPath stochastic_exponential(const MeasureTilt& tilt, const PathBundle& bundle, double from, double to);

// dW_k - beta(tau_k, X_k) dt for every path and step; same layout as bundle.dW.
std::vector<double> tilt_brownian(const MeasureTilt& tilt, const PathBundle& bundle);
std::vector<double> tilt_brownian(const MeasureTilt& tilt, const PathBundle& bundle,
                                  std::span<const double> increments);

// Jump intensities under the tilted measure: lambda_j (1 + delta(z_j)).
JumpSpec tilt_compensator(const MeasureTilt& tilt, const JumpSpec& jumps);

// delta = -(mu - r) / ((e^alpha - 1) lambda), the kernel making S / B a martingale
// in the fixed-size Poisson market.
double pure_jump_girsanov_kernel(double mu, double r, double alpha, double lambda);

// Simulates the forward SDE under the tilted measure with the same raw draws as
// simulate_paths(diff, jumps, grid, n_paths, seed). The stored increments are
// Brownian under the new measure; the reference-measure increments are dW + beta dt.
PathBundle simulate_under_tilt(const DiffusionSpec& diff, const JumpSpec& jumps, const MeasureTilt& tilt,
                               const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed);

// Largest |beta| seen on the bundle states (every `stride`-th node).
double max_beta_norm(const MeasureTilt& tilt, const PathBundle& bundle, std::size_t stride = 1);

namespace reference {
DensityPath stochastic_exponential_serial(const MeasureTilt& tilt, const PathBundle& bundle, double from, double to);
}  // namespace reference

}  // namespace fbsde
