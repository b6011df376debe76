#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fbsde/girsanov.hpp"
#include "fbsde/paths.hpp"

namespace fbsde {

using TerminalFn = std::function<double(std::span<const double> x)>;
// f(t, x, y, z, u) with u = int U(z) delta(z) nu(dz), evaluated as a sum over atoms.
using DriverFn = std::function<double(double t, std::span<const double> x, double y, std::span<const double> z, double u)>;
using DiscountFn = std::function<double(double t, std::span<const double> x)>;

// Data of the backward equation
//
//   Y_s = g(X_T) + int_s^T [ f(r, X, Y, Z, int U delta dnu) - alpha Y + beta Z + int U delta dnu ] dr
//         - int_s^T Z dW - int_s^T int U dN~
//
// written under the measure the simulated bundle is standard in.
struct BsdeProblem {
    TerminalFn terminal;
    DriverFn driver;      // empty means f = 0
    DiscountFn discount;  // alpha; empty means 0
    // beta and delta of the standalone beta Z and int U delta dnu terms. An identity
    // tilt gives the equation under the tilted measure.
    MeasureTilt tilt;
    // w_j = delta(z_j) lambda_j under the reference measure, so that f's last argument
    // is sum_j U_j w_j. Empty means zero.
    std::vector<double> u_weights;
};

// Weights delta(z_j) lambda_j for the atoms of `atoms` (reference-measure intensities).
std::vector<double> jump_u_weights(const MeasureTilt& tilt, std::span<const JumpAtom> atoms);

// The same problem written under the tilted measure: the standalone beta Z and
// int U delta dnu terms vanish, f keeps its argument int U delta/(1+delta) dnu^{P2},
// which equals the reference-measure weights.
BsdeProblem under_tilted_measure(const BsdeProblem& problem);

struct SolverConfig {
    int degree = 2;
    int picard_max = 20;
    double picard_tol = 1e-6;
    std::optional<std::pair<double, double>> clip;

    void validate() const;
};

// Per-path, per-node estimates of (Y, Z, U) and the time-t0 value.
//
// y0 is the sample mean of `pathwise`, the discounted cash flows accumulated along
// each path with the driver evaluated on the regressed surface; std_error is its
// Monte Carlo standard error.
struct ValueSurface {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::size_t dim = 0;
    std::size_t n_atoms = 0;
    std::vector<double> Y;  // [path][node], n_steps + 1 nodes
    std::vector<double> Z;  // [path][step][dim]
    std::vector<double> U;  // [path][step][atom]
    std::vector<double> pathwise;
    double y0 = 0.0;
    double std_error = 0.0;
    int iterations = 0;
    std::vector<double> gaps;  // |y0^{m+1} - y0^m|

    double y(std::size_t path, std::size_t node) const { return Y[path * (n_steps + 1) + node]; }
    std::span<const double> z(std::size_t path, std::size_t step) const {
        return {Z.data() + (path * n_steps + step) * dim, dim};
    }
    std::span<const double> u(std::size_t path, std::size_t step) const {
        return {U.data() + (path * n_steps + step) * n_atoms, n_atoms};
    }
};

// Backward least-squares solve of the equation above on a bundle simulated under the
// reference measure. Implicit dependence of f on Y at the same node is resolved by
// Picard iteration over the whole surface.
ValueSurface solve_backward(const BsdeProblem& problem, const PathBundle& bundle, const SolverConfig& cfg);

// Evaluates the reference-measure representation
//   Y_t = E[ g e^{-int alpha} H_T/H_t + int e^{-int alpha} H_r/H_t f dr ]
// with the density inside both the terminal and the running term. `density` must be
// built from `bundle` over the whole grid.
ValueSurface price_under_P(const BsdeProblem& problem, const PathBundle& bundle, const DensityPath& density,
                           const SolverConfig& cfg);

// As price_under_P with an arbitrary deflator D (D at node 0 equal to 1) in place of
// e^{-int alpha} H: Y_t = E[ D_T/D_t g + int D_r/D_t f dr ]. The discount of the
// problem is ignored.
ValueSurface solve_deflated(const BsdeProblem& problem, const PathBundle& bundle, const DensityPath& log_deflator,
                            const SolverConfig& cfg);

struct ContractionReport {
    std::vector<double> y0_history;
    std::vector<double> gaps;
    bool converged = false;
    bool contracting = false;  // gaps non-increasing from the second gap on
};

// Runs the Picard loop of solve_backward without throwing on non-convergence.
ContractionReport picard_contraction_report(const BsdeProblem& problem, const PathBundle& bundle,
                                            const SolverConfig& cfg);

// Standard error of the pathwise difference of two estimates built on the same draws.
double paired_stderr(std::span<const double> a, std::span<const double> b);

// Mean and standard error of a sample.
std::pair<double, double> mean_and_stderr(std::span<const double> sample);

}  // namespace fbsde
