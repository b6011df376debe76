#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fbsde {

// Uniform time grid t0 = tau_0 < ... < tau_n = T.
struct TimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    std::size_t n_steps = 1;
    double dt = 1.0;
    std::vector<double> nodes;

    double at(std::size_t k) const { return nodes[k]; }
};

TimeGrid build_grid(double t0, double T, long long n_steps);

// Writes a d-vector coefficient evaluated at (t, x) into out.
using CoefficientFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

enum class Scheme {
    Euler,    // explicit Euler-Maruyama, left-point coefficients
    LogEuler  // Euler on log X; exact for geometric coefficients, requires X > 0
};

// dX = drift(t,X) dt + volatility(t,X) * (corr_chol dW) + jumps.
// volatility is per coordinate: coordinate i receives volatility_i * (corr_chol dW)_i.
struct DiffusionSpec {
    std::size_t dim = 1;
    CoefficientFn drift;       // empty means zero
    CoefficientFn volatility;  // empty means zero
    Eigen::MatrixXd corr_chol;
    std::vector<double> initial_state;
    Scheme scheme = Scheme::Euler;

    void validate() const;
};

struct JumpAtom {
    double size = 0.0;  // z_j
    double rate = 0.0;  // lambda_j, per year
};

enum class JumpKind { None, FixedSizePoisson, FiniteActivityLevy };

// gamma(t, x, z) written into out (length d).
using JumpImpactFn = std::function<void(double t, std::span<const double> x, double z, std::span<double> out)>;

struct JumpSpec {
    JumpKind kind = JumpKind::None;
    std::vector<JumpAtom> atoms;
    JumpImpactFn impact;  // empty means gamma(x, z) = z in every coordinate

    static JumpSpec none() { return {}; }
    static JumpSpec fixed_size(double size, double intensity, JumpImpactFn impact = {});
    static JumpSpec levy(std::vector<JumpAtom> atoms, JumpImpactFn impact = {});

    double total_rate() const;
    void evaluate_impact(double t, std::span<const double> x, double z, std::span<double> out) const;
    void validate() const;
};

// Raw randomness for a simulation: standard (uncorrelated) Brownian increments
// and per-atom Poisson counts. Layout is path-major: [path][step][coordinate].
struct Increments {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::size_t dim = 0;
    std::size_t n_atoms = 0;
    std::vector<double> dW;
    std::vector<std::int32_t> jump_counts;
};

// Simulated trajectories. Immutable after construction.
//
// dW holds the raw increments, standard under the measure the bundle was simulated
// in. The correlated increments corr_chol * dW are computed on demand.
// states has n_steps + 1 nodes per path; states at node 0 equal the initial state.
struct PathBundle {
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::size_t dim = 0;
    Eigen::MatrixXd corr_chol;
    std::vector<JumpAtom> atoms;  // intensities in force under `measure`
    std::vector<double> dW;
    std::vector<std::int32_t> jump_counts;
    std::vector<double> states;
    std::string measure = "P";

    std::size_t n_steps() const { return grid.n_steps; }
    std::size_t n_atoms() const { return atoms.size(); }

    std::span<const double> state(std::size_t path, std::size_t node) const {
        return {states.data() + (path * (grid.n_steps + 1) + node) * dim, dim};
    }
    std::span<const double> increment(std::size_t path, std::size_t step) const {
        return {dW.data() + (path * grid.n_steps + step) * dim, dim};
    }
    std::span<const std::int32_t> jumps(std::size_t path, std::size_t step) const {
        return {jump_counts.data() + (path * grid.n_steps + step) * atoms.size(), atoms.size()};
    }
    void correlated_increment(std::size_t path, std::size_t step, std::span<double> out) const;
};

// Draws the raw randomness keyed by (seed, path, step, channel). Channel 0 is the
// Brownian motion, channel 1 + j the Poisson counts of atom j.
Increments draw_increments(std::size_t dim, std::span<const JumpAtom> atoms, const TimeGrid& grid,
                           std::size_t n_paths, std::uint64_t seed);

// Evolves the forward SDE over given increments.
PathBundle integrate_paths(const DiffusionSpec& diff, const JumpSpec& jumps, const TimeGrid& grid,
                           Increments increments, std::uint64_t seed = 0);

PathBundle simulate_paths(const DiffusionSpec& diff, const JumpSpec& jumps, const TimeGrid& grid,
                          std::size_t n_paths, std::uint64_t seed);

// Sums consecutive groups of `factor` steps. Used for refinement studies with shared
// Brownian paths.
Increments coarsen(const Increments& fine, std::size_t factor);

// Per-path W_T of raw coordinate `coord`.
std::vector<double> brownian_terminal(const PathBundle& bundle, std::size_t coord);

// Advisory check of (A1)-style Lipschitz bounds: largest finite-difference slope of fn
// over random pairs in the box [lo, hi]^d.
double estimate_lipschitz(const CoefficientFn& fn, std::size_t dim, double lo, double hi,
                          std::size_t samples, std::uint64_t seed = 7);

namespace reference {
// Single-threaded simulation kept as the bitwise reference for the parallel kernel.
PathBundle simulate_paths_serial(const DiffusionSpec& diff, const JumpSpec& jumps, const TimeGrid& grid,
                                 std::size_t n_paths, std::uint64_t seed);
}  // namespace reference

}  // namespace fbsde
