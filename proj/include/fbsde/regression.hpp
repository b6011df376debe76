#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fbsde/paths.hpp"

namespace fbsde {

// Polynomial basis of total degree <= degree in the standardized state coordinates
// of one grid node. Coordinates with no cross-sectional spread (e.g. the
// deterministic initial node) are dropped, leaving only the intercept there.
class PolynomialBasis {
public:
    PolynomialBasis(const PathBundle& bundle, std::size_t node, int degree);

    std::size_t size() const { return exponents_.size(); }
    std::size_t active_coordinates() const { return active_.size(); }
    void evaluate(std::span<const double> x, std::span<double> out) const;

private:
    std::vector<std::size_t> active_;
    std::vector<double> center_;
    std::vector<double> scale_;
    std::vector<std::vector<int>> exponents_;  // per monomial, one exponent per active coordinate
};

// Least-squares projection onto a PolynomialBasis at one node, solved through the
// normal equations with ridge 1e-10 * trace / p on every monomial but the intercept.
class NodeRegression {
public:
    NodeRegression(const PathBundle& bundle, std::size_t node, int degree);

    std::size_t n_paths() const { return n_paths_; }
    std::size_t basis_size() const { return p_; }

    // Projects target(path) and writes fitted values into fitted (length n_paths).
    // Throws RegressionSingular on a non-finite solution.
    void project(const std::function<double(std::size_t)>& target, std::span<double> fitted) const;

    // Projects several targets at once: target(path, out) fills out[0..m).
    // fitted is [path][m].
    void project_many(std::size_t m, const std::function<void(std::size_t, std::span<double>)>& target,
                      std::span<double> fitted) const;

    const Eigen::MatrixXd& normal_matrix() const { return gram_; }

private:
    std::size_t n_paths_ = 0;
    std::size_t p_ = 0;
    std::vector<double> design_;  // [path][p]
    Eigen::MatrixXd gram_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

namespace reference {
// Serial assembly of the (unregularised) normal matrix for comparison with the
// chunked parallel reduction.
Eigen::MatrixXd normal_matrix_serial(const PathBundle& bundle, std::size_t node, int degree);
}  // namespace reference

}  // namespace fbsde
