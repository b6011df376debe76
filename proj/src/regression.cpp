#include "fbsde/regression.hpp"

#include <cmath>

#include "fbsde/errors.hpp"
#include "fbsde/parallel.hpp"

namespace fbsde {

namespace {

void enumerate_monomials(std::size_t coords, int degree, std::vector<int>& current, std::size_t pos, int remaining,
                         std::vector<std::vector<int>>& out) {
    if (pos == coords) {
        out.push_back(current);
        return;
    }
    for (int e = 0; e <= remaining; ++e) {
        current[pos] = e;
        enumerate_monomials(coords, degree, current, pos + 1, remaining - e, out);
    }
    current[pos] = 0;
}

}  // namespace

PolynomialBasis::PolynomialBasis(const PathBundle& bundle, std::size_t node, int degree) {
    if (degree < 0) throw InvalidSpec("basis degree must be >= 0");
    const std::size_t d = bundle.dim;
    const std::size_t n = bundle.n_paths;
    const auto sums = parallel::accumulate(n, 2 * d, [&](std::size_t p, std::span<double> acc) {
        const auto x = bundle.state(p, node);
        for (std::size_t i = 0; i < d; ++i) {
            acc[i] += x[i];
            acc[d + i] += x[i] * x[i];
        }
    });
    for (std::size_t i = 0; i < d; ++i) {
        const double mean = sums[i] / static_cast<double>(n);
        const double var = std::max(0.0, sums[d + i] / static_cast<double>(n) - mean * mean);
        const double sd = std::sqrt(var);
        if (sd > 1e-10 * std::max(1.0, std::abs(mean))) {
            active_.push_back(i);
            center_.push_back(mean);
            scale_.push_back(sd);
        }
    }
    std::vector<int> current(active_.size(), 0);
    enumerate_monomials(active_.size(), degree, current, 0, degree, exponents_);
}

void PolynomialBasis::evaluate(std::span<const double> x, std::span<double> out) const {
    constexpr std::size_t kMaxCoords = 16;
    double z[kMaxCoords];
    for (std::size_t a = 0; a < active_.size(); ++a) z[a] = (x[active_[a]] - center_[a]) / scale_[a];
    for (std::size_t m = 0; m < exponents_.size(); ++m) {
        double v = 1.0;
        for (std::size_t a = 0; a < active_.size(); ++a)
            for (int e = 0; e < exponents_[m][a]; ++e) v *= z[a];
        out[m] = v;
    }
}

NodeRegression::NodeRegression(const PathBundle& bundle, std::size_t node, int degree)
    : n_paths_(bundle.n_paths) {
    if (bundle.dim > 16) throw InvalidSpec("regression supports at most 16 state coordinates");
    const PolynomialBasis basis(bundle, node, degree);
    p_ = basis.size();
    design_.resize(n_paths_ * p_);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n_paths_); ++p) {
        const auto path = static_cast<std::size_t>(p);
        basis.evaluate(bundle.state(path, node), std::span<double>(design_.data() + path * p_, p_));
    }
    const std::size_t tri = p_ * (p_ + 1) / 2;
    const auto packed = parallel::accumulate(n_paths_, tri, [&](std::size_t path, std::span<double> acc) {
        const double* row = design_.data() + path * p_;
        std::size_t idx = 0;
        for (std::size_t a = 0; a < p_; ++a)
            for (std::size_t b = a; b < p_; ++b) acc[idx++] += row[a] * row[b];
    });
    gram_.resize(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(p_));
    std::size_t idx = 0;
    for (std::size_t a = 0; a < p_; ++a)
        for (std::size_t b = a; b < p_; ++b) {
            gram_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = packed[idx];
            gram_(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = packed[idx];
            ++idx;
        }
    Eigen::MatrixXd regularised = gram_;
    const double ridge = 1e-10 * gram_.trace() / static_cast<double>(p_);
    // The intercept (monomial 0) is left unpenalised so constant targets are fitted exactly.
    for (std::size_t a = 1; a < p_; ++a) regularised(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) += ridge;
    llt_.compute(regularised);
    if (llt_.info() != Eigen::Success)
        throw RegressionSingular("normal equations are not positive definite at node " + std::to_string(node));
}

void NodeRegression::project(const std::function<double(std::size_t)>& target, std::span<double> fitted) const {
    project_many(1, [&](std::size_t path, std::span<double> out) { out[0] = target(path); }, fitted);
}

void NodeRegression::project_many(std::size_t m, const std::function<void(std::size_t, std::span<double>)>& target,
                                  std::span<double> fitted) const {
    std::vector<double> values(n_paths_ * m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n_paths_); ++p) {
        const auto path = static_cast<std::size_t>(p);
        target(path, std::span<double>(values.data() + path * m, m));
    }
    const auto rhs = parallel::accumulate(n_paths_, p_ * m, [&](std::size_t path, std::span<double> acc) {
        const double* row = design_.data() + path * p_;
        const double* v = values.data() + path * m;
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t a = 0; a < p_; ++a) acc[j * p_ + a] += row[a] * v[j];
    });
    Eigen::MatrixXd b(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t a = 0; a < p_; ++a) b(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j)) = rhs[j * p_ + a];
    const Eigen::MatrixXd coef = llt_.solve(b);
    if (!coef.allFinite()) throw RegressionSingular("non-finite regression coefficients");
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n_paths_); ++p) {
        const auto path = static_cast<std::size_t>(p);
        const double* row = design_.data() + path * p_;
        for (std::size_t j = 0; j < m; ++j) {
            double v = 0.0;
            for (std::size_t a = 0; a < p_; ++a) v += row[a] * coef(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j));
            fitted[path * m + j] = v;
        }
    }
}

namespace reference {

Eigen::MatrixXd normal_matrix_serial(const PathBundle& bundle, std::size_t node, int degree) {
    const PolynomialBasis basis(bundle, node, degree);
    const auto p = static_cast<Eigen::Index>(basis.size());
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    std::vector<double> row(basis.size());
    for (std::size_t path = 0; path < bundle.n_paths; ++path) {
        basis.evaluate(bundle.state(path, node), row);
        for (Eigen::Index a = 0; a < p; ++a)
            for (Eigen::Index b = 0; b < p; ++b) gram(a, b) += row[static_cast<std::size_t>(a)] * row[static_cast<std::size_t>(b)];
    }
    return gram;
}

}  // namespace reference

}  // namespace fbsde
