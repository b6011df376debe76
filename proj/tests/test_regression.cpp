#include <cmath>

#include <gtest/gtest.h>
#include <omp.h>

#include "fbsde/errors.hpp"
#include "fbsde/regression.hpp"
#include "helpers.hpp"

namespace fbsde {
namespace {

using testing::gbm;

PathBundle two_dim(std::size_t n_paths = 4000) {
    return simulate_paths(gbm({1.0, 2.0}, 0.0, 0.3), JumpSpec::none(), build_grid(0.0, 1.0, 4), n_paths, 19);
}

TEST(PolynomialBasis, SizeIsBinomial) {
    const auto b = two_dim();
    EXPECT_EQ(PolynomialBasis(b, 2, 0).size(), 1u);
    EXPECT_EQ(PolynomialBasis(b, 2, 1).size(), 3u);
    EXPECT_EQ(PolynomialBasis(b, 2, 2).size(), 6u);
    EXPECT_EQ(PolynomialBasis(b, 2, 3).size(), 10u);
}

TEST(PolynomialBasis, DeterministicNodeKeepsOnlyIntercept) {
    const auto b = two_dim();
    const PolynomialBasis basis(b, 0, 2);
    EXPECT_EQ(basis.size(), 1u);
    EXPECT_EQ(basis.active_coordinates(), 0u);
}

TEST(NodeRegression, ReproducesQuadratics) {
    const auto b = two_dim();
    const NodeRegression reg(b, 3, 2);
    std::vector<double> fitted(b.n_paths);
    auto f = [&](std::size_t p) {
        const auto x = b.state(p, 3);
        return 1.0 - 2.0 * x[0] + 0.5 * x[1] + 3.0 * x[0] * x[1] - x[1] * x[1];
    };
    reg.project(f, fitted);
    for (std::size_t p = 0; p < b.n_paths; ++p) EXPECT_NEAR(fitted[p], f(p), 1e-7 * (1.0 + std::abs(f(p))));
}

TEST(NodeRegression, ConstantAtInitialNode) {
    const auto b = two_dim();
    const NodeRegression reg(b, 0, 2);
    std::vector<double> fitted(b.n_paths);
    reg.project([](std::size_t p) { return static_cast<double>(p % 7); }, fitted);
    double mean = 0.0;
    for (std::size_t p = 0; p < b.n_paths; ++p) mean += static_cast<double>(p % 7);
    mean /= static_cast<double>(b.n_paths);
    for (double v : fitted) EXPECT_NEAR(v, mean, 1e-9);
}

TEST(NodeRegression, ResidualIsOrthogonalToBasis) {
    const auto b = two_dim();
    const NodeRegression reg(b, 2, 2);
    std::vector<double> fitted(b.n_paths);
    auto target = [&](std::size_t p) { return std::sin(3.0 * b.state(p, 2)[0]) + b.increment(p, 2)[1]; };
    reg.project(target, fitted);
    const PolynomialBasis basis(b, 2, 2);
    std::vector<double> phi(basis.size()), dot(basis.size(), 0.0);
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        basis.evaluate(b.state(p, 2), phi);
        for (std::size_t j = 0; j < phi.size(); ++j) dot[j] += phi[j] * (target(p) - fitted[p]);
    }
    for (double v : dot) EXPECT_NEAR(v / static_cast<double>(b.n_paths), 0.0, 1e-8);
}

TEST(NodeRegression, ProjectManyMatchesProject) {
    const auto b = two_dim();
    const NodeRegression reg(b, 2, 2);
    std::vector<double> one(b.n_paths), many(b.n_paths * 2);
    reg.project([&](std::size_t p) { return b.increment(p, 2)[0] * b.state(p, 3)[1]; }, one);
    reg.project_many(
        2,
        [&](std::size_t p, std::span<double> out) {
            out[0] = b.increment(p, 2)[0] * b.state(p, 3)[1];
            out[1] = 1.0;
        },
        many);
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        EXPECT_NEAR(many[p * 2], one[p], 1e-12);
        EXPECT_NEAR(many[p * 2 + 1], 1.0, 1e-8);  // ridge bias
    }
}

TEST(NodeRegression, DegenerateDesignStaysFinite) {
    // Two paths cannot identify six coefficients; the ridge keeps the solve finite.
    const auto b = two_dim(2);
    const NodeRegression reg(b, 3, 2);
    std::vector<double> fitted(2);
    reg.project([](std::size_t p) { return static_cast<double>(p); }, fitted);
    for (double v : fitted) EXPECT_TRUE(std::isfinite(v));
}

TEST(NodeRegression, NonFiniteTargetIsSingular) {
    const auto b = two_dim();
    const NodeRegression reg(b, 2, 2);
    std::vector<double> fitted(b.n_paths);
    EXPECT_THROW(reg.project([](std::size_t p) { return p == 5 ? NAN : 1.0; }, fitted), RegressionSingular);
}

TEST(NodeRegression, NormalMatrixMatchesSerial) {
    const auto b = two_dim(10000);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);
    const NodeRegression reg(b, 3, 2);
    omp_set_num_threads(saved);
    const auto serial = reference::normal_matrix_serial(b, 3, 2);
    ASSERT_EQ(serial.rows(), reg.normal_matrix().rows());
    const double tr = serial.trace();
    for (Eigen::Index i = 0; i < serial.rows(); ++i)
        for (Eigen::Index j = 0; j < serial.cols(); ++j) EXPECT_NEAR(reg.normal_matrix()(i, j), serial(i, j), 1e-12 * tr);
}

TEST(NodeRegression, BitIdenticalAcrossThreadCounts) {
    const auto b = two_dim(10000);
    std::vector<double> f1(b.n_paths), f4(b.n_paths);
    auto target = [&](std::size_t p) { return std::exp(b.state(p, 4)[0]); };
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    NodeRegression(b, 3, 2).project(target, f1);
    omp_set_num_threads(4);
    NodeRegression(b, 3, 2).project(target, f4);
    omp_set_num_threads(saved);
    EXPECT_EQ(f1, f4);
}

}  // namespace
}  // namespace fbsde
