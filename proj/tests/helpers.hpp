#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "fbsde/paths.hpp"

namespace fbsde::testing {

inline DiffusionSpec gbm(std::vector<double> s0, double mu, double sigma, Scheme scheme = Scheme::Euler) {
    DiffusionSpec d;
    d.dim = s0.size();
    d.corr_chol = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d.dim), static_cast<Eigen::Index>(d.dim));
    d.initial_state = std::move(s0);
    d.scheme = scheme;
    d.drift = [mu](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu * x[i];
    };
    d.volatility = [sigma](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigma * x[i];
    };
    return d;
}

struct Stats {
    double mean = 0.0;
    double var = 0.0;
    double se = 0.0;  // standard error of the mean
};

inline Stats stats(std::span<const double> v) {
    Stats s;
    const double n = static_cast<double>(v.size());
    for (double x : v) s.mean += x;
    s.mean /= n;
    for (double x : v) s.var += (x - s.mean) * (x - s.mean);
    s.var /= n - 1.0;
    s.se = std::sqrt(s.var / n);
    return s;
}

inline std::vector<double> terminal(const PathBundle& b, std::size_t coord) {
    std::vector<double> out(b.n_paths);
    for (std::size_t p = 0; p < b.n_paths; ++p) out[p] = b.state(p, b.n_steps())[coord];
    return out;
}

}  // namespace fbsde::testing
