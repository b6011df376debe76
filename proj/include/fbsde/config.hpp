#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fbsde/bsde.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/markets.hpp"

namespace fbsde {

struct ConfigIssue {
    std::size_t line = 0;  // 0 when the issue is not tied to a line
    std::string key;
    std::string message;
};

// Every problem found in a config file, reported together.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<ConfigIssue> issues);
    const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

private:
    std::vector<ConfigIssue> issues_;
};

struct Numerics {
    std::size_t n_paths = 100000;
    std::size_t n_steps = 100;
    std::uint64_t seed = 42;
    SolverConfig solver;
};

struct ExperimentConfig {
    MarketSpec market;
    ContractSpec contract;
    CollateralSpec collateral;
    Numerics numerics;
    std::vector<Measure> measures;
};

// Parses the flat key = value format:
//
//   # comment
//   model.s0 = 100, 100
//   contract.payoff = exchange
//   measures = Q, numeraire:2
//
// Lists are comma separated. Asset indices are 1-based. Throws ConfigError with all
// issues found; model errors detected by the library (e.g. InvalidJumpKernel)
// propagate with their own kind.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

// Checks that every requested measure can be built before anything is simulated.
void validate_experiment(const ExperimentConfig& cfg);

}  // namespace fbsde
