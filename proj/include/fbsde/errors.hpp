#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fbsde {

// Base of every library error. kind() is a stable machine-readable tag.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define FBSDE_DEFINE_ERROR(Name)                                      \
    class Name : public Error {                                       \
    public:                                                           \
        explicit Name(const std::string& what) : Error(#Name, what) {} \
    }

FBSDE_DEFINE_ERROR(InvalidGrid);
FBSDE_DEFINE_ERROR(InvalidSpec);
FBSDE_DEFINE_ERROR(IndexError);
FBSDE_DEFINE_ERROR(SingularVolatility);
FBSDE_DEFINE_ERROR(InvalidJumpKernel);
FBSDE_DEFINE_ERROR(DensityOverflow);
FBSDE_DEFINE_ERROR(DegenerateJumpModel);
FBSDE_DEFINE_ERROR(RegressionSingular);
FBSDE_DEFINE_ERROR(InvalidMarket);
FBSDE_DEFINE_ERROR(UnsupportedConfiguration);
FBSDE_DEFINE_ERROR(InvalidNumeraire);

#undef FBSDE_DEFINE_ERROR

class SimulationDiverged : public Error {
public:
    SimulationDiverged(std::size_t path, std::size_t step)
        : Error("SimulationDiverged",
                "non-finite state at path " + std::to_string(path) + ", step " +
                    std::to_string(step)),
          path_(path),
          step_(step) {}
    std::size_t path() const noexcept { return path_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t path_;
    std::size_t step_;
};

// Carries the y0 iterates seen before giving up.
class PicardDiverged : public Error {
public:
    PicardDiverged(const std::string& what, std::vector<double> history)
        : Error("PicardDiverged", what), history_(std::move(history)) {}
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

}  // namespace fbsde
