#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fbsde/config.hpp"
#include "fbsde/markets.hpp"

namespace fbsde {

struct MeasureRow {
    PriceEstimate estimate;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    double wall_ms = 0.0;
};

struct PairwiseGap {
    std::string a;
    std::string b;
    double difference = 0.0;  // y0(a) - y0(b)
    double paired_stderr = 0.0;
    double in_stderr = 0.0;   // |difference| / paired_stderr
};

struct RunReport {
    std::vector<MeasureRow> rows;
    std::vector<PairwiseGap> pairs;
};

struct RunOptions {
    bool record_timing = false;  // wall_ms stays empty in CSV otherwise
};

RunReport run_experiment(const ExperimentConfig& cfg);

// measure,y0,stderr,n_paths,n_steps,picard_iters,wall_ms
std::string report_csv(const RunReport& report, const RunOptions& options = {});

// One run per (n_paths, n_steps) pair, all with the config's seed. Because draws are
// keyed by (seed, path, step), smaller path counts see a prefix of the larger ones.
RunReport convergence_study(const ExperimentConfig& cfg,
                            const std::vector<std::pair<std::size_t, std::size_t>>& refinements);

// RFC 4180 field quoting.
std::string csv_field(const std::string& s);

}  // namespace fbsde
