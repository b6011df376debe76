#include "fbsde/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fbsde {

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

MeasureRow run_one(const ExperimentConfig& cfg, const Measure& m, std::size_t n_paths, std::size_t n_steps) {
    const auto start = std::chrono::steady_clock::now();
    const TimeGrid grid = build_grid(0.0, cfg.contract.maturity, static_cast<long long>(n_steps));
    MeasureRow row;
    row.estimate = price_contract(cfg.market, cfg.contract, cfg.collateral, m, grid, n_paths, cfg.numerics.seed,
                                  cfg.numerics.solver);
    row.n_paths = n_paths;
    row.n_steps = n_steps;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return row;
}

}  // namespace

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

RunReport run_experiment(const ExperimentConfig& cfg) {
    validate_experiment(cfg);
    RunReport report;
    for (const auto& m : cfg.measures)
        report.rows.push_back(run_one(cfg, m, cfg.numerics.n_paths, cfg.numerics.n_steps));
    for (std::size_t a = 0; a < report.rows.size(); ++a) {
        for (std::size_t b = a + 1; b < report.rows.size(); ++b) {
            const auto& ea = report.rows[a].estimate;
            const auto& eb = report.rows[b].estimate;
            PairwiseGap gap;
            gap.a = ea.measure;
            gap.b = eb.measure;
            gap.difference = ea.y0 - eb.y0;
            gap.paired_stderr = paired_stderr(ea.pathwise, eb.pathwise);
            gap.in_stderr = gap.paired_stderr > 0.0 ? std::abs(gap.difference) / gap.paired_stderr
                                                    : (gap.difference == 0.0 ? 0.0 : INFINITY);
            report.pairs.push_back(gap);
        }
    }
    return report;
}

std::string report_csv(const RunReport& report, const RunOptions& options) {
    std::ostringstream out;
    out << "measure,y0,stderr,n_paths,n_steps,picard_iters,wall_ms\r\n";
    for (const auto& row : report.rows) {
        out << csv_field(row.estimate.measure) << ',' << format_double(row.estimate.y0) << ','
            << format_double(row.estimate.std_error) << ',' << row.n_paths << ',' << row.n_steps << ','
            << row.estimate.iterations << ',';
        if (options.record_timing) out << format_double(row.wall_ms);
        out << "\r\n";
    }
    return out.str();
}

RunReport convergence_study(const ExperimentConfig& cfg,
                            const std::vector<std::pair<std::size_t, std::size_t>>& refinements) {
    if (refinements.empty()) throw InvalidSpec("convergence study needs at least one refinement");
    validate_experiment(cfg);
    RunReport report;
    for (const auto& [paths, steps] : refinements) {
        if (paths < 2 || steps < 1) throw InvalidSpec("refinements need at least 2 paths and 1 step");
        for (const auto& m : cfg.measures) report.rows.push_back(run_one(cfg, m, paths, steps));
    }
    return report;
}

}  // namespace fbsde
