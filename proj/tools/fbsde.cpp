// Experiment runner: fbsde price | converge.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fbsde/config.hpp"
#include "fbsde/experiment.hpp"
#include "fbsde/parallel.hpp"

namespace {

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& option) {
    std::vector<std::size_t> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        while (pos < item.size() && item[pos] == ' ') ++pos;
        if (pos != item.size() || v < 1.0 || v != static_cast<double>(static_cast<std::size_t>(v)))
            throw fbsde::ConfigError({{0, option, "expected a comma-separated list of positive integers"}});
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw fbsde::ConfigError({{0, option, "list is empty"}});
    return out;
}

void write_output(const std::string& csv, const std::string& path) {
    if (path.empty()) {
        std::cout << csv;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fbsde::ConfigError({{0, "--out", "cannot write '" + path + "'"}});
    out << csv;
}

nlohmann::json report_json(const fbsde::RunReport& report) {
    nlohmann::json j;
    for (const auto& row : report.rows) {
        j["measures"].push_back({{"measure", row.estimate.measure},
                                 {"y0", row.estimate.y0},
                                 {"stderr", row.estimate.std_error},
                                 {"n_paths", row.n_paths},
                                 {"n_steps", row.n_steps},
                                 {"picard_iters", row.estimate.iterations},
                                 {"picard_gaps", row.estimate.gaps},
                                 {"wall_ms", row.wall_ms}});
    }
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : report.pairs)
        j["pairs"].push_back({{"a", p.a},
                              {"b", p.b},
                              {"difference", p.difference},
                              {"paired_stderr", p.paired_stderr},
                              {"in_stderr", p.in_stderr}});
    return j;
}

int fail(const std::string& kind, const std::string& detail, int code) {
    std::cout << "status=error kind=" << kind << '\n';
    std::cout.flush();
    std::cerr << "error: " << detail << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo pricing of collateralized claims under equivalent measures"};
    app.require_subcommand(1);

    std::string config_path, out_path, measure_override, report_path, paths_list, steps_list;
    long long paths = 0, steps = 0;
    unsigned long long seed = 0;
    bool record_timing = false;

    auto* price = app.add_subcommand("price", "price the configured contract under each requested measure");
    price->add_option("--config", config_path, "experiment config file")->required();
    price->add_option("--paths", paths, "override numerics.paths");
    price->add_option("--steps", steps, "override numerics.steps");
    price->add_option("--seed", seed, "override numerics.seed");
    price->add_option("--measure", measure_override, "override measures (P, Q, gop, numeraire:<i>; comma list)");
    price->add_option("--out", out_path, "CSV output file (default stdout)");
    price->add_option("--report", report_path, "also write a JSON report with Picard gaps and pairwise gaps");
    price->add_flag("--record-timing", record_timing, "fill the wall_ms column");

    auto* converge = app.add_subcommand("converge", "tabulate y0 over a grid of path and step counts");
    converge->add_option("--config", config_path, "experiment config file")->required();
    converge->add_option("--paths-list", paths_list, "comma-separated path counts");
    converge->add_option("--steps-list", steps_list, "comma-separated step counts");
    converge->add_option("--seed", seed, "override numerics.seed");
    converge->add_option("--measure", measure_override, "override measures");
    converge->add_option("--out", out_path, "CSV output file (default stdout)");
    converge->add_flag("--record-timing", record_timing, "fill the wall_ms column");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cout << "status=error kind=UsageError\n";
        std::cout.flush();
        app.exit(e);
        return 64;
    }

    try {
        fbsde::parallel::apply_thread_cap_from_env();
        fbsde::ExperimentConfig cfg = fbsde::parse_config(config_path);
        if (paths < 0 || steps < 0) throw fbsde::ConfigError({{0, "--paths/--steps", "must be positive"}});
        if (paths > 0) cfg.numerics.n_paths = static_cast<std::size_t>(paths);
        if (steps > 0) cfg.numerics.n_steps = static_cast<std::size_t>(steps);
        if (app.got_subcommand(price) ? price->count("--seed") : converge->count("--seed"))
            cfg.numerics.seed = seed;
        if (!measure_override.empty()) {
            cfg.measures.clear();
            std::istringstream in(measure_override);
            std::string item;
            while (std::getline(in, item, ',')) cfg.measures.push_back(fbsde::Measure::parse(item));
        }
        const fbsde::RunOptions options{record_timing};

        fbsde::RunReport report;
        if (app.got_subcommand(price)) {
            report = fbsde::run_experiment(cfg);
            if (!report_path.empty()) {
                std::ofstream js(report_path);
                if (!js) throw fbsde::ConfigError({{0, "--report", "cannot write '" + report_path + "'"}});
                js << report_json(report).dump(2) << '\n';
            }
        } else {
            const auto plist = paths_list.empty() ? std::vector<std::size_t>{cfg.numerics.n_paths}
                                                  : parse_sizes(paths_list, "--paths-list");
            const auto slist = steps_list.empty() ? std::vector<std::size_t>{cfg.numerics.n_steps}
                                                  : parse_sizes(steps_list, "--steps-list");
            std::vector<std::pair<std::size_t, std::size_t>> refinements;
            for (auto p : plist)
                for (auto s : slist) refinements.emplace_back(p, s);
            report = fbsde::convergence_study(cfg, refinements);
        }
        write_output(fbsde::report_csv(report, options), out_path);
        if (!out_path.empty()) std::cout << "status=ok rows=" << report.rows.size() << '\n';
        return 0;
    } catch (const fbsde::ConfigError& e) {
        return fail(e.kind(), e.what(), 2);
    } catch (const fbsde::Error& e) {
        return fail(e.kind(), e.what(), 3);
    } catch (const std::exception& e) {
        return fail("InternalError", e.what(), 1);
    }
}
