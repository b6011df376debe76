#include "fbsde/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace fbsde {

namespace {

std::string describe(const std::vector<ConfigIssue>& issues) {
    std::ostringstream out;
    out << issues.size() << " config issue" << (issues.size() == 1 ? "" : "s");
    for (const auto& i : issues) {
        out << "\n  ";
        if (i.line > 0) out << "line " << i.line << ": ";
        if (!i.key.empty()) out << i.key << ": ";
        out << i.message;
    }
    return out.str();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::set<std::string> kKnownKeys = {
    "model.dim",          "model.s0",          "model.mu",          "model.sigma",       "model.rho",
    "model.corr",         "model.r",           "model.repo",        "model.dividend",    "model.r_cl",
    "model.r_cb",         "model.rate_bound",  "model.jump_intensity", "model.jump_size", "model.scheme",
    "contract.payoff",    "contract.strike",   "contract.asset",    "contract.short_asset", "contract.value",
    "contract.maturity",  "collateral.kind",   "collateral.kappa",  "numerics.paths",    "numerics.steps",
    "numerics.seed",      "numerics.degree",   "numerics.picard_tol", "numerics.picard_max", "measures",
};

struct Entry {
    std::string value;
    std::size_t line;
};

class Reader {
public:
    explicit Reader(const std::string& text) {
        std::istringstream in(text);
        std::string raw;
        std::size_t line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            const auto hash = raw.find('#');
            const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                issue(line_no, "", "expected 'key = value', got '" + line + "'");
                continue;
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (!kKnownKeys.count(key)) {
                issue(line_no, key, "unknown key");
                continue;
            }
            if (entries_.count(key)) {
                issue(line_no, key, "duplicate key (first set on line " + std::to_string(entries_[key].line) + ")");
                continue;
            }
            if (value.empty()) {
                issue(line_no, key, "missing value");
                continue;
            }
            entries_[key] = {value, line_no};
        }
    }

    void issue(std::size_t line, const std::string& key, const std::string& message) {
        issues_.push_back({line, key, message});
    }
    void issue(const std::string& key, const std::string& message) { issue(line_of(key), key, message); }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }
    bool has_section(const std::string& prefix) const {
        for (const auto& [k, v] : entries_)
            if (k.rfind(prefix, 0) == 0) return true;
        return false;
    }
    std::size_t line_of(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? 0 : it->second.line;
    }

    std::optional<std::string> text(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second.value;
    }

    std::optional<double> number(const std::string& key) {
        const auto t = text(key);
        if (!t) return std::nullopt;
        const auto v = parse_double(*t);
        if (!v) issue(key, "expected a number, got '" + *t + "'");
        return v;
    }

    double number_or(const std::string& key, double fallback) { return number(key).value_or(fallback); }

    std::optional<std::uint64_t> count(const std::string& key) {
        const auto t = text(key);
        if (!t) return std::nullopt;
        const auto v = parse_double(*t);
        if (!v || *v < 0.0 || *v != std::floor(*v) || *v > 9007199254740992.0) {
            issue(key, "expected a non-negative integer, got '" + *t + "'");
            return std::nullopt;
        }
        return static_cast<std::uint64_t>(*v);
    }

    std::optional<std::vector<double>> list(const std::string& key) {
        const auto t = text(key);
        if (!t) return std::nullopt;
        std::vector<double> out;
        std::istringstream in(*t);
        std::string item;
        while (std::getline(in, item, ',')) {
            const auto v = parse_double(trim(item));
            if (!v) {
                issue(key, "expected a comma-separated list of numbers, got '" + *t + "'");
                return std::nullopt;
            }
            out.push_back(*v);
        }
        return out;
    }

    std::vector<ConfigIssue>& issues() { return issues_; }

private:
    static std::optional<double> parse_double(const std::string& s) {
        double v = 0.0;
        const char* end = s.data() + s.size();
        const auto [ptr, ec] = std::from_chars(s.data(), end, v);
        if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
        return v;
    }

    std::map<std::string, Entry> entries_;
    std::vector<ConfigIssue> issues_;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues) : Error("ConfigError", describe(issues)), issues_(std::move(issues)) {}

ExperimentConfig parse_config_text(const std::string& text) {
    Reader rd(text);
    ExperimentConfig cfg;

    for (const std::string section : {"model", "contract"})
        if (!rd.has_section(section + ".")) rd.issue(0, section, "required section is missing");

    // Model.
    const auto s0 = rd.list("model.s0");
    if (!s0 && rd.has_section("model.")) rd.issue(0, "model.s0", "required key is missing");
    const std::size_t d = s0 ? s0->size() : 0;
    if (const auto dim = rd.count("model.dim"); dim && s0 && *dim != d)
        rd.issue("model.dim", "dim = " + std::to_string(*dim) + " but model.s0 has " + std::to_string(d) + " entries");

    auto sized = [&](const std::string& key, double fallback) {
        auto v = rd.list(key);
        if (!v) return std::vector<double>(d, fallback);
        if (v->size() != d) {
            rd.issue(key, "expected " + std::to_string(d) + " entries, got " + std::to_string(v->size()));
            return std::vector<double>(d, fallback);
        }
        return *v;
    };
    const auto mu = sized("model.mu", 0.0);
    const auto sigma = sized("model.sigma", 0.0);
    const double r = rd.number_or("model.r", 0.0);

    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    if (rd.has("model.rho") && rd.has("model.corr")) rd.issue("model.rho", "give either model.rho or model.corr");
    if (const auto rho = rd.number("model.rho")) {
        if (d != 2) rd.issue("model.rho", "model.rho needs exactly two assets; use model.corr");
        else corr(0, 1) = corr(1, 0) = *rho;
    }
    if (const auto c = rd.list("model.corr")) {
        if (c->size() != d * d) rd.issue("model.corr", "expected d*d = " + std::to_string(d * d) + " entries");
        else
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*c)[i * d + j];
    }

    if (d > 0 && rd.issues().empty()) {
        try {
            cfg.market = black_scholes_market(*s0, mu, sigma, corr, r);
        } catch (const Error& e) {
            rd.issue(rd.has("model.corr") ? "model.corr" : "model.rho", e.what());
        }
    }
    cfg.market.d = d;
    cfg.market.s0 = s0.value_or(std::vector<double>{});
    cfg.market.r = r;
    if (std::all_of(sigma.begin(), sigma.end(), [](double s) { return s == 0.0; })) cfg.market.sigma = {};
    if (rd.has("model.repo")) cfg.market.r_repo = sized("model.repo", r);
    if (rd.has("model.dividend")) cfg.market.dividend = sized("model.dividend", 0.0);
    cfg.market.r_cl = rd.number_or("model.r_cl", r);
    cfg.market.r_cb = rd.number_or("model.r_cb", r);
    cfg.market.rate_bound = rd.number_or("model.rate_bound", 1.0);
    const auto intensity = rd.number("model.jump_intensity");
    const auto jump_size = rd.number("model.jump_size");
    if (intensity.has_value() != jump_size.has_value()) {
        rd.issue(intensity ? "model.jump_size" : "model.jump_intensity",
                 "jumps need both model.jump_intensity and model.jump_size");
    } else if (intensity) {
        if (*intensity < 0.0) rd.issue("model.jump_intensity", "intensity must be non-negative");
        else if (*intensity > 0.0) cfg.market.jumps = JumpSpec::fixed_size(*jump_size, *intensity);
    }
    if (const auto scheme = rd.text("model.scheme")) {
        if (*scheme == "euler") cfg.market.scheme = Scheme::Euler;
        else if (*scheme == "log_euler") cfg.market.scheme = Scheme::LogEuler;
        else rd.issue("model.scheme", "expected euler or log_euler, got '" + *scheme + "'");
    }

    // Contract.
    const auto maturity = rd.number("contract.maturity");
    if (!maturity && rd.has_section("contract.")) rd.issue(0, "contract.maturity", "required key is missing");
    if (maturity && !(*maturity > 0.0)) rd.issue("contract.maturity", "maturity must be positive");
    const double T = maturity.value_or(1.0);
    auto asset_index = [&](const std::string& key, std::size_t fallback) -> std::size_t {
        const auto a = rd.count(key);
        if (!a) return fallback;
        if (*a < 1 || *a > d) {
            rd.issue(key, "asset index must be between 1 and " + std::to_string(d));
            return fallback;
        }
        return static_cast<std::size_t>(*a - 1);
    };
    const auto payoff = rd.text("contract.payoff");
    if (!payoff && rd.has_section("contract.")) rd.issue(0, "contract.payoff", "required key is missing");
    if (payoff) {
        const std::size_t asset = asset_index("contract.asset", 0);
        if (*payoff == "call" || *payoff == "put") {
            const auto strike = rd.number("contract.strike");
            if (!strike) rd.issue(rd.line_of("contract.payoff"), "contract.strike", "required for " + *payoff);
            const double k = strike.value_or(0.0);
            cfg.contract = *payoff == "call" ? ContractSpec::call(asset, k, T) : ContractSpec::put(asset, k, T);
        } else if (*payoff == "exchange") {
            if (d < 2) rd.issue("contract.payoff", "exchange needs at least two assets");
            const std::size_t short_asset = asset_index("contract.short_asset", 1);
            if (short_asset == asset) rd.issue("contract.short_asset", "must differ from contract.asset");
            cfg.contract = ContractSpec::exchange(asset, short_asset, T);
        } else if (*payoff == "identity") {
            cfg.contract = ContractSpec::identity(asset, T);
        } else if (*payoff == "constant") {
            const auto value = rd.number("contract.value");
            if (!value) rd.issue(rd.line_of("contract.payoff"), "contract.value", "required for constant");
            cfg.contract = ContractSpec::constant(value.value_or(0.0), T);
        } else {
            rd.issue("contract.payoff", "unknown payoff '" + *payoff + "' (call, put, exchange, identity, constant)");
        }
    }

    // Collateral.
    if (const auto kind = rd.text("collateral.kind")) {
        if (*kind == "none") cfg.collateral = CollateralSpec::none();
        else if (*kind == "full") cfg.collateral = CollateralSpec::full();
        else if (*kind == "fraction") {
            const auto kappa = rd.number("collateral.kappa");
            if (!kappa) rd.issue(rd.line_of("collateral.kind"), "collateral.kappa", "required for fraction");
            cfg.collateral = CollateralSpec::fraction(kappa.value_or(0.0));
        } else {
            rd.issue("collateral.kind", "unknown collateral '" + *kind + "' (none, full, fraction)");
        }
    }

    // Numerics.
    Numerics& num = cfg.numerics;
    if (const auto v = rd.count("numerics.paths")) num.n_paths = static_cast<std::size_t>(*v);
    if (const auto v = rd.count("numerics.steps")) num.n_steps = static_cast<std::size_t>(*v);
    if (const auto v = rd.count("numerics.seed")) num.seed = *v;
    if (const auto v = rd.count("numerics.degree")) num.solver.degree = static_cast<int>(*v);
    if (const auto v = rd.count("numerics.picard_max")) num.solver.picard_max = static_cast<int>(*v);
    num.solver.picard_tol = rd.number_or("numerics.picard_tol", num.solver.picard_tol);
    if (num.n_paths < 2) rd.issue("numerics.paths", "need at least 2 paths");
    if (num.n_steps < 1) rd.issue("numerics.steps", "need at least 1 step");
    if (num.solver.picard_max < 1) rd.issue("numerics.picard_max", "must be positive");
    if (!(num.solver.picard_tol > 0.0)) rd.issue("numerics.picard_tol", "must be positive");

    // Measures.
    for (const auto& m : split_list(rd.text("measures").value_or("Q"))) {
        try {
            cfg.measures.push_back(Measure::parse(m));
        } catch (const Error& e) {
            rd.issue("measures", e.what());
        }
    }

    if (!rd.issues().empty()) throw ConfigError(std::move(rd.issues()));
    validate_experiment(cfg);
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({{0, "", "cannot open config file '" + path + "'"}});
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void validate_experiment(const ExperimentConfig& cfg) {
    validate_market(cfg.market);
    cfg.numerics.solver.validate();
    (void)build_grid(0.0, cfg.contract.maturity, static_cast<long long>(cfg.numerics.n_steps));
    if (cfg.measures.empty()) throw ConfigError({{0, "measures", "no measures requested"}});
    for (const auto& m : cfg.measures) {
        (void)measure_tilt(cfg.market, m);
        if (m.kind == Measure::Kind::GOP && cfg.market.has_jumps())
            throw UnsupportedConfiguration("gop pricing is implemented for diffusion markets only");
    }
    (void)build_collateral_bsde(cfg.market, cfg.contract, cfg.collateral, Measure::Q());
}

}  // namespace fbsde
