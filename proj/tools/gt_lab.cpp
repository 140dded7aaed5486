// Experiment runner: generates instances, runs recovery/detection sweeps and
// writes the threshold/moment diagnostics as CSV with a # key=value metadata
// header. Exit codes: 0 success, 2 configuration error, 3 numeric
// non-convergence.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "gtlab/experiments.hpp"

namespace {

unsigned default_workers() {
    if (const char* env = std::getenv("GT_LAB_WORKERS")) {
        int v = std::atoi(env);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return 1;
}

void emit(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::invalid_argument("cannot open output path: " + path);
    os << content;
    os.flush();
    if (!os) throw std::invalid_argument("write failed: " + path);
}

// flat key=value file; '#' starts a comment, keys match long option names
std::map<std::string, std::string> read_flat_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot read config file: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (!key.empty()) out[key] = value;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"group-testing simulation lab"};
    app.require_subcommand(1);

    std::string design_str = "constant_column";
    std::string out_path = "-";
    std::string statistic = "auto";
    std::string algo = "comp";
    std::string config_path;
    std::string theta_grid_spec, c_grid_spec, alpha_grid_spec = "0.01:0.99:0.01";
    double theta = 0.3, c = 1.0, n_real = 1e5, t_param = -1.0, epsilon = 0.02;
    double threshold_factor = 1.5;
    std::uint64_t trials = 50, seed = 1;
    unsigned workers = default_workers();

    // config-file setters by key; the file only fills options not given as
    // flags, so flags always win
    std::map<std::string, std::function<void(const std::string&)>> setters;
    auto add_str = [&](CLI::App* sub, const std::string& name, std::string& var,
                       const std::string& help = "") {
        sub->add_option("--" + name, var, help);
        setters[name] = [&var](const std::string& v) { var = v; };
    };
    auto add_real = [&](CLI::App* sub, const std::string& name, double& var,
                        const std::string& help = "") {
        sub->add_option("--" + name, var, help);
        setters[name] = [&var](const std::string& v) { var = std::stod(v); };
    };
    auto add_u64 = [&](CLI::App* sub, const std::string& name, std::uint64_t& var,
                       const std::string& help = "") {
        sub->add_option("--" + name, var, help);
        setters[name] = [&var](const std::string& v) { var = std::stoull(v); };
    };

    auto add_common = [&](CLI::App* sub) {
        add_u64(sub, "seed", seed, "master RNG seed");
        add_str(sub, "out", out_path, "output path, - for stdout");
        sub->add_option("--workers", workers, "worker threads (default GT_LAB_WORKERS or 1)");
        setters["workers"] = [&workers](const std::string& v) {
            workers = static_cast<unsigned>(std::stoul(v));
        };
        add_str(sub, "config", config_path, "flat key=value config file; flags override it");
    };

    auto* gen = app.add_subcommand("gen", "generate one full instance");
    add_str(gen, "design", design_str);
    add_real(gen, "theta", theta);
    add_real(gen, "c", c);
    add_real(gen, "n", n_real);
    add_common(gen);

    auto* recover = app.add_subcommand("recover", "recovery algorithm sweep");
    add_str(recover, "design", design_str);
    add_str(recover, "algo", algo, "comp | separate | brute");
    add_real(recover, "theta", theta);
    add_real(recover, "c", c);
    add_real(recover, "n", n_real);
    add_u64(recover, "trials", trials);
    add_real(recover, "threshold-factor", threshold_factor,
             "separate decoding keeps survivors with >= factor*q*M positive tests");
    add_common(recover);

    auto* detect = app.add_subcommand("detect", "null/planted detection experiment");
    add_str(detect, "design", design_str);
    add_real(detect, "theta", theta);
    add_real(detect, "c", c);
    add_real(detect, "n", n_real);
    add_u64(detect, "trials", trials, "null/planted pairs; half are held out");
    add_str(detect, "statistic", statistic,
            "auto | cc_degree_variance | cc_degree_variance_centered | bern_high_degree | "
            "bern_poly");
    add_common(detect);

    auto* thresholds = app.add_subcommand("thresholds", "threshold curves over a theta grid");
    add_str(thresholds, "design", design_str);
    add_str(thresholds, "theta-grid", theta_grid_spec, "lo:hi:step or comma list");
    add_real(thresholds, "c", c, "region column is evaluated at this c");
    add_common(thresholds);

    auto* phase = app.add_subcommand("phase-diagram", "region classification over a grid");
    add_str(phase, "design", design_str);
    add_str(phase, "theta-grid", theta_grid_spec);
    add_str(phase, "c-grid", c_grid_spec);
    add_common(phase);

    auto* moments = app.add_subcommand("moments", "overlap rate function grid");
    add_real(moments, "c", c);
    add_str(moments, "alpha-grid", alpha_grid_spec);
    add_common(moments);

    auto* aon = app.add_subcommand("aon", "uniform-solution overlap sweep over c");
    add_real(aon, "theta", theta);
    add_str(aon, "c-grid", c_grid_spec);
    add_real(aon, "n", n_real);
    add_u64(aon, "trials", trials);
    add_common(aon);

    auto* chi2 = app.add_subcommand("chi2", "overlap-resolved second-moment ledger");
    add_real(chi2, "theta", theta);
    add_real(chi2, "c", c);
    add_real(chi2, "t", t_param, "degree-cap constant; omit or <=0 for uncapped");
    add_real(chi2, "epsilon", epsilon);
    add_real(chi2, "n", n_real);
    add_common(chi2);

    CLI::App* sub = nullptr;
    try {
        app.parse(argc, argv);
        sub = app.get_subcommands().at(0);
        if (!config_path.empty()) {
            for (const auto& [key, value] : read_flat_config(config_path)) {
                auto it = setters.find(key);
                if (it == setters.end()) throw std::invalid_argument("unknown config key: " + key);
                const CLI::Option* opt = sub->get_option_no_throw("--" + key);
                if (opt == nullptr) continue;          // key belongs to another command
                if (opt->count() > 0) continue;        // flag given explicitly: flags win
                it->second(value);
            }
        }
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        auto design = gtlab::design_from_name(design_str);
        auto n = static_cast<std::uint64_t>(n_real + 0.5);
        std::string output;
        if (sub == gen) {
            output = gtlab::gen_output(design, theta, c, n, seed);
        } else if (sub == recover) {
            output = gtlab::recover_csv(design, theta, c, n, algo, threshold_factor, trials, seed,
                                        workers);
        } else if (sub == detect) {
            auto res = gtlab::run_detection_experiment(design, theta, c, n, statistic, trials,
                                                       seed, workers);
            output = gtlab::detect_csv(design, theta, c, n, trials, seed, res);
        } else if (sub == thresholds) {
            output = gtlab::thresholds_csv(design, gtlab::parse_grid(theta_grid_spec), c, seed);
        } else if (sub == phase) {
            output = gtlab::phase_csv(design, gtlab::parse_grid(theta_grid_spec),
                                      gtlab::parse_grid(c_grid_spec), seed);
        } else if (sub == moments) {
            output = gtlab::moments_csv(c, gtlab::parse_grid(alpha_grid_spec), seed);
        } else if (sub == aon) {
            output = gtlab::aon_csv(theta, gtlab::parse_grid(c_grid_spec), n, trials, seed,
                                    workers);
        } else if (sub == chi2) {
            double t = t_param > 0 ? t_param : std::numeric_limits<double>::infinity();
            output = gtlab::chi2_csv(theta, c, t, epsilon, n, seed);
        }
        emit(out_path, output);
    } catch (const gtlab::NonConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
