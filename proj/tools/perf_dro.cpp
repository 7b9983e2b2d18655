// perf-dro: distributionally robust performative prediction CLI.
//
// Subcommands:
//   solve-po    --config cfg.json [--out DIR]
//   solve-drpo  --config cfg.json [--rho R] [--out DIR]
//   solve-tpo   --config cfg.json [--alpha A] [--out DIR]
//   calibrate   --method post-fit|cal-set|four-fifth --config cfg.json [--out DIR]
//   experiment  strategic|location|fairness|toy --config cfg.json [--out DIR]
//
// Exit codes: 0 success, 2 config error, 3 solver divergence.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "perfdro/errors.hpp"
#include "perfdro/experiments.hpp"

namespace {

using namespace perfdro;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<int> trials;
};

ExperimentConfig load_config(const std::string& path, const Overrides& ov) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config JSON parse failure: ") + e.what());
    }
    ExperimentConfig cfg = config_from_json(j);
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.workers) cfg.workers = *ov.workers;
    if (ov.trials) {
        if (*ov.trials < 1) throw ConfigError("--trials must be >= 1");
        cfg.trials = *ov.trials;
    }
    return cfg;
}

DistributionMap build_map(const ExperimentConfig& cfg, const ResolvedData& data) {
    ResponseMap response =
        cfg.response.value_or(StrategicLinearResponse{cfg.eps_nominal, data.strategic_mask});
    return DistributionMap{data.base, std::move(response)};
}

void print_solution(const std::string& name, const DualSolution& sol) {
    std::cout << name << ": objective=" << format_double(sol.objective)
              << " mu_star=" << format_double(sol.mu_star);
    if (sol.nu_star) std::cout << " nu_star=" << format_double(*sol.nu_star);
    std::cout << " outer_iters=" << sol.outer_iters
              << " converged=" << (sol.converged ? "yes" : "no") << "\ntheta = [";
    for (Eigen::Index i = 0; i < sol.theta.size(); ++i) {
        if (i) std::cout << ", ";
        std::cout << format_double(sol.theta[i]);
    }
    std::cout << "]\n";
}

void write_solution_outputs(const std::string& out_dir, const LossModel& model,
                            const DistributionMap& map, const DualSolution& sol) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(std::filesystem::path(out_dir) / "trace.csv", std::ios::binary);
        export_trace_csv(out, sol);
    }
    // Loss histogram diagnostics under the worst-case tilt, when one exists.
    if (std::isfinite(sol.mu_star) && sol.mu_star > 0.0) {
        const LossProfile profile = loss_profile(model, map, sol.theta);
        const Vector tilted = worst_case_weights(profile, sol.mu_star);
        std::ofstream out(std::filesystem::path(out_dir) / "loss_histogram.csv",
                          std::ios::binary);
        export_loss_histogram(out, profile, tilted);
    }
    std::cout << "wrote " << out_dir << "/trace.csv\n";
}

int run_solve(const std::string& which, const std::string& config_path, const Overrides& ov,
              double rho, double alpha, const std::string& out_dir) {
    const ExperimentConfig cfg = load_config(config_path, ov);
    const ResolvedData data = resolve_base_data(cfg);
    const DistributionMap map = build_map(cfg, data);
    const LossModel model{cfg.lambda};
    const Vector theta0 = Vector::Zero(theta_dim(map));

    DualSolution sol;
    if (which == "po") {
        sol = minimize_pr(model, map, cfg.solver, theta0);
    } else if (which == "drpo") {
        sol = minimize_drpr(model, map, rho, cfg.solver, theta0);
    } else {
        sol = minimize_tpr(model, map, alpha, cfg.solver, theta0);
    }
    print_solution("solve-" + which, sol);
    if (which == "drpo" && rho > 0.0) {
        const LossProfile profile = loss_profile(model, map, sol.theta);
        const ExcessRiskBounds bounds = excess_risk_bounds(profile, rho, 0.0, 0.0);
        std::cout << "excess-risk bound (leading order, remainder not included): "
                  << format_double(bounds.drpo_bound) << '\n';
    }
    write_solution_outputs(out_dir, model, map, sol);
    return 0;
}

void write_calibration_trace(const std::string& out_dir, const CalibrationResult& result) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "calibration_trace.csv",
                      std::ios::binary);
    export_calibration_csv(out, result);
    std::cout << "wrote " << out_dir << "/calibration_trace.csv\n";
}

int run_calibrate(const std::string& method, const std::string& config_path,
                  const Overrides& ov, const std::string& out_dir) {
    const ExperimentConfig cfg = load_config(config_path, ov);
    const LossModel model{cfg.lambda};

    if (method == "post-fit") {
        const ResolvedData data = resolve_base_data(cfg);
        const DistributionMap map = build_map(cfg, data);
        const double eta =
            cfg.eta_list.empty()
                ? 1.0
                : *std::max_element(cfg.eta_list.begin(), cfg.eta_list.end());
        const MisspecScenario scenario{
            {cfg.eps_nominal - 0.5 * eta, cfg.eps_nominal + 0.5 * eta}, cfg.eps_nominal};
        const CalibrationResult cal = post_fit_calibrate(
            model, map, scenario, {cfg.calibration.rho_lo, cfg.calibration.rho_hi},
            cfg.solver, cfg.calibration.tol, Vector::Zero(theta_dim(map)));
        std::cout << "rho_cal=" << format_double(cal.selected)
                  << " criterion=" << format_double(cal.achieved_criterion)
                  << " probes=" << cal.search_trace.size() << '\n';
        write_calibration_trace(out_dir, cal);
        return 0;
    }
    if (method == "cal-set") {
        const ResolvedData data = resolve_base_data(cfg);
        const DistributionMap train_map{
            bootstrap_resample(data.base, cfg.n_train, derive_seed(cfg.seed, 17, 0)),
            build_map(cfg, data).response};
        std::vector<std::pair<double, Vector>> candidates;
        const Vector theta0 = Vector::Zero(theta_dim(train_map));
        for (double rho : cfg.rho_list)
            candidates.emplace_back(
                rho, minimize_drpr(model, train_map, rho, cfg.solver, theta0).theta);
        const DistributionMap cal_map{
            bootstrap_resample(data.base, cfg.n_cal, derive_seed(cfg.seed, 23, 0)),
            train_map.response};
        const CalibrationResult cal = calibration_set_select(candidates, cal_map, model,
                                                             CalibrationObjective::risk);
        std::cout << "rho_cal=" << format_double(cal.selected)
                  << " criterion=" << format_double(cal.achieved_criterion) << '\n';
        write_calibration_trace(out_dir, cal);
        return 0;
    }
    if (method == "four-fifth") {
        const int d = cfg.synthetic.kind == "fairness" ? cfg.synthetic.d : 10;
        const FairnessData train = gen_fairness_data(d, cfg.n_train, derive_seed(cfg.seed, 101, 0));
        const FairnessData cal = gen_fairness_data(d, cfg.n_cal, derive_seed(cfg.seed, 303, 0));
        const StrategicLinearResponse response{cfg.eps_nominal, train.strategic_mask};
        const DistributionMap pop_map{train.population, response};
        std::vector<double> alphas = cfg.alpha_list;
        if (alphas.empty()) alphas = {0.0, 0.1, 0.3, 0.5, 1.0};
        std::vector<Vector> solutions;
        const Vector theta0 = Vector::Zero(theta_dim(pop_map));
        for (double alpha : alphas)
            solutions.push_back(minimize_tpr(model, pop_map, alpha, cfg.solver, theta0).theta);
        MixtureMap cal_pop;
        cal_pop.components = {DistributionMap{cal.majority, response},
                              DistributionMap{cal.minority, response}};
        cal_pop.mixture_weights = Vector(2);
        cal_pop.mixture_weights << 0.8, 0.2;
        const CalibrationResult result =
            four_fifth_select(alphas, solutions, cal_pop.components[0], cal_pop.components[1],
                              cal_pop, model);
        std::cout << "alpha_cal=" << format_double(result.selected)
                  << " population_pr=" << format_double(result.achieved_criterion)
                  << " feasible=" << (result.feasible ? "yes" : "no") << '\n';
        write_calibration_trace(out_dir, result);
        return 0;
    }
    throw ConfigError("calibrate: unknown method '" + method + "'");
}

int run_experiment_cmd(const std::string& kind, const std::string& config_path,
                       const Overrides& ov, const std::string& out_dir) {
    ExperimentConfig cfg = load_config(config_path, ov);
    cfg.experiment = experiment_kind_from_string(kind);
    if (cfg.experiment == ExperimentConfig::Kind::fairness &&
        cfg.synthetic.kind != "fairness") {
        cfg.synthetic.kind = "fairness";
        cfg.synthetic.d = 10;
        cfg.synthetic.n = 12500;
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    const SweepResult result = run_experiment(cfg);
    emit_outputs(result, cfg.output_dir);
    std::cout << "experiment " << kind << ": " << result.rows.size() << " rows, "
              << result.aggregates.size() << " aggregates -> " << cfg.output_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributionally robust performative prediction"};
    app.require_subcommand(1);
    app.fallthrough();  // --seed/--workers/--trials may follow the subcommand

    Overrides ov;
    app.add_option("--seed", ov.seed, "override config seed");
    app.add_option("--workers", ov.workers, "override worker count");
    app.add_option("--trials", ov.trials, "override trial count");

    std::string config_path, out_dir, cal_method, experiment_kind;
    double rho = 0.0, alpha = 0.0;

    CLI::App* solve_po = app.add_subcommand("solve-po", "performative risk minimization");
    solve_po->add_option("--config", config_path, "JSON config")->required();
    solve_po->add_option("--out", out_dir, "output directory for trace/diagnostics");

    CLI::App* solve_drpo = app.add_subcommand("solve-drpo", "robust performative risk minimization");
    solve_drpo->add_option("--config", config_path, "JSON config")->required();
    solve_drpo->add_option("--rho", rho, "KL radius");
    solve_drpo->add_option("--out", out_dir, "output directory for trace/diagnostics");

    CLI::App* solve_tpo = app.add_subcommand("solve-tpo", "tilted performative risk minimization");
    solve_tpo->add_option("--config", config_path, "JSON config")->required();
    solve_tpo->add_option("--alpha", alpha, "tilt");
    solve_tpo->add_option("--out", out_dir, "output directory for trace/diagnostics");

    CLI::App* calibrate = app.add_subcommand("calibrate", "critical radius / tilt selection");
    calibrate->add_option("--method", cal_method, "post-fit | cal-set | four-fifth")->required();
    calibrate->add_option("--config", config_path, "JSON config")->required();
    calibrate->add_option("--out", out_dir, "output directory for the search trace");

    CLI::App* experiment = app.add_subcommand("experiment", "run a sweep and emit outputs");
    experiment->add_option("kind", experiment_kind, "strategic | location | fairness | toy")
        ->required();
    experiment->add_option("--config", config_path, "JSON config")->required();
    experiment->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (solve_po->parsed()) return run_solve("po", config_path, ov, 0.0, 0.0, out_dir);
        if (solve_drpo->parsed()) return run_solve("drpo", config_path, ov, rho, 0.0, out_dir);
        if (solve_tpo->parsed()) return run_solve("tpo", config_path, ov, 0.0, alpha, out_dir);
        if (calibrate->parsed()) return run_calibrate(cal_method, config_path, ov, out_dir);
        if (experiment->parsed())
            return run_experiment_cmd(experiment_kind, config_path, ov, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "solver divergence: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
