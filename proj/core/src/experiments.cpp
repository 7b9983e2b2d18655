#include "perfdro/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "perfdro/errors.hpp"
#include "perfdro/svgplot.hpp"

namespace perfdro {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    int w = workers <= 0 ? static_cast<int>(std::thread::hardware_concurrency()) : workers;
    w = std::max(1, std::min<int>(w, static_cast<int>(n)));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto body = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(w));
    for (int t = 0; t < w; ++t) threads.emplace_back(body);
    for (std::thread& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<double> linspace(double lo, double hi, int points) {
    std::vector<double> out;
    if (points <= 1 || lo == hi) {
        out.push_back(0.5 * (lo + hi));
        return out;
    }
    out.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        out.push_back(lo + (hi - lo) * static_cast<double>(i) / (points - 1));
    return out;
}

struct MethodSpec {
    std::string name;
    double tuning = 0.0;
};

// Mean and standard error of the mean over trials (0 for a single trial).
std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (n == 0) return {kNaN, kNaN};
    const double mean = pairwise_sum(std::span<const double>(xs)) / static_cast<double>(n);
    if (n == 1) return {mean, 0.0};
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (xs[i] - mean) * (xs[i] - mean);
    const double var = pairwise_sum(std::span<const double>(sq)) / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

void append_aggregates(SweepResult& result) {
    // Group rows by (method, tuning, eps_true) preserving first-seen order.
    struct Key {
        std::string method;
        double tuning;
        double eps_true;
        bool operator==(const Key& o) const {
            return method == o.method && tuning == o.tuning && eps_true == o.eps_true;
        }
    };
    std::vector<Key> keys;
    std::vector<std::vector<const ResultRow*>> groups;
    for (const ResultRow& row : result.rows) {
        const Key k{row.method, row.tuning, row.eps_true};
        std::size_t gi = keys.size();
        for (std::size_t i = 0; i < keys.size(); ++i)
            if (keys[i] == k) {
                gi = i;
                break;
            }
        if (gi == keys.size()) {
            keys.push_back(k);
            groups.emplace_back();
        }
        groups[gi].push_back(&row);
    }
    const std::vector<std::pair<std::string, double ResultRow::*>> metrics = {
        {"risk", &ResultRow::risk},
        {"accuracy", &ResultRow::accuracy},
        {"ber", &ResultRow::ber},
        {"risk_majority", &ResultRow::risk_majority},
        {"risk_minority", &ResultRow::risk_minority},
        {"accuracy_majority", &ResultRow::accuracy_majority},
        {"accuracy_minority", &ResultRow::accuracy_minority},
    };
    for (std::size_t gi = 0; gi < keys.size(); ++gi) {
        for (const auto& [name, member] : metrics) {
            std::vector<double> xs;
            xs.reserve(groups[gi].size());
            for (const ResultRow* row : groups[gi])
                if (std::isfinite(row->*member)) xs.push_back(row->*member);
            if (xs.empty()) continue;
            const auto [mean, se] = mean_stderr(xs);
            result.aggregates.push_back(
                {keys[gi].method, keys[gi].tuning, keys[gi].eps_true, name, mean, se});
        }
    }
}

void sort_rows(SweepResult& result) {
    std::stable_sort(result.rows.begin(), result.rows.end(),
                     [](const ResultRow& a, const ResultRow& b) {
                         if (a.trial != b.trial) return a.trial < b.trial;
                         if (a.method != b.method) return a.method < b.method;
                         if (a.tuning != b.tuning) return a.tuning < b.tuning;
                         return a.eps_true < b.eps_true;
                     });
}

Vector zeros(Eigen::Index d) { return Vector::Zero(d); }

}  // namespace

std::string to_string(ExperimentConfig::Kind kind) {
    switch (kind) {
        case ExperimentConfig::Kind::strategic: return "strategic";
        case ExperimentConfig::Kind::location: return "location";
        case ExperimentConfig::Kind::fairness: return "fairness";
        case ExperimentConfig::Kind::toy: return "toy";
    }
    return "unknown";
}

ExperimentConfig::Kind experiment_kind_from_string(const std::string& name) {
    if (name == "strategic") return ExperimentConfig::Kind::strategic;
    if (name == "location") return ExperimentConfig::Kind::location;
    if (name == "fairness") return ExperimentConfig::Kind::fairness;
    if (name == "toy") return ExperimentConfig::Kind::toy;
    throw ConfigError("unknown experiment '" + name + "'");
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        if (j.contains("experiment"))
            cfg.experiment = experiment_kind_from_string(j.at("experiment").get<std::string>());
        cfg.eps_nominal = j.value("eps_nominal", cfg.eps_nominal);
        cfg.lambda = j.value("lambda", cfg.lambda);
        if (j.contains("eta_list")) cfg.eta_list = j.at("eta_list").get<std::vector<double>>();
        if (j.contains("rho_list")) cfg.rho_list = j.at("rho_list").get<std::vector<double>>();
        if (j.contains("alpha_list"))
            cfg.alpha_list = j.at("alpha_list").get<std::vector<double>>();
        cfg.trials = j.value("trials", cfg.trials);
        cfg.n_train = j.value("n_train", cfg.n_train);
        cfg.n_cal = j.value("n_cal", cfg.n_cal);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.eps_grid_points = j.value("eps_grid_points", cfg.eps_grid_points);
        cfg.workers = j.value("workers", cfg.workers);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);

        if (cfg.experiment == ExperimentConfig::Kind::fairness) {
            cfg.synthetic.kind = "fairness";
            cfg.synthetic.d = 10;
            cfg.synthetic.n = 12500;
        }
        if (j.contains("data")) {
            const auto& data = j.at("data");
            if (data.contains("csv")) {
                CsvDataSpec spec;
                const auto& c = data.at("csv");
                spec.path = c.at("path").get<std::string>();
                spec.schema.feature_columns =
                    c.at("feature_columns").get<std::vector<std::string>>();
                spec.schema.label_column = c.at("label_column").get<std::string>();
                if (c.contains("strategic_mask"))
                    for (const auto& m : c.at("strategic_mask"))
                        spec.schema.strategic_mask.push_back(m.get<int>() != 0);
                cfg.csv_data = std::move(spec);
            }
            if (data.contains("synthetic")) {
                const auto& s = data.at("synthetic");
                cfg.synthetic.kind = s.value("kind", cfg.synthetic.kind);
                cfg.synthetic.d = s.value("d", cfg.synthetic.d);
                cfg.synthetic.n = s.value("n", cfg.synthetic.n);
            }
        }
        if (j.contains("response")) cfg.response = response_map_from_json(j.at("response"));
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            cfg.solver.max_outer_iters = s.value("max_outer_iters", cfg.solver.max_outer_iters);
            cfg.solver.inner_gd_iters = s.value("inner_gd_iters", cfg.solver.inner_gd_iters);
            cfg.solver.step_size = s.value("step_size", cfg.solver.step_size);
            cfg.solver.step_decay = s.value("step_decay", cfg.solver.step_decay);
            cfg.solver.grad_tol = s.value("grad_tol", cfg.solver.grad_tol);
            cfg.solver.mu_tol = s.value("mu_tol", cfg.solver.mu_tol);
        }
        if (j.contains("calibration")) {
            const auto& c = j.at("calibration");
            cfg.calibration.enabled = c.value("enabled", cfg.calibration.enabled);
            cfg.calibration.rho_lo = c.value("rho_lo", cfg.calibration.rho_lo);
            cfg.calibration.rho_hi = c.value("rho_hi", cfg.calibration.rho_hi);
            cfg.calibration.tol = c.value("tol", cfg.calibration.tol);
        }
        if (j.contains("toy")) {
            const auto& t = j.at("toy");
            cfg.toy.a1 = t.value("a1", cfg.toy.a1);
            cfg.toy.a0 = t.value("a0", cfg.toy.a0);
            cfg.toy.sigma2 = t.value("sigma2", cfg.toy.sigma2);
            cfg.toy.rho = t.value("rho", cfg.toy.rho);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (cfg.trials < 1) throw ConfigError("config: trials must be >= 1");
    if (cfg.n_train == 0) throw ConfigError("config: n_train must be >= 1");
    if (cfg.eps_grid_points < 1) throw ConfigError("config: eps_grid_points must be >= 1");
    return cfg;
}

EmpiricalDistribution gen_credit_like_data(int d, std::size_t n, std::uint64_t seed) {
    if (d < 1 || n < 2) throw std::invalid_argument("gen_credit_like_data: need d >= 1, n >= 2");
    Vector w_true(d);
    for (int j = 0; j < d; ++j)
        w_true[j] = (j % 2 == 0 ? 1.0 : -1.0) * 1.5 * (1.0 - 0.08 * j);
    Rng rng(seed);
    std::vector<Sample> atoms;
    atoms.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.features.resize(d);
        for (int j = 0; j < d; ++j) s.features[j] = rng.gauss();
        const double p = sigmoid(w_true.dot(s.features));
        s.label = rng.uniform01() < p ? 1 : 0;
        atoms.push_back(std::move(s));
    }
    return EmpiricalDistribution::uniform(std::move(atoms));
}

std::vector<bool> credit_like_strategic_mask(int d) {
    std::vector<bool> mask(static_cast<std::size_t>(d), false);
    for (int j = 0; j < std::min(d, 3); ++j) mask[static_cast<std::size_t>(j)] = true;
    return mask;
}

FairnessData gen_fairness_data(int d, std::size_t n, std::uint64_t seed) {
    if (d < 2 || n < 2) throw std::invalid_argument("gen_fairness_data: need d >= 2, n >= 2");
    constexpr double kGamma = 0.8;
    constexpr double kMeanMajority = 1.0;
    constexpr double kMeanMinority = 0.8;
    const double sd = std::sqrt(0.1);
    Rng rng(seed);
    std::vector<Sample> population, majority, minority;
    std::vector<int> group;
    population.reserve(n);
    group.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int g = rng.uniform01() < kGamma ? 0 : 1;
        const double mu = g == 0 ? kMeanMajority : kMeanMinority;
        Sample s;
        s.features.resize(d);
        double total = 0.0;
        for (int j = 0; j < d; ++j) {
            s.features[j] = mu + sd * rng.gauss();
            total += s.features[j];
        }
        s.label = total <= mu * static_cast<double>(d) ? 0 : 1;
        population.push_back(s);
        group.push_back(g);
        (g == 0 ? majority : minority).push_back(std::move(s));
    }
    if (majority.empty() || minority.empty())
        throw EmptyDataError("gen_fairness_data: a subpopulation came out empty; increase n");
    FairnessData out{EmpiricalDistribution::uniform(std::move(population)),
                     EmpiricalDistribution::uniform(std::move(majority)),
                     EmpiricalDistribution::uniform(std::move(minority)),
                     std::move(group),
                     std::vector<bool>(static_cast<std::size_t>(d), false)};
    for (int j = 0; j < d / 2; ++j) out.strategic_mask[static_cast<std::size_t>(j)] = true;
    return out;
}

ResolvedData resolve_base_data(const ExperimentConfig& cfg) {
    if (cfg.csv_data.has_value()) {
        EmpiricalDistribution base = load_csv(cfg.csv_data->path, cfg.csv_data->schema);
        std::vector<bool> mask = cfg.csv_data->schema.strategic_mask;
        if (mask.empty()) mask = credit_like_strategic_mask(static_cast<int>(base.dim()));
        if (mask.size() != static_cast<std::size_t>(base.dim()))
            throw ConfigError("config: strategic_mask length differs from feature count");
        return {std::move(base), std::move(mask)};
    }
    const int d = cfg.synthetic.d;
    if (cfg.synthetic.kind == "fairness") {
        FairnessData f = gen_fairness_data(d, cfg.synthetic.n, derive_seed(cfg.seed, 0, 9));
        return {std::move(f.population), std::move(f.strategic_mask)};
    }
    return {gen_credit_like_data(d, cfg.synthetic.n, derive_seed(cfg.seed, 0, 9)),
            credit_like_strategic_mask(d)};
}

namespace {

// Shared harness for the strategic and location sweeps: per trial, bootstrap
// a training base, solve one theta per method, evaluate over the eps_true
// grid on the test (full) base, and tabulate per-eta worst-case improvement
// over the PO baseline.
struct GridExperiment {
    std::vector<MethodSpec> methods;
    std::vector<double> eps_grid;
    // Builds the nominal training map for a trial.
    std::function<DistributionMap(const EmpiricalDistribution& train_base, int trial)>
        nominal_map;
    // Builds the evaluation (true) map for one eps_true value.
    std::function<DistributionMap(double eps_true)> true_map;
    // Solves one method on the nominal map.
    std::function<Vector(const DistributionMap& nominal, const MethodSpec& method)> solve;
};

void run_grid_experiment(const ExperimentConfig& cfg, const EmpiricalDistribution& base,
                         const GridExperiment& ge, SweepResult& result) {
    const LossModel model{cfg.lambda};
    const int trials = cfg.trials;
    const std::size_t n_methods = ge.methods.size();

    std::vector<EmpiricalDistribution> train_bases;
    train_bases.reserve(static_cast<std::size_t>(trials));
    for (int t = 0; t < trials; ++t)
        train_bases.push_back(
            bootstrap_resample(base, cfg.n_train, derive_seed(cfg.seed, 17, t)));

    struct Cell {
        Vector theta;
        bool ok = false;
    };
    std::vector<Cell> cells(static_cast<std::size_t>(trials) * n_methods);
    parallel_for(cells.size(), cfg.workers, [&](std::size_t idx) {
        const int trial = static_cast<int>(idx / n_methods);
        const MethodSpec& method = ge.methods[idx % n_methods];
        const DistributionMap nominal =
            ge.nominal_map(train_bases[static_cast<std::size_t>(trial)], trial);
        try {
            cells[idx].theta = ge.solve(nominal, method);
            cells[idx].ok = true;
        } catch (const std::exception&) {
            cells[idx].ok = false;  // recorded as NaN rows, sweep continues
        }
    });

    // Evaluation over the eps grid on the full base.
    for (int trial = 0; trial < trials; ++trial) {
        for (std::size_t mi = 0; mi < n_methods; ++mi) {
            const Cell& cell = cells[static_cast<std::size_t>(trial) * n_methods + mi];
            for (double eps_true : ge.eps_grid) {
                ResultRow row;
                row.trial = trial;
                row.method = ge.methods[mi].name;
                row.tuning = ge.methods[mi].tuning;
                row.eps_true = eps_true;
                row.risk_majority = row.risk_minority = kNaN;
                row.accuracy_majority = row.accuracy_minority = kNaN;
                if (cell.ok) {
                    const DistributionMap truth = ge.true_map(eps_true);
                    const EmpiricalDistribution induced = pushforward(truth, cell.theta);
                    const ClassificationMetrics m = metrics(model, induced, cell.theta);
                    row.risk = m.risk;
                    row.accuracy = m.accuracy;
                    row.ber = m.ber.value_or(kNaN);
                } else {
                    row.risk = row.accuracy = row.ber = kNaN;
                }
                result.rows.push_back(std::move(row));
            }
        }
    }

    // Relative worst-case improvement vs the PO baseline, per eta.
    const double center = 0.5 * (ge.eps_grid.front() + ge.eps_grid.back());
    auto worst_risk = [&](int trial, std::size_t mi, double eta) {
        double worst = -std::numeric_limits<double>::infinity();
        for (const ResultRow& row : result.rows) {
            if (row.trial != trial || row.method != ge.methods[mi].name ||
                row.tuning != ge.methods[mi].tuning)
                continue;
            if (std::abs(row.eps_true - center) <= 0.5 * eta + 1e-12)
                worst = std::max(worst, row.risk);
        }
        return worst;
    };
    for (int trial = 0; trial < trials; ++trial) {
        for (double eta : cfg.eta_list) {
            const double worst_po = worst_risk(trial, 0, eta);
            for (std::size_t mi = 1; mi < n_methods; ++mi) {
                const double worst_m = worst_risk(trial, mi, eta);
                ImprovementRow imp;
                imp.trial = trial;
                imp.method = ge.methods[mi].name;
                imp.tuning = ge.methods[mi].tuning;
                imp.eta = eta;
                imp.improvement_pct = std::isfinite(worst_po) && std::isfinite(worst_m)
                                          ? (worst_po - worst_m) / worst_po * 100.0
                                          : kNaN;
                result.improvements.push_back(imp);
            }
        }
    }
}

}  // namespace

SweepResult run_strategic_experiment(const ExperimentConfig& cfg) {
    if (cfg.rho_list.empty()) throw ConfigError("strategic experiment: rho_list is empty");
    if (cfg.eta_list.empty()) throw ConfigError("strategic experiment: eta_list is empty");
    const ResolvedData data = resolve_base_data(cfg);
    if (std::none_of(data.strategic_mask.begin(), data.strategic_mask.end(),
                     [](bool b) { return b; }))
        throw ConfigError("strategic experiment: no strategic features");
    const LossModel model{cfg.lambda};
    const double eta_max = *std::max_element(cfg.eta_list.begin(), cfg.eta_list.end());

    SweepResult result;
    result.kind = ExperimentConfig::Kind::strategic;

    GridExperiment ge;
    ge.methods.push_back({"po", 0.0});
    for (double rho : cfg.rho_list) ge.methods.push_back({"drpo", rho});
    ge.eps_grid = linspace(cfg.eps_nominal - 0.5 * eta_max, cfg.eps_nominal + 0.5 * eta_max,
                           cfg.eps_grid_points);
    ge.nominal_map = [&](const EmpiricalDistribution& train_base, int) {
        return DistributionMap{train_base,
                               StrategicLinearResponse{cfg.eps_nominal, data.strategic_mask}};
    };
    ge.true_map = [&](double eps_true) {
        return DistributionMap{data.base,
                               StrategicLinearResponse{eps_true, data.strategic_mask}};
    };
    ge.solve = [&](const DistributionMap& nominal, const MethodSpec& method) {
        const Vector theta0 = zeros(theta_dim(nominal));
        if (method.name == "po") return minimize_pr(model, nominal, cfg.solver, theta0).theta;
        return minimize_drpr(model, nominal, method.tuning, cfg.solver, theta0).theta;
    };
    run_grid_experiment(cfg, data.base, ge, result);

    if (cfg.calibration.enabled) {
        for (int trial = 0; trial < cfg.trials; ++trial) {
            const EmpiricalDistribution train_base =
                bootstrap_resample(data.base, cfg.n_train, derive_seed(cfg.seed, 17, trial));
            const DistributionMap nominal{
                train_base, StrategicLinearResponse{cfg.eps_nominal, data.strategic_mask}};
            for (double eta : cfg.eta_list) {
                if (eta <= 0.0) continue;
                const MisspecScenario scenario{
                    {cfg.eps_nominal - 0.5 * eta, cfg.eps_nominal + 0.5 * eta},
                    cfg.eps_nominal};
                CalibrationRecord rec;
                rec.trial = trial;
                rec.method = "post_fit";
                rec.eta = eta;
                try {
                    const CalibrationResult cal = post_fit_calibrate(
                        model, nominal, scenario,
                        {cfg.calibration.rho_lo, cfg.calibration.rho_hi}, cfg.solver,
                        cfg.calibration.tol, zeros(theta_dim(nominal)));
                    rec.selected = cal.selected;
                    rec.criterion = cal.achieved_criterion;
                    rec.feasible = cal.feasible;
                } catch (const std::exception&) {
                    rec.selected = kNaN;
                    rec.criterion = kNaN;
                    rec.feasible = false;
                }
                result.calibrations.push_back(rec);
            }
        }
    }

    sort_rows(result);
    append_aggregates(result);
    return result;
}

SweepResult run_location_experiment(const ExperimentConfig& cfg) {
    if (cfg.alpha_list.empty()) throw ConfigError("location experiment: alpha_list is empty");
    if (cfg.eta_list.empty()) throw ConfigError("location experiment: eta_list is empty");
    const ResolvedData data = resolve_base_data(cfg);
    const Eigen::Index d = data.base.dim();
    if (d < 3) throw ConfigError("location experiment: need d >= 3");
    const LossModel model{cfg.lambda};
    const double eta_max = *std::max_element(cfg.eta_list.begin(), cfg.eta_list.end());

    auto a_true = [&](double eps_true) {
        Vector diag = Vector::Constant(d, eps_true);
        diag[0] = cfg.eps_nominal;
        diag[1] = cfg.eps_nominal;
        return Matrix(diag.asDiagonal());
    };

    SweepResult result;
    result.kind = ExperimentConfig::Kind::location;

    // The identified location matrix per trial, via the observed means at
    // theta = 0, e1, e2 (only the first two columns of A are identified).
    std::vector<Matrix> a_hats(static_cast<std::size_t>(cfg.trials));
    auto identify = [&](const EmpiricalDistribution& train_base) {
        const Matrix observe = a_true(0.0);
        const DistributionMap observed_map{train_base, LocationShiftResponse{observe}};
        std::vector<Vector> thetas{zeros(d), Vector::Unit(d, 0), Vector::Unit(d, 1)};
        std::vector<Vector> means;
        for (const Vector& th : thetas)
            means.push_back(moments(pushforward(observed_map, th)).mean);
        return partial_identify(thetas, means);
    };

    GridExperiment ge;
    ge.methods.push_back({"po", 0.0});
    for (double alpha : cfg.alpha_list) ge.methods.push_back({"tpo", alpha});
    ge.eps_grid = linspace(-0.5 * eta_max, 0.5 * eta_max, cfg.eps_grid_points);
    ge.nominal_map = [&](const EmpiricalDistribution& train_base, int trial) {
        Matrix& a_hat = a_hats[static_cast<std::size_t>(trial)];
        if (a_hat.size() == 0) a_hat = identify(train_base);
        return DistributionMap{train_base, LocationShiftResponse{a_hat}};
    };
    ge.true_map = [&](double eps_true) {
        return DistributionMap{data.base, LocationShiftResponse{a_true(eps_true)}};
    };
    ge.solve = [&](const DistributionMap& nominal, const MethodSpec& method) {
        const Vector theta0 = zeros(theta_dim(nominal));
        if (method.name == "po") return minimize_pr(model, nominal, cfg.solver, theta0).theta;
        return minimize_tpr(model, nominal, method.tuning, cfg.solver, theta0).theta;
    };
    // Identification must happen before the parallel cells race to fill it.
    {
        std::vector<EmpiricalDistribution> bases;
        for (int t = 0; t < cfg.trials; ++t)
            bases.push_back(
                bootstrap_resample(data.base, cfg.n_train, derive_seed(cfg.seed, 17, t)));
        for (int t = 0; t < cfg.trials; ++t)
            a_hats[static_cast<std::size_t>(t)] = identify(bases[static_cast<std::size_t>(t)]);
    }
    run_grid_experiment(cfg, data.base, ge, result);

    // mu*(rho) <-> alpha correspondence table per trial.
    if (!cfg.rho_list.empty()) {
        for (int trial = 0; trial < cfg.trials; ++trial) {
            const EmpiricalDistribution train_base =
                bootstrap_resample(data.base, cfg.n_train, derive_seed(cfg.seed, 17, trial));
            const DistributionMap nominal{
                train_base, LocationShiftResponse{a_hats[static_cast<std::size_t>(trial)]}};
            const std::vector<MuRhoRow> rows =
                mu_rho_correspondence(model, nominal, cfg.rho_list, cfg.solver);
            for (const MuRhoRow& r : rows)
                result.correspondence.push_back({trial, r.rho, r.mu_star, r.alpha, r.ok});
        }
    }

    sort_rows(result);
    append_aggregates(result);
    return result;
}

SweepResult run_fairness_experiment(const ExperimentConfig& cfg) {
    if (cfg.alpha_list.empty()) throw ConfigError("fairness experiment: alpha_list is empty");
    const int d = cfg.synthetic.kind == "fairness" ? cfg.synthetic.d : 10;
    const LossModel model{cfg.lambda};

    SweepResult result;
    result.kind = ExperimentConfig::Kind::fairness;

    std::vector<MethodSpec> methods;
    methods.push_back({"po", 0.0});
    for (double alpha : cfg.alpha_list) methods.push_back({"tpo", alpha});

    struct TrialData {
        FairnessData train, eval, cal;
    };
    std::vector<TrialData> trials_data;
    trials_data.reserve(static_cast<std::size_t>(cfg.trials));
    for (int t = 0; t < cfg.trials; ++t)
        trials_data.push_back({gen_fairness_data(d, cfg.n_train, derive_seed(cfg.seed, 101, t)),
                               gen_fairness_data(d, cfg.n_train, derive_seed(cfg.seed, 202, t)),
                               gen_fairness_data(d, cfg.n_cal, derive_seed(cfg.seed, 303, t))});

    struct Cell {
        Vector theta;
        bool ok = false;
    };
    const std::size_t n_methods = methods.size();
    std::vector<Cell> cells(static_cast<std::size_t>(cfg.trials) * n_methods);
    parallel_for(cells.size(), cfg.workers, [&](std::size_t idx) {
        const int trial = static_cast<int>(idx / n_methods);
        const MethodSpec& method = methods[idx % n_methods];
        const TrialData& td = trials_data[static_cast<std::size_t>(trial)];
        const DistributionMap pop_map{
            td.train.population, StrategicLinearResponse{cfg.eps_nominal, td.train.strategic_mask}};
        try {
            cells[idx].theta =
                minimize_tpr(model, pop_map, method.tuning, cfg.solver,
                             zeros(theta_dim(pop_map)))
                    .theta;
            cells[idx].ok = true;
        } catch (const std::exception&) {
            cells[idx].ok = false;
        }
    });

    for (int trial = 0; trial < cfg.trials; ++trial) {
        const TrialData& td = trials_data[static_cast<std::size_t>(trial)];
        const StrategicLinearResponse response{cfg.eps_nominal, td.train.strategic_mask};
        const DistributionMap eval_pop{td.eval.population, response};
        const DistributionMap eval_maj{td.eval.majority, response};
        const DistributionMap eval_min{td.eval.minority, response};

        std::vector<double> alpha_grid;
        std::vector<Vector> solutions;
        for (std::size_t mi = 0; mi < n_methods; ++mi) {
            const Cell& cell = cells[static_cast<std::size_t>(trial) * n_methods + mi];
            ResultRow row;
            row.trial = trial;
            row.method = methods[mi].name;
            row.tuning = methods[mi].tuning;
            row.eps_true = cfg.eps_nominal;
            if (cell.ok) {
                const ClassificationMetrics pop =
                    metrics(model, pushforward(eval_pop, cell.theta), cell.theta);
                const ClassificationMetrics maj =
                    metrics(model, pushforward(eval_maj, cell.theta), cell.theta);
                const ClassificationMetrics mnr =
                    metrics(model, pushforward(eval_min, cell.theta), cell.theta);
                row.risk = pop.risk;
                row.accuracy = pop.accuracy;
                row.ber = pop.ber.value_or(kNaN);
                row.risk_majority = maj.risk;
                row.risk_minority = mnr.risk;
                row.accuracy_majority = maj.accuracy;
                row.accuracy_minority = mnr.accuracy;
                alpha_grid.push_back(methods[mi].tuning);
                solutions.push_back(cell.theta);
            } else {
                row.risk = row.accuracy = row.ber = kNaN;
                row.risk_majority = row.risk_minority = kNaN;
                row.accuracy_majority = row.accuracy_minority = kNaN;
            }
            result.rows.push_back(std::move(row));
        }

        if (!alpha_grid.empty()) {
            const DistributionMap cal_maj{td.cal.majority, response};
            const DistributionMap cal_min{td.cal.minority, response};
            MixtureMap cal_pop;
            cal_pop.components = {cal_maj, cal_min};
            cal_pop.mixture_weights = Vector(2);
            cal_pop.mixture_weights << 0.8, 0.2;
            const CalibrationResult four_fifth = four_fifth_select(
                alpha_grid, solutions, cal_maj, cal_min, cal_pop, model);
            result.calibrations.push_back({trial, "four_fifth", 0.0, four_fifth.selected,
                                           four_fifth.achieved_criterion,
                                           four_fifth.feasible});
        }
    }

    sort_rows(result);
    append_aggregates(result);
    return result;
}

SweepResult run_toy_experiment(const ExperimentConfig& cfg) {
    if (cfg.rho_list.empty()) throw ConfigError("toy experiment: rho_list is empty");
    SweepResult result;
    result.kind = ExperimentConfig::Kind::toy;

    const std::vector<double> theta_grid = linspace(-1.0, 1.0, 41);
    const double sd = std::sqrt(cfg.toy.sigma2);

    for (int trial = 0; trial < cfg.trials; ++trial) {
        // Monte-Carlo base draw shared by every (theta, rho) cell of the trial.
        Rng rng(derive_seed(cfg.seed, 7, trial));
        Vector z0(static_cast<Eigen::Index>(cfg.n_train));
        for (Eigen::Index i = 0; i < z0.size(); ++i) z0[i] = sd * rng.gauss();
        const Vector weights =
            Vector::Constant(z0.size(), 1.0 / static_cast<double>(z0.size()));

        auto push_row = [&](const std::string& method, double tuning, double theta,
                            double value) {
            ResultRow row;
            row.trial = trial;
            row.method = method;
            row.tuning = tuning;
            row.eps_true = theta;  // theta grid reuses the eps column
            row.risk = value;
            row.accuracy = row.ber = kNaN;
            row.risk_majority = row.risk_minority = kNaN;
            row.accuracy_majority = row.accuracy_minority = kNaN;
            result.rows.push_back(std::move(row));
        };

        for (double theta : theta_grid) {
            ToyProblem p = cfg.toy;
            p.rho = 0.0;
            push_row("toy_pr", 0.0, theta, theta * (p.a1 * theta + p.a0));
        }
        for (double rho : cfg.rho_list) {
            ToyProblem p = cfg.toy;
            p.rho = rho;
            for (double theta : theta_grid) {
                push_row("toy_drpr", rho, theta, toy_drpr(p, theta));
                push_row("toy_adv", rho, theta, toy_adversarial_pr(p, theta));
                LossProfile profile;
                profile.theta = Vector::Constant(1, theta);
                profile.weights = weights;
                profile.losses = theta * (z0.array() + p.a1 * theta + p.a0);
                push_row("toy_drpr_mc", rho, theta, drpr(profile, rho).value);
            }
        }
    }

    sort_rows(result);
    append_aggregates(result);
    return result;
}

SweepResult run_experiment(const ExperimentConfig& cfg) {
    switch (cfg.experiment) {
        case ExperimentConfig::Kind::strategic: return run_strategic_experiment(cfg);
        case ExperimentConfig::Kind::location: return run_location_experiment(cfg);
        case ExperimentConfig::Kind::fairness: return run_fairness_experiment(cfg);
        case ExperimentConfig::Kind::toy: return run_toy_experiment(cfg);
    }
    throw ConfigError("run_experiment: unknown experiment kind");
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("emit_outputs: cannot write " + path.string());
    return out;
}

void write_results_csv(const SweepResult& result, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    out << "trial,method,tuning,eps_true,risk,accuracy,ber,risk_majority,risk_minority,"
           "accuracy_majority,accuracy_minority\n";
    for (const ResultRow& r : result.rows)
        out << r.trial << ',' << r.method << ',' << format_double(r.tuning) << ','
            << format_double(r.eps_true) << ',' << format_double(r.risk) << ','
            << format_double(r.accuracy) << ',' << format_double(r.ber) << ','
            << format_double(r.risk_majority) << ',' << format_double(r.risk_minority) << ','
            << format_double(r.accuracy_majority) << ','
            << format_double(r.accuracy_minority) << '\n';
}

void write_aggregate_csv(const SweepResult& result, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    out << "method,tuning,eps_true,metric,mean,stderr\n";
    for (const AggregateRow& a : result.aggregates)
        out << a.method << ',' << format_double(a.tuning) << ',' << format_double(a.eps_true)
            << ',' << a.metric << ',' << format_double(a.mean) << ','
            << format_double(a.stderr_mean) << '\n';
}

// Mean curve (with standard-error band) of one aggregate metric as a chart
// series, one point per eps_true.
ChartSeries aggregate_series(const SweepResult& result, const std::string& method,
                             double tuning, const std::string& metric,
                             const std::string& label) {
    ChartSeries s;
    s.label = label;
    for (const AggregateRow& a : result.aggregates) {
        if (a.method != method || a.tuning != tuning || a.metric != metric) continue;
        if (!std::isfinite(a.mean)) continue;
        s.x.push_back(a.eps_true);
        s.y.push_back(a.mean);
        s.band_lo.push_back(a.mean - a.stderr_mean);
        s.band_hi.push_back(a.mean + a.stderr_mean);
    }
    return s;
}

std::vector<std::pair<std::string, double>> method_list(const SweepResult& result) {
    std::vector<std::pair<std::string, double>> methods;
    for (const ResultRow& r : result.rows) {
        const std::pair<std::string, double> key{r.method, r.tuning};
        if (std::find(methods.begin(), methods.end(), key) == methods.end())
            methods.push_back(key);
    }
    return methods;
}

std::string method_label(const std::string& method, double tuning) {
    if (method == "po") return "po";
    std::string t = format_fixed(tuning, 4);
    while (!t.empty() && t.back() == '0') t.pop_back();
    if (!t.empty() && t.back() == '.') t.pop_back();
    return method + " " + t;
}

void emit_metric_chart(const SweepResult& result, const std::filesystem::path& dir,
                       const std::string& metric, const std::string& filename,
                       const std::string& title, const std::string& x_label) {
    LineChart chart;
    chart.title = title;
    chart.x_label = x_label;
    chart.y_label = metric;
    for (const auto& [method, tuning] : method_list(result)) {
        ChartSeries s =
            aggregate_series(result, method, tuning, metric, method_label(method, tuning));
        if (!s.x.empty()) chart.series.push_back(std::move(s));
    }
    if (chart.series.empty()) return;
    std::ofstream out = open_output(dir / filename);
    write_svg(out, chart);
}

void emit_improvement_chart(const SweepResult& result, const std::filesystem::path& dir,
                            const std::string& x_label) {
    if (result.improvements.empty()) return;
    // Mean improvement over trials per (eta, tuning).
    std::vector<double> etas;
    for (const ImprovementRow& r : result.improvements)
        if (std::find(etas.begin(), etas.end(), r.eta) == etas.end()) etas.push_back(r.eta);
    std::sort(etas.begin(), etas.end());
    LineChart chart;
    chart.title = "relative worst-case improvement";
    chart.x_label = x_label;
    chart.y_label = "improvement (%)";
    for (double eta : etas) {
        ChartSeries s;
        s.label = "eta " + format_fixed(eta, 2);
        std::vector<double> tunings;
        for (const ImprovementRow& r : result.improvements)
            if (r.eta == eta &&
                std::find(tunings.begin(), tunings.end(), r.tuning) == tunings.end())
                tunings.push_back(r.tuning);
        std::sort(tunings.begin(), tunings.end());
        for (double tuning : tunings) {
            std::vector<double> xs;
            for (const ImprovementRow& r : result.improvements)
                if (r.eta == eta && r.tuning == tuning && std::isfinite(r.improvement_pct))
                    xs.push_back(r.improvement_pct);
            if (xs.empty()) continue;
            const auto [mean, se] = mean_stderr(xs);
            s.x.push_back(tuning);
            s.y.push_back(mean);
            s.band_lo.push_back(mean - se);
            s.band_hi.push_back(mean + se);
        }
        if (!s.x.empty()) chart.series.push_back(std::move(s));
    }
    if (chart.series.empty()) return;
    std::ofstream out = open_output(dir / "improvement.svg");
    write_svg(out, chart);
}

void emit_group_chart(const SweepResult& result, const std::filesystem::path& dir,
                      const std::string& prefix, const std::string& filename) {
    // x = tuning, series = population / majority / minority.
    LineChart chart;
    chart.title = prefix + " by group";
    chart.x_label = "alpha";
    chart.y_label = prefix;
    const std::vector<std::pair<std::string, std::string>> groups = {
        {prefix == "risk" ? "risk" : "accuracy", "population"},
        {prefix + "_majority", "majority"},
        {prefix + "_minority", "minority"},
    };
    for (const auto& [metric, label] : groups) {
        ChartSeries s;
        s.label = label;
        std::vector<std::pair<double, const AggregateRow*>> points;
        for (const AggregateRow& a : result.aggregates)
            if (a.metric == metric && std::isfinite(a.mean)) points.emplace_back(a.tuning, &a);
        std::sort(points.begin(), points.end(),
                  [](const auto& x, const auto& y) { return x.first < y.first; });
        for (const auto& [tuning, a] : points) {
            s.x.push_back(tuning);
            s.y.push_back(a->mean);
            s.band_lo.push_back(a->mean - a->stderr_mean);
            s.band_hi.push_back(a->mean + a->stderr_mean);
        }
        if (!s.x.empty()) chart.series.push_back(std::move(s));
    }
    if (chart.series.empty()) return;
    std::ofstream out = open_output(dir / filename);
    write_svg(out, chart);
}

void emit_correspondence_chart(const SweepResult& result, const std::filesystem::path& dir) {
    if (result.correspondence.empty()) return;
    std::vector<double> rhos;
    for (const CorrespondenceRow& r : result.correspondence)
        if (r.ok && std::find(rhos.begin(), rhos.end(), r.rho) == rhos.end())
            rhos.push_back(r.rho);
    std::sort(rhos.begin(), rhos.end());
    LineChart chart;
    chart.title = "dual variable vs radius";
    chart.x_label = "rho";
    chart.y_label = "mu*";
    ChartSeries s;
    s.label = "mu*(rho)";
    for (double rho : rhos) {
        std::vector<double> xs;
        for (const CorrespondenceRow& r : result.correspondence)
            if (r.ok && r.rho == rho && std::isfinite(r.mu_star)) xs.push_back(r.mu_star);
        if (xs.empty()) continue;
        const auto [mean, se] = mean_stderr(xs);
        s.x.push_back(rho);
        s.y.push_back(mean);
        s.band_lo.push_back(mean - se);
        s.band_hi.push_back(mean + se);
    }
    if (s.x.empty()) return;
    chart.series.push_back(std::move(s));
    std::ofstream out = open_output(dir / "mu_vs_rho.svg");
    write_svg(out, chart);
}

void emit_toy_chart(const SweepResult& result, const std::filesystem::path& dir) {
    double rho = kNaN;
    for (const ResultRow& r : result.rows)
        if (r.method == "toy_drpr") {
            rho = r.tuning;
            break;
        }
    LineChart chart;
    chart.title = "toy risk curves";
    chart.x_label = "theta";
    chart.y_label = "risk";
    const std::vector<std::pair<std::string, double>> wanted = {
        {"toy_pr", 0.0}, {"toy_drpr", rho}, {"toy_adv", rho}, {"toy_drpr_mc", rho}};
    for (const auto& [method, tuning] : wanted) {
        if (method != "toy_pr" && !std::isfinite(tuning)) continue;
        ChartSeries s = aggregate_series(result, method, method == "toy_pr" ? 0.0 : tuning,
                                         "risk", method_label(method, tuning));
        if (!s.x.empty()) chart.series.push_back(std::move(s));
    }
    if (chart.series.empty()) return;
    std::ofstream out = open_output(dir / "toy_curves.svg");
    write_svg(out, chart);
}

}  // namespace

void emit_outputs(const SweepResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_results_csv(result, dir / "results.csv");
    write_aggregate_csv(result, dir / "aggregate.csv");

    if (!result.improvements.empty()) {
        std::ofstream out = open_output(dir / "improvement.csv");
        out << "trial,method,tuning,eta,improvement_pct\n";
        for (const ImprovementRow& r : result.improvements)
            out << r.trial << ',' << r.method << ',' << format_double(r.tuning) << ','
                << format_double(r.eta) << ',' << format_double(r.improvement_pct) << '\n';
    }
    if (!result.correspondence.empty()) {
        std::ofstream out = open_output(dir / "correspondence.csv");
        out << "trial,rho,mu_star,alpha,ok\n";
        for (const CorrespondenceRow& r : result.correspondence)
            out << r.trial << ',' << format_double(r.rho) << ',' << format_double(r.mu_star)
                << ',' << format_double(r.alpha) << ',' << (r.ok ? 1 : 0) << '\n';
    }
    if (!result.calibrations.empty()) {
        std::ofstream out = open_output(dir / "calibration.csv");
        out << "trial,method,eta,selected,criterion,feasible\n";
        for (const CalibrationRecord& r : result.calibrations)
            out << r.trial << ',' << r.method << ',' << format_double(r.eta) << ','
                << format_double(r.selected) << ',' << format_double(r.criterion) << ','
                << (r.feasible ? 1 : 0) << '\n';
    }
    if (result.rows.empty()) return;  // header-only CSVs, no panels

    switch (result.kind) {
        case ExperimentConfig::Kind::strategic:
            emit_metric_chart(result, dir, "risk", "pr_true_vs_eps.svg",
                              "performative risk vs true epsilon", "eps_true");
            emit_metric_chart(result, dir, "ber", "ber_vs_eps.svg",
                              "performative BER vs true epsilon", "eps_true");
            emit_improvement_chart(result, dir, "rho");
            break;
        case ExperimentConfig::Kind::location:
            emit_metric_chart(result, dir, "risk", "pr_true_vs_eps.svg",
                              "performative risk vs true epsilon", "eps_true");
            emit_metric_chart(result, dir, "ber", "ber_vs_eps.svg",
                              "performative BER vs true epsilon", "eps_true");
            emit_improvement_chart(result, dir, "alpha");
            emit_correspondence_chart(result, dir);
            break;
        case ExperimentConfig::Kind::fairness:
            emit_group_chart(result, dir, "risk", "group_risk_vs_alpha.svg");
            emit_group_chart(result, dir, "accuracy", "group_accuracy_vs_alpha.svg");
            break;
        case ExperimentConfig::Kind::toy:
            emit_toy_chart(result, dir);
            break;
    }
}

}  // namespace perfdro
