#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "perfdro/analytic.hpp"
#include "perfdro/calibrate.hpp"

namespace perfdro {

struct SyntheticDataSpec {
    std::string kind = "credit-like";
    int d = 9;
    std::size_t n = 14878;
};

struct CsvDataSpec {
    std::string path;
    DatasetSchema schema;
};

struct CalibrationSpec {
    bool enabled = false;
    double rho_lo = 1e-4;
    double rho_hi = 0.5;
    double tol = 1e-3;
};

// Declarative description of one experiment sweep; mirrors the JSON config.
struct ExperimentConfig {
    enum class Kind { strategic, location, fairness, toy };

    Kind experiment = Kind::strategic;
    double eps_nominal = 0.5;
    double lambda = 0.001;
    std::vector<double> eta_list;
    std::vector<double> rho_list;
    std::vector<double> alpha_list;
    int trials = 10;
    std::size_t n_train = 5000;
    std::size_t n_cal = 125;
    std::uint64_t seed = 1;
    int eps_grid_points = 21;
    int workers = 1;  // 0 = hardware concurrency
    std::optional<CsvDataSpec> csv_data;
    SyntheticDataSpec synthetic;
    std::optional<ResponseMap> response;  // used by the solve-* CLI paths
    SolveConfig solver;
    CalibrationSpec calibration;
    ToyProblem toy;
    std::string output_dir = "out";
};

ExperimentConfig config_from_json(const nlohmann::json& j);
std::string to_string(ExperimentConfig::Kind kind);
ExperimentConfig::Kind experiment_kind_from_string(const std::string& name);

// One sweep cell evaluated on the true (test) map. The subgroup columns are
// NaN outside the fairness experiment; for the toy experiment the eps_true
// column carries the theta grid value.
struct ResultRow {
    int trial = 0;
    std::string method;  // "po" | "drpo" | "tpo" | "toy_*"
    double tuning = 0.0;  // rho or alpha (0 for po)
    double eps_true = 0.0;
    double risk = 0.0;
    double accuracy = 0.0;
    double ber = 0.0;
    double risk_majority = 0.0;
    double risk_minority = 0.0;
    double accuracy_majority = 0.0;
    double accuracy_minority = 0.0;
};

struct AggregateRow {
    std::string method;
    double tuning = 0.0;
    double eps_true = 0.0;
    std::string metric;
    double mean = 0.0;
    double stderr_mean = 0.0;  // sample stddev / sqrt(trials); 0 for one trial
};

// Relative worst-case improvement over the PO baseline for one
// misspecification range eta, per trial.
struct ImprovementRow {
    int trial = 0;
    std::string method;
    double tuning = 0.0;
    double eta = 0.0;
    double improvement_pct = 0.0;
};

struct CorrespondenceRow {
    int trial = 0;
    double rho = 0.0;
    double mu_star = 0.0;
    double alpha = 0.0;
    bool ok = true;
};

struct CalibrationRecord {
    int trial = 0;
    std::string method;
    double eta = 0.0;  // strategic post-fit calibration is per eta
    double selected = 0.0;
    double criterion = 0.0;
    bool feasible = true;
};

struct SweepResult {
    ExperimentConfig::Kind kind = ExperimentConfig::Kind::strategic;
    std::vector<ResultRow> rows;
    std::vector<AggregateRow> aggregates;
    std::vector<ImprovementRow> improvements;
    std::vector<CorrespondenceRow> correspondence;
    std::vector<CalibrationRecord> calibrations;
};

// Class-balanced synthetic stand-in for the credit data: standard Gaussian
// features, Bernoulli labels from a fixed logistic ground truth, first three
// features strategic.
EmpiricalDistribution gen_credit_like_data(int d, std::size_t n, std::uint64_t seed);
std::vector<bool> credit_like_strategic_mask(int d);

struct FairnessData {
    EmpiricalDistribution population;
    EmpiricalDistribution majority;
    EmpiricalDistribution minority;
    std::vector<int> group;  // 0 = majority, 1 = minority, per population atom
    std::vector<bool> strategic_mask;
};

// Two-group Gaussian mixture (gamma = 0.8, means 1 and 0.8 per coordinate,
// covariance 0.1 I) with labels split at each group's mean; the first
// floor(d/2) features are strategic.
FairnessData gen_fairness_data(int d, std::size_t n, std::uint64_t seed);

SweepResult run_strategic_experiment(const ExperimentConfig& cfg);
SweepResult run_location_experiment(const ExperimentConfig& cfg);
SweepResult run_fairness_experiment(const ExperimentConfig& cfg);
SweepResult run_toy_experiment(const ExperimentConfig& cfg);
SweepResult run_experiment(const ExperimentConfig& cfg);

// Writes results.csv, aggregate.csv, auxiliary tables, and one SVG per
// panel. Deterministic bytes for identical results.
void emit_outputs(const SweepResult& result, const std::filesystem::path& dir);

// Base distribution + strategic mask resolved from the config data source.
struct ResolvedData {
    EmpiricalDistribution base;
    std::vector<bool> strategic_mask;
};
ResolvedData resolve_base_data(const ExperimentConfig& cfg);

}  // namespace perfdro
