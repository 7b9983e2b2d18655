#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <nlohmann/json.hpp>

#include "perfdro/errors.hpp"
#include "perfdro/experiments.hpp"
#include "test_util.hpp"

using namespace perfdro;

namespace {

ExperimentConfig mini_strategic_config() {
    ExperimentConfig cfg;
    cfg.experiment = ExperimentConfig::Kind::strategic;
    cfg.eta_list = {0.0, 1.0};
    cfg.rho_list = {0.0, 0.02};
    cfg.trials = 2;
    cfg.n_train = 400;
    cfg.seed = 11;
    cfg.eps_grid_points = 5;
    cfg.synthetic = {"credit-like", 5, 800};
    cfg.solver.max_outer_iters = 25;
    cfg.solver.inner_gd_iters = 25;
    return cfg;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("gen_credit_like_data") {
    const EmpiricalDistribution a = gen_credit_like_data(9, 4000, 5);
    const EmpiricalDistribution b = gen_credit_like_data(9, 4000, 5);
    REQUIRE(a.size() == 4000);
    CHECK(a.dim() == 9);
    SUBCASE("deterministic for a fixed seed") {
        for (std::size_t i = 0; i < a.size(); i += 500) {
            CHECK((a.samples()[i].features - b.samples()[i].features).norm() == 0.0);
            CHECK(a.samples()[i].label == b.samples()[i].label);
        }
    }
    SUBCASE("roughly class balanced") {
        double positives = 0;
        for (const Sample& s : a.samples()) positives += s.label;
        CHECK(std::abs(positives / 4000.0 - 0.5) < 0.05);
    }
    SUBCASE("three strategic features by default") {
        const auto mask = credit_like_strategic_mask(9);
        int count = 0;
        for (bool m : mask) count += m;
        CHECK(count == 3);
        CHECK(mask[0]);
        CHECK(!mask[3]);
    }
}

TEST_CASE("gen_fairness_data matches the documented recipe") {
    const int d = 10;
    const std::size_t n = 12500;
    const FairnessData data = gen_fairness_data(d, n, 99);
    REQUIRE(data.population.size() == n);
    SUBCASE("majority share is near 0.8") {
        CHECK(std::abs(static_cast<double>(data.majority.size()) / n - 0.8) < 0.02);
    }
    SUBCASE("group means sit at 1 and 0.8 per coordinate") {
        const MomentSummary maj = moments(data.majority);
        const MomentSummary mnr = moments(data.minority);
        for (int j = 0; j < d; ++j) {
            CHECK(std::abs(maj.mean[j] - 1.0) < 0.01);
            CHECK(std::abs(mnr.mean[j] - 0.8) < 0.02);
        }
    }
    SUBCASE("labels split near half within each group") {
        double pos_maj = 0, pos_min = 0;
        for (const Sample& s : data.majority.samples()) pos_maj += s.label;
        for (const Sample& s : data.minority.samples()) pos_min += s.label;
        CHECK(std::abs(pos_maj / data.majority.size() - 0.5) < 0.02);
        CHECK(std::abs(pos_min / data.minority.size() - 0.5) < 0.03);
    }
    SUBCASE("strategic mask covers the first half of the features") {
        int count = 0;
        for (bool m : data.strategic_mask) count += m;
        CHECK(count == d / 2);
        CHECK(data.strategic_mask[0]);
        CHECK(!data.strategic_mask[d - 1]);
    }
    SUBCASE("identical seeds reproduce the draw") {
        const FairnessData again = gen_fairness_data(d, n, 99);
        CHECK(again.majority.size() == data.majority.size());
        CHECK((again.population.samples()[17].features -
               data.population.samples()[17].features)
                  .norm() == 0.0);
    }
}

TEST_CASE("strategic sweep: row schema and the zero-radius reduction") {
    const ExperimentConfig cfg = mini_strategic_config();
    const SweepResult result = run_strategic_experiment(cfg);
    const std::size_t methods = 1 + cfg.rho_list.size();
    REQUIRE(result.rows.size() ==
            static_cast<std::size_t>(cfg.trials) * methods * cfg.eps_grid_points);

    SUBCASE("rho = 0 rows are bitwise equal to the po rows") {
        for (const ResultRow& row : result.rows) {
            if (row.method != "drpo" || row.tuning != 0.0) continue;
            bool matched = false;
            for (const ResultRow& po : result.rows) {
                if (po.method != "po" || po.trial != row.trial ||
                    po.eps_true != row.eps_true)
                    continue;
                matched = true;
                CHECK(po.risk == row.risk);
                CHECK(po.accuracy == row.accuracy);
                CHECK(po.ber == row.ber);
            }
            CHECK(matched);
        }
    }
    SUBCASE("improvement of the rho = 0 column is identically zero") {
        for (const ImprovementRow& imp : result.improvements)
            if (imp.tuning == 0.0) CHECK(imp.improvement_pct == 0.0);
    }
    SUBCASE("aggregates cover every (method, eps) cell for risk") {
        int risk_rows = 0;
        for (const AggregateRow& a : result.aggregates)
            if (a.metric == "risk") ++risk_rows;
        CHECK(risk_rows == static_cast<int>(methods) * cfg.eps_grid_points);
    }
}

TEST_CASE("strategic sweep is deterministic end to end") {
    const ExperimentConfig cfg = mini_strategic_config();
    const auto dir_a = fresh_dir("perfdro_det_a");
    const auto dir_b = fresh_dir("perfdro_det_b");
    emit_outputs(run_strategic_experiment(cfg), dir_a);
    emit_outputs(run_strategic_experiment(cfg), dir_b);
    CHECK(testutil::read_file(dir_a / "results.csv") ==
          testutil::read_file(dir_b / "results.csv"));
    CHECK(testutil::read_file(dir_a / "aggregate.csv") ==
          testutil::read_file(dir_b / "aggregate.csv"));
    CHECK(!testutil::read_file(dir_a / "results.csv").empty());
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("worker count does not change the results") {
    ExperimentConfig cfg = mini_strategic_config();
    cfg.workers = 1;
    const auto dir_a = fresh_dir("perfdro_w1");
    emit_outputs(run_strategic_experiment(cfg), dir_a);
    cfg.workers = 3;
    const auto dir_b = fresh_dir("perfdro_w3");
    emit_outputs(run_strategic_experiment(cfg), dir_b);
    CHECK(testutil::read_file(dir_a / "results.csv") ==
          testutil::read_file(dir_b / "results.csv"));
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

namespace {

void check_zero_tilt_matches_po(const SweepResult& result) {
    int compared = 0;
    for (const ResultRow& row : result.rows) {
        if (row.method != "tpo" || row.tuning != 0.0) continue;
        for (const ResultRow& po : result.rows) {
            if (po.method != "po" || po.trial != row.trial || po.eps_true != row.eps_true)
                continue;
            ++compared;
            CHECK(po.risk == row.risk);
            CHECK(po.accuracy == row.accuracy);
        }
    }
    CHECK(compared > 0);
}

}  // namespace

TEST_CASE("location sweep emits the correspondence table") {
    ExperimentConfig cfg;
    cfg.experiment = ExperimentConfig::Kind::location;
    cfg.eta_list = {0.0, 2.0};
    cfg.alpha_list = {0.0, 0.3};
    cfg.rho_list = {0.01, 0.05};
    cfg.trials = 1;
    cfg.n_train = 300;
    cfg.seed = 4;
    cfg.eps_grid_points = 5;
    cfg.synthetic = {"credit-like", 5, 600};
    cfg.solver.max_outer_iters = 20;
    cfg.solver.inner_gd_iters = 20;
    const SweepResult result = run_location_experiment(cfg);
    const std::size_t methods = 1 + cfg.alpha_list.size();
    CHECK(result.rows.size() ==
          static_cast<std::size_t>(cfg.trials) * methods * cfg.eps_grid_points);
    REQUIRE(result.correspondence.size() == cfg.rho_list.size());
    CHECK(result.correspondence[0].rho == 0.01);
    CHECK(result.correspondence[1].mu_star <= result.correspondence[0].mu_star + 1e-3);
    SUBCASE("the eps grid is centered at zero") {
        double lo = 1e9, hi = -1e9;
        for (const ResultRow& r : result.rows) {
            lo = std::min(lo, r.eps_true);
            hi = std::max(hi, r.eps_true);
        }
        CHECK(lo == doctest::Approx(-1.0));
        CHECK(hi == doctest::Approx(1.0));
    }
    SUBCASE("the zero-tilt column equals the po column bitwise") {
        check_zero_tilt_matches_po(result);
    }
}

TEST_CASE("fairness sweep records subgroup metrics and a four-fifth selection") {
    ExperimentConfig cfg;
    cfg.experiment = ExperimentConfig::Kind::fairness;
    cfg.alpha_list = {0.0, 0.5};
    cfg.trials = 2;
    cfg.n_train = 600;
    cfg.n_cal = 125;
    cfg.seed = 8;
    cfg.synthetic = {"fairness", 6, 600};
    cfg.solver.max_outer_iters = 20;
    cfg.solver.inner_gd_iters = 20;
    const SweepResult result = run_fairness_experiment(cfg);
    const std::size_t methods = 1 + cfg.alpha_list.size();
    REQUIRE(result.rows.size() == static_cast<std::size_t>(cfg.trials) * methods);
    for (const ResultRow& row : result.rows) {
        CHECK(std::isfinite(row.risk_majority));
        CHECK(std::isfinite(row.risk_minority));
        CHECK(row.eps_true == 0.5);
    }
    REQUIRE(result.calibrations.size() == static_cast<std::size_t>(cfg.trials));
    for (const CalibrationRecord& rec : result.calibrations)
        CHECK(rec.method == "four_fifth");
    check_zero_tilt_matches_po(result);
}

TEST_CASE("emit_outputs") {
    SUBCASE("empty results produce header-only CSVs and no charts") {
        SweepResult empty;
        const auto dir = fresh_dir("perfdro_empty_out");
        emit_outputs(empty, dir);
        CHECK(testutil::read_file(dir / "results.csv") ==
              "trial,method,tuning,eps_true,risk,accuracy,ber,risk_majority,risk_minority,"
              "accuracy_majority,accuracy_minority\n");
        CHECK(testutil::read_file(dir / "aggregate.csv") ==
              "method,tuning,eps_true,metric,mean,stderr\n");
        int svg_count = 0;
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.path().extension() == ".svg") ++svg_count;
        CHECK(svg_count == 0);
        std::filesystem::remove_all(dir);
    }
    SUBCASE("charts are written for a populated strategic sweep") {
        const SweepResult result = run_strategic_experiment(mini_strategic_config());
        const auto dir = fresh_dir("perfdro_chart_out");
        emit_outputs(result, dir);
        CHECK(std::filesystem::exists(dir / "pr_true_vs_eps.svg"));
        CHECK(std::filesystem::exists(dir / "ber_vs_eps.svg"));
        CHECK(std::filesystem::exists(dir / "improvement.svg"));
        CHECK(std::filesystem::exists(dir / "improvement.csv"));
        const std::string svg = testutil::read_file(dir / "pr_true_vs_eps.svg");
        CHECK(svg.find("<svg") == 0);
        CHECK(svg.find("polyline") != std::string::npos);
        std::filesystem::remove_all(dir);
    }
    SUBCASE("re-emitting the same result is byte-identical") {
        const SweepResult result = run_strategic_experiment(mini_strategic_config());
        const auto dir_a = fresh_dir("perfdro_emit_a");
        const auto dir_b = fresh_dir("perfdro_emit_b");
        emit_outputs(result, dir_a);
        emit_outputs(result, dir_b);
        for (const char* name : {"results.csv", "aggregate.csv", "improvement.csv",
                                 "pr_true_vs_eps.svg"})
            CHECK(testutil::read_file(dir_a / name) == testutil::read_file(dir_b / name));
        std::filesystem::remove_all(dir_a);
        std::filesystem::remove_all(dir_b);
    }
}

TEST_CASE("aggregate stderr over trials uses stddev/sqrt(trials)") {
    // Two trials, one cell: risk values differ across trials only.
    ExperimentConfig cfg = mini_strategic_config();
    cfg.eta_list = {0.0};
    cfg.rho_list = {0.0};
    cfg.eps_grid_points = 1;
    const SweepResult result = run_strategic_experiment(cfg);
    REQUIRE(result.rows.size() == 4);  // 2 trials x {po, drpo@0} x 1 eps
    std::vector<double> po_risks;
    for (const ResultRow& row : result.rows)
        if (row.method == "po") po_risks.push_back(row.risk);
    REQUIRE(po_risks.size() == 2);
    const double mean = 0.5 * (po_risks[0] + po_risks[1]);
    const double sd = std::sqrt((po_risks[0] - mean) * (po_risks[0] - mean) +
                                (po_risks[1] - mean) * (po_risks[1] - mean));
    bool found = false;
    for (const AggregateRow& a : result.aggregates) {
        if (a.method != "po" || a.metric != "risk") continue;
        found = true;
        CHECK(a.mean == doctest::Approx(mean).epsilon(1e-12));
        CHECK(a.stderr_mean == doctest::Approx(sd / std::sqrt(2.0)).epsilon(1e-12));
    }
    CHECK(found);
}

TEST_CASE("config_from_json") {
    SUBCASE("full round trip of the documented fields") {
        const nlohmann::json j = {
            {"experiment", "strategic"},
            {"eps_nominal", 0.4},
            {"eta_list", {0.0, 0.5}},
            {"rho_list", {0.01}},
            {"trials", 3},
            {"n_train", 123},
            {"seed", 77},
            {"eps_grid_points", 7},
            {"workers", 2},
            {"output_dir", "somewhere"},
            {"data", {{"synthetic", {{"kind", "credit-like"}, {"d", 4}, {"n", 99}}}}},
            {"solver", {{"max_outer_iters", 9}, {"step_size", 0.125}}},
            {"calibration", {{"enabled", true}, {"rho_hi", 0.25}}},
        };
        const ExperimentConfig cfg = config_from_json(j);
        CHECK(cfg.experiment == ExperimentConfig::Kind::strategic);
        CHECK(cfg.eps_nominal == 0.4);
        CHECK(cfg.eta_list == std::vector<double>({0.0, 0.5}));
        CHECK(cfg.trials == 3);
        CHECK(cfg.n_train == 123);
        CHECK(cfg.seed == 77);
        CHECK(cfg.eps_grid_points == 7);
        CHECK(cfg.workers == 2);
        CHECK(cfg.output_dir == "somewhere");
        CHECK(cfg.synthetic.d == 4);
        CHECK(cfg.synthetic.n == 99);
        CHECK(cfg.solver.max_outer_iters == 9);
        CHECK(cfg.solver.step_size == 0.125);
        CHECK(cfg.calibration.enabled);
        CHECK(cfg.calibration.rho_hi == 0.25);
    }
    SUBCASE("fairness defaults follow the documented recipe") {
        const ExperimentConfig cfg = config_from_json(nlohmann::json{{"experiment", "fairness"}});
        CHECK(cfg.synthetic.kind == "fairness");
        CHECK(cfg.synthetic.d == 10);
        CHECK(cfg.synthetic.n == 12500);
        CHECK(cfg.n_cal == 125);
    }
    SUBCASE("invalid values rejected") {
        CHECK_THROWS_AS(config_from_json(nlohmann::json{{"experiment", "nope"}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(nlohmann::json{{"trials", 0}}), ConfigError);
    }
    SUBCASE("csv data spec parses") {
        const nlohmann::json j = {
            {"data",
             {{"csv",
               {{"path", "/tmp/x.csv"},
                {"feature_columns", {"a", "b"}},
                {"label_column", "y"},
                {"strategic_mask", {1, 0}}}}}}};
        const ExperimentConfig cfg = config_from_json(j);
        REQUIRE(cfg.csv_data.has_value());
        CHECK(cfg.csv_data->path == "/tmp/x.csv");
        CHECK(cfg.csv_data->schema.feature_columns.size() == 2);
        CHECK(cfg.csv_data->schema.strategic_mask == std::vector<bool>({true, false}));
    }
}

TEST_CASE("toy sweep rows carry the theta grid") {
    ExperimentConfig cfg;
    cfg.experiment = ExperimentConfig::Kind::toy;
    cfg.trials = 1;
    cfg.n_train = 2000;
    cfg.rho_list = {0.125};
    const SweepResult result = run_toy_experiment(cfg);
    // methods: toy_pr + {toy_drpr, toy_adv, toy_drpr_mc} per rho; 41 thetas
    CHECK(result.rows.size() == (1 + 3) * 41);
    double max_gap = 0.0;
    for (const ResultRow& row : result.rows) {
        if (row.method != "toy_drpr_mc") continue;
        for (const ResultRow& closed : result.rows)
            if (closed.method == "toy_drpr" && closed.eps_true == row.eps_true)
                max_gap = std::max(max_gap, std::abs(closed.risk - row.risk));
    }
    CHECK(max_gap < 0.05);  // Monte-Carlo at n = 2000
}
