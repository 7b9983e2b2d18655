#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "perfdro/calibrate.hpp"
#include "perfdro/errors.hpp"
#include "perfdro/experiments.hpp"
#include "test_util.hpp"

using namespace perfdro;

namespace {

SolveConfig frozen_theta_config() {
    // An enormous gradient tolerance keeps every solve at its start point, so
    // theta_DRPO(rho) is constant and the criterion has a closed form.
    SolveConfig cfg;
    cfg.grad_tol = 1e9;
    cfg.mu_tol = 1e-8;
    return cfg;
}

DistributionMap strategic_map(std::uint64_t seed, std::size_t n = 300, int d = 3) {
    return DistributionMap{gen_credit_like_data(d, n, seed),
                           StrategicLinearResponse{0.5, credit_like_strategic_mask(d)}};
}

}  // namespace

TEST_CASE("post_fit_calibrate") {
    const LossModel model{0.001};
    const DistributionMap map = strategic_map(41);
    const Vector theta_frozen = Vector::Constant(3, 0.8);

    SUBCASE("frozen theta matches the closed-form crossing within tol") {
        const double eps_true = 1.0;
        const MisspecScenario scenario{{eps_true}, 0.5};
        // closed-form g(rho) = KL(theta_frozen) - rho crosses zero at the KL value
        const Matrix sigma = moments(map.base).covariance;
        Matrix a = Matrix::Zero(3, 3);
        for (int j = 0; j < 3; ++j) a(j, j) = 1.0;  // all three features strategic
        const double crossing =
            gaussian_kl_location(theta_frozen, a, eps_true, 0.5, sigma);
        REQUIRE(crossing > 1e-4);
        const double tol = 1e-3;
        const CalibrationResult cal =
            post_fit_calibrate(model, map, scenario, {1e-4, 4.0 * crossing},
                               frozen_theta_config(), tol, theta_frozen);
        CHECK(std::abs(cal.selected - crossing) <= tol);
        CHECK(cal.achieved_criterion <= 0.0);
        bool found = false;
        for (const auto& [rho, g] : cal.search_trace)
            if (rho == cal.selected) found = true;
        CHECK(found);
    }

    SUBCASE("no misspecification collapses to the lower endpoint") {
        const MisspecScenario scenario{{0.5}, 0.5};
        const CalibrationResult cal = post_fit_calibrate(
            model, map, scenario, {1e-3, 0.5}, frozen_theta_config(), 1e-3, theta_frozen);
        CHECK(cal.selected == doctest::Approx(1e-3));
        CHECK(cal.achieved_criterion <= 0.0);
    }

    SUBCASE("bisection trace halves the bracket each step") {
        const MisspecScenario scenario{{1.0}, 0.5};
        const double lo = 1e-4, hi = 2.0, tol = 1e-3;
        const CalibrationResult cal = post_fit_calibrate(
            model, map, scenario, {lo, hi}, frozen_theta_config(), tol, theta_frozen);
        // interior probes (strictly between the endpoints) obey the halving bound
        int interior = 0;
        for (const auto& [rho, g] : cal.search_trace)
            if (rho != lo && rho != hi) ++interior;
        CHECK(interior <= static_cast<int>(std::log2((hi - lo) / tol)) + 1);
        // bracket widths halve: probes are midpoints of a shrinking interval
        double width = hi - lo;
        double a = lo, b = hi;
        for (const auto& [rho, g] : cal.search_trace) {
            if (rho == lo || rho == hi) continue;
            CHECK(std::abs((b - a) / 2.0 + a - rho) <= 1e-12);
            if (g <= 0.0)
                b = rho;
            else
                a = rho;
            CHECK(b - a <= width / 2.0 + 1e-12);
            width = b - a;
        }
    }

    SUBCASE("one-sided minimality of the returned radius") {
        const MisspecScenario scenario{{1.0}, 0.5};
        const double tol = 1e-3;
        const CalibrationResult cal = post_fit_calibrate(
            model, map, scenario, {1e-4, 2.0}, frozen_theta_config(), tol, theta_frozen);
        const Matrix sigma = moments(map.base).covariance;
        Matrix a = Matrix::Zero(3, 3);
        for (int j = 0; j < 3; ++j) a(j, j) = 1.0;
        auto g = [&](double rho) {
            return gaussian_kl_location(theta_frozen, a, 1.0, 0.5, sigma) - rho;
        };
        CHECK(g(cal.selected) <= 0.0);
        CHECK(g(cal.selected - tol) > 0.0);
    }

    SUBCASE("infeasible upper endpoint raises a bracket error") {
        const MisspecScenario scenario{{1.0}, 0.5};
        CHECK_THROWS_AS(post_fit_calibrate(model, map, scenario, {1e-6, 1e-5},
                                           frozen_theta_config(), 1e-4, theta_frozen),
                        BracketError);
    }
}

TEST_CASE("calibration_set_select") {
    const LossModel model{0.001};
    const DistributionMap cal_map = strategic_map(77, 200);
    SUBCASE("a single candidate is returned unconditionally") {
        const std::vector<std::pair<double, Vector>> candidates = {
            {0.25, Vector::Constant(3, 0.1)}};
        const CalibrationResult r =
            calibration_set_select(candidates, cal_map, model, CalibrationObjective::risk);
        CHECK(r.selected == 0.25);
        CHECK(r.search_trace.size() == 1);
    }
    SUBCASE("a dominant candidate wins") {
        // theta = 0 scores log 2; a trained-ish theta scores better.
        const Vector good = Vector::Constant(3, 0.4);
        const std::vector<std::pair<double, Vector>> candidates = {
            {0.1, Vector::Zero(3)}, {0.2, good}};
        const CalibrationResult r =
            calibration_set_select(candidates, cal_map, model, CalibrationObjective::risk);
        const double risk_zero =
            performative_risk(loss_profile(model, cal_map, Vector::Zero(3)));
        const double risk_good = performative_risk(loss_profile(model, cal_map, good));
        REQUIRE(risk_good < risk_zero);
        CHECK(r.selected == 0.2);
        CHECK(r.achieved_criterion == doctest::Approx(risk_good).epsilon(1e-12));
    }
    SUBCASE("duplicating the candidate list changes nothing") {
        std::vector<std::pair<double, Vector>> candidates = {
            {0.1, Vector::Zero(3)}, {0.2, Vector::Constant(3, 0.4)}};
        const CalibrationResult once =
            calibration_set_select(candidates, cal_map, model, CalibrationObjective::risk);
        std::vector<std::pair<double, Vector>> doubled = candidates;
        doubled.insert(doubled.end(), candidates.begin(), candidates.end());
        const CalibrationResult twice =
            calibration_set_select(doubled, cal_map, model, CalibrationObjective::risk);
        CHECK(once.selected == twice.selected);
        CHECK(once.achieved_criterion == twice.achieved_criterion);
    }
    SUBCASE("ties break toward the smaller tuning value") {
        const Vector theta = Vector::Constant(3, 0.3);
        const std::vector<std::pair<double, Vector>> candidates = {{0.4, theta}, {0.1, theta}};
        const CalibrationResult r =
            calibration_set_select(candidates, cal_map, model, CalibrationObjective::risk);
        CHECK(r.selected == 0.1);
    }
    SUBCASE("BER objective is selectable") {
        const std::vector<std::pair<double, Vector>> candidates = {
            {0.1, Vector::Zero(3)}, {0.2, Vector::Constant(3, 0.4)}};
        const CalibrationResult r =
            calibration_set_select(candidates, cal_map, model, CalibrationObjective::ber);
        CHECK(r.selected == 0.2);
    }
    SUBCASE("selection is stable across calibration draws") {
        // Fixed candidates; only the n_cal = 125 calibration sample varies.
        const FairnessData big = gen_fairness_data(10, 20000, 5150);
        const StrategicLinearResponse resp{0.5, big.strategic_mask};
        std::vector<std::pair<double, Vector>> candidates;
        Vector good = Vector::Constant(10, -0.12);
        Vector bad1 = Vector::Constant(10, 1.4);
        Vector bad2 = Vector::Constant(10, -3.0);
        candidates = {{0.1, good}, {0.2, bad1}, {0.3, bad2}};
        std::map<double, int> votes;
        for (int seedling = 0; seedling < 30; ++seedling) {
            const FairnessData cal = gen_fairness_data(10, 125, derive_seed(999, seedling, 0));
            const DistributionMap cal_pop{cal.population, resp};
            const CalibrationResult r =
                calibration_set_select(candidates, cal_pop, model, CalibrationObjective::risk);
            votes[r.selected] += 1;
        }
        int top = 0;
        for (const auto& [value, count] : votes) top = std::max(top, count);
        CHECK(top >= 24);  // >= 80% of 30 draws agree
    }
}

namespace {

// Single-atom maps let the four-fifth inputs be dialed exactly: the risk of
// theta on a one-atom identity map is just the loss at that atom.
DistributionMap point_map(double x, int label) {
    return DistributionMap{
        EmpiricalDistribution::uniform({{Vector::Constant(1, x), label}}),
        IdentityResponse{}};
}

}  // namespace

TEST_CASE("four_fifth_select") {
    const LossModel model{0.0};
    const DistributionMap maj = point_map(1.0, 1);   // risk falls as theta grows
    const DistributionMap mnr = point_map(-1.0, 1);  // risk rises as theta grows
    MixtureMap pop;
    pop.components = {maj, mnr};
    pop.mixture_weights = Vector(2);
    pop.mixture_weights << 0.8, 0.2;

    SUBCASE("identical subpopulations: everything feasible, best population risk wins") {
        MixtureMap same;
        same.components = {maj, maj};
        same.mixture_weights = pop.mixture_weights;
        const std::vector<double> alphas = {0.0, 0.5, 1.0};
        const std::vector<Vector> thetas = {Vector::Constant(1, 2.0),
                                            Vector::Constant(1, 1.0),
                                            Vector::Constant(1, 0.5)};
        const CalibrationResult r = four_fifth_select(alphas, thetas, maj, maj, same, model);
        CHECK(r.feasible);
        CHECK(r.selected == 0.0);  // theta = 2 has the lowest (identical-group) risk
    }
    SUBCASE("monotone instance selects the smallest feasible tilt") {
        // As alpha grows theta shrinks: minority risk falls, majority risk
        // rises, population risk rises; the ratio crosses 1.25 from above.
        const std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
        const std::vector<Vector> thetas = {
            Vector::Constant(1, 2.0), Vector::Constant(1, 1.0), Vector::Constant(1, 0.5),
            Vector::Constant(1, 0.2), Vector::Constant(1, 0.05)};
        double first_feasible = -1.0;
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            const double rm = loss(model, maj.base.samples()[0], thetas[i]);
            const double rn = loss(model, mnr.base.samples()[0], thetas[i]);
            if (rn <= 1.25 * rm) {
                first_feasible = alphas[i];
                break;
            }
        }
        REQUIRE(first_feasible >= 0.0);
        const CalibrationResult r = four_fifth_select(alphas, thetas, maj, mnr, pop, model);
        CHECK(r.feasible);
        CHECK(r.selected == first_feasible);
    }
    SUBCASE("empty feasible set flags infeasibility and minimizes the ratio") {
        const std::vector<double> alphas = {0.0, 0.5};
        const std::vector<Vector> thetas = {Vector::Constant(1, 3.0),
                                            Vector::Constant(1, 2.0)};
        for (std::size_t i = 0; i < thetas.size(); ++i) {
            const double rm = loss(model, maj.base.samples()[0], thetas[i]);
            const double rn = loss(model, mnr.base.samples()[0], thetas[i]);
            REQUIRE(rn > 1.25 * rm);
        }
        const CalibrationResult r = four_fifth_select(alphas, thetas, maj, mnr, pop, model);
        CHECK(!r.feasible);
        CHECK(r.selected == 0.5);  // theta = 2 has the smaller ratio
    }
    SUBCASE("misaligned grids rejected") {
        CHECK_THROWS_AS(
            four_fifth_select({0.1}, {Vector::Zero(1), Vector::Zero(1)}, maj, mnr, pop, model),
            std::invalid_argument);
    }
}

TEST_CASE("calibration CSV export") {
    CalibrationResult r;
    r.selected = 0.25;
    r.search_trace = {{0.1, 1.0}, {0.25, -0.5}};
    std::ostringstream out;
    export_calibration_csv(out, r);
    CHECK(out.str() ==
          "candidate,criterion\n0.10000000000000001,1\n0.25,-0.5\n");
}
