#include "perfdro/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "perfdro/errors.hpp"

namespace perfdro {

namespace {

// Location matrix of the response map for the Gaussian KL plug-in: the
// strategic mask diagonal for strategic responses (the epsilon scale lives in
// the eps arguments), A itself for location shifts, zero for identity.
Matrix response_shift_matrix(const ResponseMap& response, Eigen::Index d,
                             Eigen::Index theta_dim) {
    if (const auto* strat = std::get_if<StrategicLinearResponse>(&response)) {
        Matrix A = Matrix::Zero(d, theta_dim);
        for (Eigen::Index i = 0; i < std::min(d, theta_dim); ++i)
            if (strat->strategic_mask[static_cast<std::size_t>(i)]) A(i, i) = 1.0;
        return A;
    }
    if (const auto* loc = std::get_if<LocationShiftResponse>(&response)) return loc->shift;
    return Matrix::Zero(d, theta_dim);
}

}  // namespace

CalibrationResult post_fit_calibrate(const LossModel& model, const DistributionMap& map,
                                     const MisspecScenario& scenario,
                                     std::pair<double, double> rho_bracket,
                                     const SolveConfig& cfg, double tol,
                                     const Vector& theta0) {
    if (scenario.eps_candidates.empty())
        throw std::invalid_argument("post_fit_calibrate: empty candidate set");
    auto [lo, hi] = rho_bracket;
    if (!(lo >= 0.0) || !(lo < hi))
        throw std::invalid_argument("post_fit_calibrate: need 0 <= lo < hi");
    if (!(tol > 0.0)) throw std::invalid_argument("post_fit_calibrate: tol must be > 0");

    const Matrix sigma = moments(map.base).covariance;
    const Matrix A = response_shift_matrix(map.response, map.base.dim(), theta_dim(map));

    CalibrationResult result;
    Vector warm = theta0;
    auto probe = [&](double rho) {
        for (const auto& [r, g] : result.search_trace)
            if (r == rho) return g;
        const DualSolution sol = minimize_drpr(model, map, rho, cfg, warm);
        warm = sol.theta;  // rho-continuity of the solution path
        double worst = 0.0;
        for (double eps_true : scenario.eps_candidates)
            worst = std::max(worst, gaussian_kl_location(sol.theta, A, eps_true,
                                                         scenario.eps_nominal, sigma));
        const double g = worst - rho;
        result.search_trace.emplace_back(rho, g);
        return g;
    };

    const double g_hi = probe(hi);
    if (g_hi > 0.0)
        throw BracketError(
            "post_fit_calibrate: upper bracket endpoint is infeasible (g(hi) = " +
            format_double(g_hi) + " > 0); enlarge hi");
    const double g_lo = probe(lo);
    if (g_lo <= 0.0) {
        // Feasible everywhere down to the lower endpoint.
        result.selected = lo;
        result.achieved_criterion = g_lo;
        return result;
    }

    // Bisection maintains a infeasible, b feasible; g is expected to
    // decrease in rho. A feasible probe below an infeasible one breaks that
    // premise and downgrades the search to a grid scan.
    double a = lo, b = hi, g_b = g_hi;
    bool monotone = true;
    while (b - a > tol && monotone) {
        const double mid = 0.5 * (a + b);
        const double g_mid = probe(mid);
        if (g_mid <= 0.0) {
            b = mid;
            g_b = g_mid;
        } else {
            a = mid;
        }
        for (const auto& [r1, v1] : result.search_trace)
            for (const auto& [r2, v2] : result.search_trace)
                if (r1 < r2 && v1 <= 0.0 && v2 > 0.0) monotone = false;
    }

    if (!monotone) {
        // Smallest feasible radius over 32 log-spaced points.
        const double grid_lo = std::max(lo, tol);
        double best = hi, best_g = g_hi;
        for (int i = 0; i < 32; ++i) {
            const double t = static_cast<double>(i) / 31.0;
            const double rho = grid_lo * std::pow(hi / grid_lo, t);
            const double g = probe(rho);
            if (g <= 0.0 && rho < best) {
                best = rho;
                best_g = g;
            }
        }
        result.selected = best;
        result.achieved_criterion = best_g;
        return result;
    }

    result.selected = b;
    result.achieved_criterion = g_b;
    return result;
}

CalibrationResult calibration_set_select(
    const std::vector<std::pair<double, Vector>>& candidates, const DistributionMap& cal_map,
    const LossModel& model, CalibrationObjective objective) {
    if (candidates.empty())
        throw std::invalid_argument("calibration_set_select: no candidates");

    CalibrationResult result;
    double best_value = std::numeric_limits<double>::infinity();
    double best_tuning = std::numeric_limits<double>::infinity();
    for (const auto& [tuning, theta] : candidates) {
        const EmpiricalDistribution induced = pushforward(cal_map, theta);
        const ClassificationMetrics m = metrics(model, induced, theta);
        double value = 0.0;
        if (objective == CalibrationObjective::risk) {
            value = m.risk;
        } else {
            if (!m.ber.has_value())
                throw std::invalid_argument(
                    "calibration_set_select: BER undefined on single-class calibration data");
            value = *m.ber;
        }
        result.search_trace.emplace_back(tuning, value);
        if (value < best_value || (value == best_value && tuning < best_tuning)) {
            best_value = value;
            best_tuning = tuning;
        }
    }
    result.selected = best_tuning;
    result.achieved_criterion = best_value;
    return result;
}

CalibrationResult four_fifth_select(const std::vector<double>& alpha_grid,
                                    const std::vector<Vector>& solutions,
                                    const DistributionMap& majority_map,
                                    const DistributionMap& minority_map,
                                    const MixtureMap& population_map, const LossModel& model) {
    if (alpha_grid.empty() || alpha_grid.size() != solutions.size())
        throw std::invalid_argument("four_fifth_select: misaligned grids");

    CalibrationResult result;
    double best_pop = std::numeric_limits<double>::infinity();
    double best_alpha = 0.0;
    bool any_feasible = false;
    double best_ratio = std::numeric_limits<double>::infinity();
    double best_ratio_alpha = 0.0;
    double best_ratio_pop = 0.0;

    for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
        const double alpha = alpha_grid[i];
        const Vector& theta = solutions[i];
        const double pr_maj = performative_risk(loss_profile(model, majority_map, theta));
        const double pr_min = performative_risk(loss_profile(model, minority_map, theta));
        const double pr_pop = performative_risk(
            loss_profile(model, mixture_pushforward(population_map, theta), theta));
        const double ratio = pr_min / pr_maj;
        result.search_trace.emplace_back(alpha, ratio);
        if (pr_min <= 1.25 * pr_maj) {
            any_feasible = true;
            if (pr_pop < best_pop || (pr_pop == best_pop && alpha < best_alpha)) {
                best_pop = pr_pop;
                best_alpha = alpha;
            }
        }
        if (ratio < best_ratio) {
            best_ratio = ratio;
            best_ratio_alpha = alpha;
            best_ratio_pop = pr_pop;
        }
    }

    if (any_feasible) {
        result.selected = best_alpha;
        result.achieved_criterion = best_pop;
        result.feasible = true;
    } else {
        result.selected = best_ratio_alpha;
        result.achieved_criterion = best_ratio_pop;
        result.feasible = false;
    }
    return result;
}

void export_calibration_csv(std::ostream& out, const CalibrationResult& result) {
    out << "candidate,criterion\n";
    for (const auto& [candidate, criterion] : result.search_trace)
        out << format_double(candidate) << ',' << format_double(criterion) << '\n';
}

}  // namespace perfdro
