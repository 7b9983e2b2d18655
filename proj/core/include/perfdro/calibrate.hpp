#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "perfdro/solvers.hpp"

namespace perfdro {

// The prescribed set of alternative performativity levels to be robust to,
// together with the nominal level the map was fit with.
struct MisspecScenario {
    std::vector<double> eps_candidates;
    double eps_nominal = 0.5;
};

struct CalibrationResult {
    double selected = 0.0;            // rho_cal or alpha_cal
    double achieved_criterion = 0.0;  // criterion value at the selection
    std::vector<std::pair<double, double>> search_trace;  // (candidate, criterion)
    bool feasible = true;  // four-fifth rule only: false when no candidate satisfies it
};

enum class CalibrationObjective { risk, ber };

// Smallest radius rho with max_{eps in Xi} KLhat(rho) <= rho, found by
// bisection on g(rho) = max KLhat - rho. Each probe solves minimize_drpr and
// estimates the KL divergence with the parametric Gaussian plug-in (Sigma
// from the base distribution moments). A monotonicity violation across the
// probe trace downgrades to a 32-point log-spaced grid search.
CalibrationResult post_fit_calibrate(const LossModel& model, const DistributionMap& map,
                                     const MisspecScenario& scenario,
                                     std::pair<double, double> rho_bracket,
                                     const SolveConfig& cfg, double tol,
                                     const Vector& theta0);

// Picks the tuning value whose theta scores best on the calibration map's
// pushforward at that theta. Ties break toward the smaller tuning value.
CalibrationResult calibration_set_select(
    const std::vector<std::pair<double, Vector>>& candidates, const DistributionMap& cal_map,
    const LossModel& model, CalibrationObjective objective);

// Among tilts whose minority performative risk is at most 1.25x the
// majority's, returns the one with minimal population performative risk.
// When none qualifies, returns the ratio-minimizing tilt flagged infeasible.
CalibrationResult four_fifth_select(const std::vector<double>& alpha_grid,
                                    const std::vector<Vector>& solutions,
                                    const DistributionMap& majority_map,
                                    const DistributionMap& minority_map,
                                    const MixtureMap& population_map, const LossModel& model);

// CSV export (candidate, criterion) for calibration plots.
void export_calibration_csv(std::ostream& out, const CalibrationResult& result);

}  // namespace perfdro
