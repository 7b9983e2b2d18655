#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "perfdro/risk.hpp"

namespace perfdro {

struct SolveConfig {
    int max_outer_iters = 60;
    int inner_gd_iters = 40;
    double step_size = 0.25;
    double step_decay = 1.0;  // multiplicative, applied per accepted gradient step
    double grad_tol = 1e-6;
    double mu_tol = 1e-6;  // relative stopping tolerance on the dual variable
    std::uint64_t seed = 0;
};

struct TraceEntry {
    double objective = 0.0;
    double mu = 0.0;
};

// Output of a robust solve. mu_star uses +inf as the "no tilt" sentinel
// (rho = 0 / alpha = 0); nu_star is set only by the augmented solver.
struct DualSolution {
    Vector theta;
    double mu_star = 0.0;
    std::optional<double> nu_star;
    double objective = 0.0;
    int outer_iters = 0;
    bool converged = false;
    std::vector<TraceEntry> trace;  // one entry per outer iteration
};

/// Sample-average objective theta -> E_base[f(z, theta)] given per-atom value
/// and gradient callbacks. The logistic constructor wires in the composed
/// loss through a response map; the generic constructor lets callers bring
/// any differentiable per-atom loss (used by the Gaussian toy probes).
class PerformativeObjective {
public:
    using AtomValueFn = std::function<double(const Sample&, const Vector&)>;
    using AtomValueGradFn =
        std::function<void(const Sample&, const Vector&, double&, Vector&)>;

    PerformativeObjective(const LossModel& model, const DistributionMap& map);
    PerformativeObjective(EmpiricalDistribution base, AtomValueFn value,
                          AtomValueGradFn value_grad);

    const EmpiricalDistribution& base() const { return base_; }

    // Per-atom composed losses at theta, packaged as a LossProfile.
    LossProfile profile(const Vector& theta) const;
    Vector values(const Vector& theta) const;
    // values plus per-atom gradients (one column per atom).
    void values_grads(const Vector& theta, Vector& values, Matrix& grads) const;

private:
    EmpiricalDistribution base_;
    AtomValueFn value_;
    AtomValueGradFn value_grad_;
};

// Parameter dimension the map expects (A columns for location shifts, the
// feature dimension otherwise).
Eigen::Index theta_dim(const DistributionMap& map);

// Performative risk minimization: gradient descent on E[loss(T_theta(Z); theta)].
DualSolution minimize_pr(const PerformativeObjective& obj, const SolveConfig& cfg,
                         const Vector& theta0);
DualSolution minimize_pr(const LossModel& model, const DistributionMap& map,
                         const SolveConfig& cfg, const Vector& theta0);

// Tilted performative risk minimization: descends log E[exp(alpha loss)];
// alpha = 0 dispatches to minimize_pr. Objective and trace are in log scale.
DualSolution minimize_tpr(const PerformativeObjective& obj, double alpha,
                          const SolveConfig& cfg, const Vector& theta0);
DualSolution minimize_tpr(const LossModel& model, const DistributionMap& map, double alpha,
                          const SolveConfig& cfg, const Vector& theta0);

// Alternating minimization of psi(theta, mu) = mu log E[exp(loss/mu)] + mu*rho:
// tilted theta-steps at alpha = 1/mu, exact 1-D mu-updates, stopping on the
// relative change of mu. rho = 0 dispatches to minimize_pr.
DualSolution minimize_drpr(const PerformativeObjective& obj, double rho,
                           const SolveConfig& cfg, const Vector& theta0);
DualSolution minimize_drpr(const LossModel& model, const DistributionMap& map, double rho,
                           const SolveConfig& cfg, const Vector& theta0);

// Convex conjugate of a divergence generator, with derivative. The
// value-only factory installs a central-difference derivative.
struct PhiConjugate {
    std::function<double(double)> value;
    std::function<double(double)> deriv;

    static PhiConjugate kl();
    static PhiConjugate chi_squared();
    static PhiConjugate from_value(std::function<double(double)> value);
};

// Joint block-coordinate minimization of the augmented objective
// E[mu phi*((loss - nu)/mu)] + mu*rho + nu over (theta, mu, nu).
DualSolution minimize_augpr(const PerformativeObjective& obj, double rho,
                            const PhiConjugate& conj, const SolveConfig& cfg,
                            const Vector& theta0);
DualSolution minimize_augpr(const LossModel& model, const DistributionMap& map, double rho,
                            const PhiConjugate& conj, const SolveConfig& cfg,
                            const Vector& theta0);

struct MuRhoRow {
    double rho = 0.0;
    double mu_star = 0.0;
    double alpha = 0.0;  // 1 / mu_star
    bool ok = true;
};

// Solves minimize_drpr over an ascending radius grid and tabulates the
// mu*(rho) <-> alpha correspondence. Failed grid points are flagged, the
// remaining ones still reported.
std::vector<MuRhoRow> mu_rho_correspondence(const LossModel& model, const DistributionMap& map,
                                            const std::vector<double>& rho_grid,
                                            const SolveConfig& cfg);

// log E[exp(alpha loss)] and its exact gradient; the finite-difference
// fidelity checks exercise this surface.
std::pair<double, Vector> log_tpr_value_grad(const PerformativeObjective& obj, double alpha,
                                             const Vector& theta);

// CSV export (iter, objective, mu) for convergence plots.
void export_trace_csv(std::ostream& out, const DualSolution& solution);

}  // namespace perfdro
