#include "perfdro/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "perfdro/errors.hpp"

namespace perfdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_config(const SolveConfig& cfg) {
    if (cfg.max_outer_iters <= 0 || cfg.inner_gd_iters <= 0)
        throw std::invalid_argument("SolveConfig: iteration counts must be positive");
    if (!(cfg.step_size > 0.0) || !(cfg.step_decay > 0.0))
        throw std::invalid_argument("SolveConfig: step_size and step_decay must be > 0");
    if (!(cfg.grad_tol > 0.0) || !(cfg.mu_tol > 0.0))
        throw std::invalid_argument("SolveConfig: tolerances must be > 0");
}

double relative_change(double prev, double next) {
    const double scale = std::max({std::abs(prev), std::abs(next), 1e-12});
    return std::abs(next - prev) / scale;
}

// Objective shaping for one descent family: maps per-atom values to the
// scalar objective and the weights of the gradient aggregation.
struct Shaped {
    double objective = 0.0;
    Vector grad_weights;
};
using ShapeFn = std::function<Shaped(const Vector& values)>;

Shaped shape_mean(const Vector& base_weights, const Vector& values) {
    return {weighted_sum(base_weights, values), base_weights};
}

// log E[e^{scale * v}] with gradient weights proportional to w e^{scale v}.
// The aggregation weights are normalized, so the descent direction is the
// tilted mean gradient (the true gradient divided by `scale`).
Shaped shape_tilted(const Vector& base_weights, double scale, const Vector& values) {
    Shaped s;
    s.objective = weighted_log_sum_exp(base_weights, scale * values);
    double m = -kInf;  // shift by the max over the support
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (base_weights[i] > 0.0 && values[i] > m) m = values[i];
    Vector q(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i)
        q[i] = base_weights[i] > 0.0
                   ? base_weights[i] * std::exp(scale * (values[i] - m))
                   : 0.0;
    s.grad_weights = q / pairwise_sum(q);
    return s;
}

struct InnerState {
    Vector theta;
    double step = 0.0;
    int global_iter = 0;  // running gradient-step counter across blocks
};

struct InnerOutcome {
    double objective = 0.0;  // shaped objective at the final theta
    bool grad_converged = false;
    int steps_accepted = 0;
};

// One block of at most cfg.inner_gd_iters fixed-step gradient steps on the
// shaped objective. A step that would increase the objective is retried with
// a halved step (deterministic overshoot guard); a step that produces a
// non-finite objective raises DivergenceError with the global iteration.
InnerOutcome inner_descent(const PerformativeObjective& obj, const SolveConfig& cfg,
                           const ShapeFn& shape, InnerState& st) {
    Vector values;
    Matrix grads;
    obj.values_grads(st.theta, values, grads);
    Shaped cur = shape(values);
    if (!std::isfinite(cur.objective))
        throw DivergenceError("descent objective is non-finite at iteration " +
                                  std::to_string(st.global_iter),
                              st.global_iter);
    InnerOutcome out;

    const Eigen::Index d = st.theta.size();
    Vector direction(d), scaled(values.size());
    for (int step_idx = 0; step_idx < cfg.inner_gd_iters; ++step_idx) {
        ++st.global_iter;
        for (Eigen::Index j = 0; j < d; ++j) {
            for (Eigen::Index i = 0; i < values.size(); ++i)
                scaled[i] = cur.grad_weights[i] * grads(j, i);
            direction[j] = pairwise_sum(scaled);
        }
        if (!direction.allFinite())
            throw DivergenceError("descent gradient is non-finite at iteration " +
                                      std::to_string(st.global_iter),
                                  st.global_iter);
        if (direction.norm() <= cfg.grad_tol) {
            out.grad_converged = true;
            break;
        }
        // Overshooting (or overflowing) trial steps are rejected and retried
        // with a halved step.
        bool accepted = false;
        for (int retry = 0; retry < 12; ++retry) {
            const Vector trial = st.theta - st.step * direction;
            const Shaped trial_shaped = shape(obj.values(trial));
            if (std::isfinite(trial_shaped.objective) &&
                trial_shaped.objective <= cur.objective) {
                st.theta = trial;
                cur = trial_shaped;
                accepted = true;
                ++out.steps_accepted;
                break;
            }
            st.step *= 0.5;
        }
        if (!accepted) break;  // no descent possible at this scale
        st.step *= cfg.step_decay;
        if (step_idx + 1 < cfg.inner_gd_iters) obj.values_grads(st.theta, values, grads);
    }
    out.objective = cur.objective;
    return out;
}

// Dual-variable floor for the tilted theta-step when the exact minimizer
// sits on the mu = 0 boundary.
double mu_floor(const Vector& values) {
    const double range = values.maxCoeff() - values.minCoeff();
    return 1e-6 * std::max(range, 1e-6);
}

}  // namespace

PerformativeObjective::PerformativeObjective(const LossModel& model, const DistributionMap& map)
    : base_(map.base) {
    const ResponseMap response = map.response;
    value_ = [model, response](const Sample& z, const Vector& theta) {
        return loss(model, Sample{apply_response(response, z.features, theta), z.label}, theta);
    };
    value_grad_ = [model, response](const Sample& z, const Vector& theta, double& v, Vector& g) {
        const LossGrad lg = composed_loss_grad(model, z, theta, response);
        v = lg.value;
        g = lg.grad;
    };
}

PerformativeObjective::PerformativeObjective(EmpiricalDistribution base, AtomValueFn value,
                                             AtomValueGradFn value_grad)
    : base_(std::move(base)), value_(std::move(value)), value_grad_(std::move(value_grad)) {}

LossProfile PerformativeObjective::profile(const Vector& theta) const {
    LossProfile p;
    p.theta = theta;
    p.weights = base_.weights();
    p.losses = values(theta);
    return p;
}

Vector PerformativeObjective::values(const Vector& theta) const {
    Vector v(static_cast<Eigen::Index>(base_.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = value_(base_.samples()[static_cast<std::size_t>(i)], theta);
    return v;
}

void PerformativeObjective::values_grads(const Vector& theta, Vector& values,
                                         Matrix& grads) const {
    const Eigen::Index n = static_cast<Eigen::Index>(base_.size());
    values.resize(n);
    grads.resize(theta.size(), n);
    Vector g;
    for (Eigen::Index i = 0; i < n; ++i) {
        double v = 0.0;
        value_grad_(base_.samples()[static_cast<std::size_t>(i)], theta, v, g);
        values[i] = v;
        grads.col(i) = g;
    }
}

Eigen::Index theta_dim(const DistributionMap& map) {
    if (const auto* loc = std::get_if<LocationShiftResponse>(&map.response))
        return loc->shift.cols();
    return map.base.dim();
}

DualSolution minimize_pr(const PerformativeObjective& obj, const SolveConfig& cfg,
                         const Vector& theta0) {
    check_config(cfg);
    const Vector& w = obj.base().weights();
    const ShapeFn shape = [&w](const Vector& v) { return shape_mean(w, v); };

    InnerState st{theta0, cfg.step_size, 0};
    DualSolution sol;
    sol.mu_star = kInf;
    sol.converged = false;
    for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
        const InnerOutcome block = inner_descent(obj, cfg, shape, st);
        if (block.grad_converged && block.steps_accepted == 0) {
            // Already stationary: nothing descended, so no iteration recorded.
            sol.converged = true;
            break;
        }
        sol.trace.push_back({block.objective, kInf});
        if (block.grad_converged) {
            sol.converged = true;
            break;
        }
        if (block.steps_accepted == 0) break;  // descent stalled below step resolution
    }
    sol.theta = st.theta;
    sol.outer_iters = static_cast<int>(sol.trace.size());
    sol.objective = shape(obj.values(st.theta)).objective;
    return sol;
}

DualSolution minimize_pr(const LossModel& model, const DistributionMap& map,
                         const SolveConfig& cfg, const Vector& theta0) {
    return minimize_pr(PerformativeObjective(model, map), cfg, theta0);
}

DualSolution minimize_tpr(const PerformativeObjective& obj, double alpha,
                          const SolveConfig& cfg, const Vector& theta0) {
    check_config(cfg);
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
        throw std::invalid_argument("minimize_tpr: alpha must be finite and >= 0");
    if (alpha == 0.0) return minimize_pr(obj, cfg, theta0);

    const Vector& w = obj.base().weights();
    const ShapeFn shape = [&w, alpha](const Vector& v) { return shape_tilted(w, alpha, v); };

    InnerState st{theta0, cfg.step_size, 0};
    DualSolution sol;
    sol.mu_star = 1.0 / alpha;
    for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
        const InnerOutcome block = inner_descent(obj, cfg, shape, st);
        if (block.grad_converged && block.steps_accepted == 0) {
            sol.converged = true;
            break;
        }
        sol.trace.push_back({block.objective, 1.0 / alpha});
        if (block.grad_converged) {
            sol.converged = true;
            break;
        }
        if (block.steps_accepted == 0) break;
    }
    sol.theta = st.theta;
    sol.outer_iters = static_cast<int>(sol.trace.size());
    sol.objective = shape(obj.values(st.theta)).objective;
    return sol;
}

DualSolution minimize_tpr(const LossModel& model, const DistributionMap& map, double alpha,
                          const SolveConfig& cfg, const Vector& theta0) {
    return minimize_tpr(PerformativeObjective(model, map), alpha, cfg, theta0);
}

DualSolution minimize_drpr(const PerformativeObjective& obj, double rho,
                           const SolveConfig& cfg, const Vector& theta0) {
    check_config(cfg);
    if (rho < 0.0) throw std::invalid_argument("minimize_drpr: rho must be >= 0");
    if (rho == 0.0) return minimize_pr(obj, cfg, theta0);

    const Vector& w = obj.base().weights();
    LossProfile prof = obj.profile(theta0);
    // Variance heuristic matching the exact Gaussian dual: mu0 = sqrt(Var/(2 rho)).
    // A zero-variance start (e.g. logistic losses at theta0 = 0) degenerates
    // it; a large mu makes the first theta block an ordinary risk descent and
    // the next mu-update takes over.
    double mu = std::sqrt(profile_loss_variance(prof) / (2.0 * rho));
    if (!(mu > 1e-9) || !std::isfinite(mu))
        mu = 1e6 * std::max(prof.losses.maxCoeff() - prof.losses.minCoeff(), 1.0);

    InnerState st{theta0, cfg.step_size, 0};
    DualSolution sol;
    for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
        const double mu_step = std::max(mu, mu_floor(prof.losses));
        const double inv_mu = 1.0 / mu_step;
        const ShapeFn shape = [&w, inv_mu](const Vector& v) {
            return shape_tilted(w, inv_mu, v);
        };
        st.step = cfg.step_size;  // the tilt changed; start the block fresh
        inner_descent(obj, cfg, shape, st);

        prof = obj.profile(st.theta);
        const DrprResult opt = drpr(prof, rho);
        double mu_next = opt.mu_star;
        double psi = opt.value;
        // Keep the previous mu if re-optimization cannot improve on it
        // (protects the monotone trace against 1-D search roundoff).
        if (mu > 0.0) {
            const double psi_prev_mu = drpr_dual_objective(prof, mu, rho);
            if (psi_prev_mu < psi) {
                mu_next = mu;
                psi = psi_prev_mu;
            }
        }
        sol.trace.push_back({psi, mu_next});
        const bool mu_stable = relative_change(mu, mu_next) <= cfg.mu_tol;
        mu = mu_next;
        if (mu_stable) {
            sol.converged = true;
            break;
        }
    }
    sol.theta = st.theta;
    sol.mu_star = mu;
    sol.outer_iters = static_cast<int>(sol.trace.size());
    sol.objective = sol.trace.empty() ? drpr(prof, rho).value : sol.trace.back().objective;
    return sol;
}

DualSolution minimize_drpr(const LossModel& model, const DistributionMap& map, double rho,
                           const SolveConfig& cfg, const Vector& theta0) {
    return minimize_drpr(PerformativeObjective(model, map), rho, cfg, theta0);
}

PhiConjugate PhiConjugate::kl() {
    return {[](double s) { return kl_conjugate(s); }, [](double s) { return std::exp(s); }};
}

PhiConjugate PhiConjugate::chi_squared() {
    return {[](double s) { return chi2_conjugate(s); },
            [](double s) { return s <= -2.0 ? 0.0 : 1.0 + 0.5 * s; }};
}

PhiConjugate PhiConjugate::from_value(std::function<double(double)> value) {
    PhiConjugate c;
    c.value = value;
    c.deriv = [value](double s) {
        const double h = 1e-6 * std::max(1.0, std::abs(s));
        return (value(s + h) - value(s - h)) / (2.0 * h);
    };
    return c;
}

DualSolution minimize_augpr(const PerformativeObjective& obj, double rho,
                            const PhiConjugate& conj, const SolveConfig& cfg,
                            const Vector& theta0) {
    check_config(cfg);
    if (rho < 0.0) throw std::invalid_argument("minimize_augpr: rho must be >= 0");
    if (!conj.value || !conj.deriv)
        throw std::invalid_argument("minimize_augpr: conjugate callbacks missing");

    const Vector& w = obj.base().weights();
    Vector v0 = obj.values(theta0);
    double nu = weighted_sum(w, v0);

    auto aug_value = [&](const Vector& values, double m, double n_) {
        Vector terms(values.size());
        for (Eigen::Index i = 0; i < values.size(); ++i)
            terms[i] = w[i] * conj.value((values[i] - n_) / m);
        return m * pairwise_sum(terms) + m * rho + n_;
    };

    // The lower mu edge caps the conjugate argument near 600 so exp-family
    // conjugates stay finite throughout the 1-D searches.
    auto mu_bracket = [](const Vector& values) {
        const double range = values.maxCoeff() - values.minCoeff();
        const double scale = std::max(range, 1e-6);
        const double lo = std::max(1e-6 * scale, range / 600.0);
        return std::pair<double, double>{lo, 1e6 * scale};
    };

    double mu;
    {
        const auto [lo, hi] = mu_bracket(v0);
        const double var =
            rho > 0.0 ? profile_loss_variance(LossProfile{v0, w, theta0}) : 0.0;
        if (rho > 0.0 && var > 1e-18)
            mu = std::clamp(std::sqrt(var / (2.0 * rho)), lo, hi);
        else
            mu = hi;  // zero radius or degenerate start: begin near plain risk descent
    }

    InnerState st{theta0, cfg.step_size, 0};
    DualSolution sol;
    double prev_obj = aug_value(v0, mu, nu);
    for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
        const double mu_cur = mu, nu_cur = nu;
        const ShapeFn shape = [&](const Vector& values) -> Shaped {
            Shaped s;
            s.objective = aug_value(values, mu_cur, nu_cur);
            Vector q(values.size());
            for (Eigen::Index i = 0; i < values.size(); ++i)
                q[i] = w[i] * conj.deriv((values[i] - nu_cur) / mu_cur);
            s.grad_weights = q;
            return s;
        };
        st.step = cfg.step_size;  // (mu, nu) changed; start the block fresh
        inner_descent(obj, cfg, shape, st);
        const Vector values = obj.values(st.theta);

        // nu block (convex 1-D); for normalized divergences the optimum lies
        // inside the loss range.
        const double range = values.maxCoeff() - values.minCoeff();
        const double span = std::max(1e-6, 1e-3 * range);
        const ScalarMinResult nu_opt = golden_section_min(
            [&](double n_) { return aug_value(values, mu, n_); }, values.minCoeff() - span,
            values.maxCoeff() + span, 200, 1e-12);
        if (nu_opt.fx <= aug_value(values, mu, nu)) nu = nu_opt.x;

        // mu block (convex 1-D, log scale).
        const auto [lo, hi] = mu_bracket(values);
        const ScalarMinResult mu_opt = golden_section_min(
            [&](double log_mu) { return aug_value(values, std::exp(log_mu), nu); },
            std::log(lo), std::log(hi), 200, 1e-12);
        if (mu_opt.fx <= aug_value(values, mu, nu)) mu = std::exp(mu_opt.x);

        const double cur_obj = aug_value(values, mu, nu);
        sol.trace.push_back({cur_obj, mu});
        const bool stable = relative_change(mu_cur, mu) <= cfg.mu_tol &&
                            relative_change(nu_cur, nu) <= cfg.mu_tol &&
                            relative_change(prev_obj, cur_obj) <= cfg.mu_tol;
        prev_obj = cur_obj;
        if (stable) {
            sol.converged = true;
            break;
        }
    }
    sol.theta = st.theta;
    sol.mu_star = mu;
    sol.nu_star = nu;
    sol.outer_iters = static_cast<int>(sol.trace.size());
    sol.objective = aug_value(obj.values(st.theta), mu, nu);
    return sol;
}

DualSolution minimize_augpr(const LossModel& model, const DistributionMap& map, double rho,
                            const PhiConjugate& conj, const SolveConfig& cfg,
                            const Vector& theta0) {
    return minimize_augpr(PerformativeObjective(model, map), rho, conj, cfg, theta0);
}

std::vector<MuRhoRow> mu_rho_correspondence(const LossModel& model, const DistributionMap& map,
                                            const std::vector<double>& rho_grid,
                                            const SolveConfig& cfg) {
    if (rho_grid.empty())
        throw std::invalid_argument("mu_rho_correspondence: empty radius grid");
    for (std::size_t i = 0; i < rho_grid.size(); ++i) {
        if (!(rho_grid[i] > 0.0))
            throw std::invalid_argument("mu_rho_correspondence: radii must be positive");
        if (i > 0 && !(rho_grid[i] > rho_grid[i - 1]))
            throw std::invalid_argument("mu_rho_correspondence: radii must be ascending");
    }
    const PerformativeObjective obj(model, map);
    const Vector theta0 = Vector::Zero(theta_dim(map));
    std::vector<MuRhoRow> rows;
    rows.reserve(rho_grid.size());
    for (double rho : rho_grid) {
        MuRhoRow row;
        row.rho = rho;
        try {
            const DualSolution s = minimize_drpr(obj, rho, cfg, theta0);
            row.mu_star = s.mu_star;
            row.alpha = 1.0 / s.mu_star;
        } catch (const std::exception&) {
            row.ok = false;
        }
        rows.push_back(row);
    }
    return rows;
}

std::pair<double, Vector> log_tpr_value_grad(const PerformativeObjective& obj, double alpha,
                                             const Vector& theta) {
    Vector values;
    Matrix grads;
    obj.values_grads(theta, values, grads);
    const Vector& w = obj.base().weights();
    if (alpha == 0.0) return {0.0, Vector::Zero(theta.size())};
    const Shaped s = shape_tilted(w, alpha, values);
    Vector grad(theta.size());
    Vector scaled(values.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        for (Eigen::Index i = 0; i < values.size(); ++i)
            scaled[i] = s.grad_weights[i] * grads(j, i);
        grad[j] = alpha * pairwise_sum(scaled);
    }
    return {s.objective, grad};
}

void export_trace_csv(std::ostream& out, const DualSolution& solution) {
    out << "iter,objective,mu\n";
    for (std::size_t i = 0; i < solution.trace.size(); ++i)
        out << i + 1 << ',' << format_double(solution.trace[i].objective) << ','
            << format_double(solution.trace[i].mu) << '\n';
}

}  // namespace perfdro
