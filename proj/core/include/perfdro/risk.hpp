#pragma once

#include <functional>
#include <iosfwd>

#include "perfdro/lossmodel.hpp"

namespace perfdro {

// Per-atom losses of an induced distribution at a fixed parameter vector.
struct LossProfile {
    Vector losses;
    Vector weights;
    Vector theta;
};

// KL uncertainty radius.
struct RadiusSpec {
    double rho = 0.0;
};

// Cressie-Read divergence of order k (> 1) with radius rho; the dual uses
// the conjugate order k* = k/(k-1).
struct CressieReadSpec {
    double k = 2.0;
    double rho = 0.0;
    double conjugate_order() const { return k / (k - 1.0); }
};

LossProfile loss_profile(const LossModel& model, const DistributionMap& map,
                         const Vector& theta);
// Same, over a distribution that is already the induced one.
LossProfile loss_profile(const LossModel& model, const EmpiricalDistribution& induced,
                         const Vector& theta);

// Weighted mean loss.
double performative_risk(const LossProfile& profile);

// E[exp(alpha * loss)] computed in the log domain.
double tilted_risk(const LossProfile& profile, double alpha);
double log_tilted_risk(const LossProfile& profile, double alpha);

// Dual objective psi(mu) = mu log E[exp(loss/mu)] + mu*rho for a fixed mu > 0.
double drpr_dual_objective(const LossProfile& profile, double mu, double rho);

struct DrprResult {
    double value = 0.0;
    // +inf when rho = 0 (the dual infimum is approached as mu -> inf);
    // 0 when the KL ball contains the point mass on the argmax-loss atoms.
    double mu_star = 0.0;
};

// Distributionally robust risk inf_{mu >= 0} psi(mu): bracketed golden-section
// on log(mu) followed by Newton polish. Convexity of psi in mu makes the
// bracketed search globally correct.
DrprResult drpr(const LossProfile& profile, double rho);

// Exponentially tilted weights w_i exp(loss_i/mu*) normalized to sum 1; the
// worst-case reweighting attaining the DRPR supremum at an interior mu*.
Vector worst_case_weights(const LossProfile& profile, double mu_star);

// sum_i q_i log(q_i/p_i) with 0 log 0 := 0. Throws if q charges an atom
// where p vanishes.
double kl_between_weights(const Vector& q, const Vector& p);

// Parametric Gaussian plug-in KL estimate between location-shifted maps:
// 0.5 (eps_true - eps_nominal)^2 theta^T A^T Sigma^{-1} A theta.
double gaussian_kl_location(const Vector& theta, const Matrix& A, double eps_true,
                            double eps_nominal, const Matrix& sigma_hat);

// Single-dual-variable Cressie-Read objective:
// (1 + rho k(k-1))^{1/k} E[max(loss - mu, 0)^{k*}]^{1/k*} + mu.
double cressie_read_dual(const LossProfile& profile, const CressieReadSpec& spec, double mu);

// Generic phi-divergence dual integrand averaged over atoms:
// E[mu phi*((loss - nu)/mu)] + mu*rho + nu.
double augmented_pr_objective(const LossProfile& profile, double mu, double nu, double rho,
                              const std::function<double(double)>& phi_conjugate);

// Shipped convex conjugates. kl_conjugate(s) = e^s - 1 (phi(t) = t log t);
// chi2_conjugate(s) = s + s^2/4 for s > -2 and -1 below (phi(t) = (t-1)^2).
double kl_conjugate(double s);
double chi2_conjugate(double s);

// Leading-order excess-risk diagnostics: sqrt(2) B sqrt(sup KL) for the
// nominal optimum, sqrt(rho Var[loss]) for the robust one. Remainder terms
// are not quantifiable and are not included.
struct ExcessRiskBounds {
    double po_bound = 0.0;
    double drpo_bound = 0.0;
};
ExcessRiskBounds excess_risk_bounds(const LossProfile& profile_at_theta, double rho,
                                    double kl_sup_estimate, double loss_bound);

// Loss-histogram diagnostics: CSV with columns loss, base_weight, tilted_weight.
void export_loss_histogram(std::ostream& out, const LossProfile& profile,
                           const Vector& tilted_weights);

// Weighted variance of the profile losses (total weight 1).
double profile_loss_variance(const LossProfile& profile);

}  // namespace perfdro
