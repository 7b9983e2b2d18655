#pragma once

#include <optional>

#include "perfdro/numerics.hpp"

namespace perfdro {

/// Scalar Gaussian toy problem: loss(z; theta) = theta*z over Theta = [-1, 1],
/// induced law N(a1*theta + a0, sigma2). Everything here is closed form; it
/// serves as an analytic oracle for the empirical risk machinery.
struct ToyProblem {
    double a1 = 1.0;      // slope, > 0
    double a0 = 1.0;      // intercept, > 0
    double sigma2 = 1.0;  // variance, > 0
    double rho = 0.0;     // KL radius, >= 0

    // The worst-case gap statement holds for rho <= a0^2 / (2 sigma2).
    bool radius_feasible() const { return rho <= a0 * a0 / (2.0 * sigma2); }
};

// PR(theta) + sqrt(2 rho sigma2) |theta|, the L1-regularized form of the
// robust risk.
double toy_drpr(const ToyProblem& p, double theta);

struct ToyOptima {
    double theta_po = 0.0;
    double theta_drpo = 0.0;
    double drpr_at_drpo = 0.0;
    std::optional<double> mu_star;  // set for rho > 0 and theta_drpo != 0
    double worst_case_gap = 0.0;    // rho sigma2 / (2 a1)
};

// theta_po = -a0/(2 a1), theta_drpo = (sqrt(2 rho sigma2) - a0)/(2 a1),
// mu* = sigma |theta_drpo| / sqrt(2 rho); optima clipped to [-1, 1].
ToyOptima toy_optima(const ToyProblem& p);

// Multivariate version: theta^T f(theta) + sqrt(2 rho theta^T Sigma theta).
double toy_multivariate_drpr(const Vector& theta, const Vector& f_theta, const Matrix& sigma,
                             double rho);

// Risk under the adversarial map N(a1 theta + a0 - sqrt(2 rho sigma2), sigma2),
// which sits exactly on the KL sphere of radius rho.
double toy_adversarial_pr(const ToyProblem& p, double theta);

}  // namespace perfdro
