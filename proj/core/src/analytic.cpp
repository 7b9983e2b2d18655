#include "perfdro/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace perfdro {

namespace {

void check(const ToyProblem& p) {
    if (!(p.a1 > 0.0) || !(p.a0 > 0.0) || !(p.sigma2 > 0.0))
        throw std::invalid_argument("ToyProblem: a1, a0, sigma2 must be > 0");
    if (!(p.rho >= 0.0)) throw std::invalid_argument("ToyProblem: rho must be >= 0");
}

void check_theta(double theta) {
    if (theta < -1.0 || theta > 1.0)
        throw std::invalid_argument("toy problem: theta outside [-1, 1]");
}

double clip_unit(double t) { return std::clamp(t, -1.0, 1.0); }

}  // namespace

double toy_drpr(const ToyProblem& p, double theta) {
    check(p);
    check_theta(theta);
    return theta * (p.a1 * theta + p.a0) + std::sqrt(2.0 * p.rho * p.sigma2) * std::abs(theta);
}

ToyOptima toy_optima(const ToyProblem& p) {
    check(p);
    const double penalty = std::sqrt(2.0 * p.rho * p.sigma2);
    ToyOptima o;
    o.theta_po = clip_unit(-p.a0 / (2.0 * p.a1));
    o.theta_drpo = clip_unit((penalty - p.a0) / (2.0 * p.a1));
    o.drpr_at_drpo = toy_drpr(p, o.theta_drpo);
    if (p.rho > 0.0 && o.theta_drpo != 0.0)
        o.mu_star = std::sqrt(p.sigma2) * std::abs(o.theta_drpo) / std::sqrt(2.0 * p.rho);
    o.worst_case_gap = p.rho * p.sigma2 / (2.0 * p.a1);
    return o;
}

double toy_multivariate_drpr(const Vector& theta, const Vector& f_theta, const Matrix& sigma,
                             double rho) {
    if (theta.size() != f_theta.size() || sigma.rows() != theta.size() ||
        sigma.cols() != theta.size())
        throw std::invalid_argument("toy_multivariate_drpr: dimension mismatch");
    if (rho < 0.0) throw std::invalid_argument("toy_multivariate_drpr: rho must be >= 0");
    const double quad = theta.dot(sigma * theta);
    return theta.dot(f_theta) + std::sqrt(2.0 * rho * std::max(quad, 0.0));
}

double toy_adversarial_pr(const ToyProblem& p, double theta) {
    check(p);
    check_theta(theta);
    return theta * (p.a1 * theta + p.a0 - std::sqrt(2.0 * p.rho * p.sigma2));
}

}  // namespace perfdro
