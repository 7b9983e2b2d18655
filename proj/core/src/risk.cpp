#include "perfdro/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "perfdro/errors.hpp"

namespace perfdro {

namespace {

void check_profile(const LossProfile& profile) {
    if (profile.losses.size() == 0)
        throw std::invalid_argument("LossProfile: empty");
    if (profile.losses.size() != profile.weights.size())
        throw std::invalid_argument("LossProfile: loss/weight length mismatch");
    if (!profile.losses.allFinite())
        throw std::invalid_argument("LossProfile: non-finite loss");
}

double loss_range(const LossProfile& profile) {
    return profile.losses.maxCoeff() - profile.losses.minCoeff();
}

// Largest loss among atoms with positive weight.
double supported_max_loss(const LossProfile& profile) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < profile.losses.size(); ++i)
        if (profile.weights[i] > 0.0 && profile.losses[i] > m) m = profile.losses[i];
    return m;
}

// Weight carried by the atoms attaining the supported maximum (up to roundoff).
double argmax_weight(const LossProfile& profile) {
    const double max_loss = supported_max_loss(profile);
    const double tol = 1e-12 * std::max(1.0, std::abs(max_loss));
    Vector w(profile.losses.size());
    for (Eigen::Index i = 0; i < profile.losses.size(); ++i)
        w[i] = profile.losses[i] >= max_loss - tol ? profile.weights[i] : 0.0;
    return pairwise_sum(w);
}

struct TiltStats {
    double mean = 0.0;      // E_q[loss] under the tilted weights
    double variance = 0.0;  // Var_q[loss]
    double log_mgf = 0.0;   // log E_w[exp(loss/mu)]
};

TiltStats tilt_stats(const LossProfile& profile, double mu) {
    TiltStats s;
    s.log_mgf = weighted_log_sum_exp(profile.weights, profile.losses / mu);
    const Vector q = worst_case_weights(profile, mu);
    s.mean = weighted_sum(q, profile.losses);
    Vector dev = profile.losses.array() - s.mean;
    s.variance = weighted_sum(q, dev.cwiseProduct(dev));
    return s;
}

}  // namespace

LossProfile loss_profile(const LossModel& model, const DistributionMap& map,
                         const Vector& theta) {
    return loss_profile(model, pushforward(map, theta), theta);
}

LossProfile loss_profile(const LossModel& model, const EmpiricalDistribution& induced,
                         const Vector& theta) {
    LossProfile p;
    p.theta = theta;
    p.weights = induced.weights();
    p.losses.resize(static_cast<Eigen::Index>(induced.size()));
    for (Eigen::Index i = 0; i < p.losses.size(); ++i)
        p.losses[i] = loss(model, induced.samples()[static_cast<std::size_t>(i)], theta);
    return p;
}

double performative_risk(const LossProfile& profile) {
    check_profile(profile);
    return weighted_sum(profile.weights, profile.losses);
}

double log_tilted_risk(const LossProfile& profile, double alpha) {
    check_profile(profile);
    if (!std::isfinite(alpha) || alpha < 0.0)
        throw std::invalid_argument("tilted_risk: alpha must be finite and >= 0");
    if (alpha == 0.0) return 0.0;
    return weighted_log_sum_exp(profile.weights, alpha * profile.losses);
}

double tilted_risk(const LossProfile& profile, double alpha) {
    return std::exp(log_tilted_risk(profile, alpha));
}

double drpr_dual_objective(const LossProfile& profile, double mu, double rho) {
    check_profile(profile);
    if (!(mu > 0.0)) throw std::invalid_argument("drpr_dual_objective: mu must be > 0");
    return mu * weighted_log_sum_exp(profile.weights, profile.losses / mu) + mu * rho;
}

DrprResult drpr(const LossProfile& profile, double rho) {
    check_profile(profile);
    if (rho < 0.0) throw std::invalid_argument("drpr: rho must be >= 0");
    if (rho == 0.0)
        return {performative_risk(profile), std::numeric_limits<double>::infinity()};

    const double max_loss = supported_max_loss(profile);
    // The KL ball contains the conditional on the argmax set once
    // rho >= -log(its weight); the supremum is then the vertex value.
    const double wmax = argmax_weight(profile);
    if (rho >= -std::log(wmax)) return {max_loss, 0.0};

    const double range = loss_range(profile);
    // rho < -log(wmax) guarantees range > 0 here (constant profiles have wmax = 1).
    const double lo = 1e-6 * range;
    const double hi = 1e6 * range;
    auto psi = [&](double log_mu) { return drpr_dual_objective(profile, std::exp(log_mu), rho); };
    const ScalarMinResult g =
        golden_section_min(psi, std::log(lo), std::log(hi), 200, 1e-12);

    double mu = std::exp(g.x);
    for (int it = 0; it < 5; ++it) {
        const TiltStats s = tilt_stats(profile, mu);
        const double kl = s.mean / mu - s.log_mgf;
        const double grad = rho - kl;                 // d psi / d mu
        const double hess = s.variance / (mu * mu * mu);
        if (!(hess > 0.0)) break;
        const double next = mu - grad / hess;
        if (!std::isfinite(next) || next <= lo || next >= hi) break;
        mu = next;
    }
    const double polished = drpr_dual_objective(profile, mu, rho);
    if (g.fx < polished) return {g.fx, std::exp(g.x)};
    return {polished, mu};
}

Vector worst_case_weights(const LossProfile& profile, double mu_star) {
    check_profile(profile);
    if (!(mu_star > 0.0))
        throw std::invalid_argument("worst_case_weights: mu_star must be > 0");
    double m = -std::numeric_limits<double>::infinity();  // max over the support
    for (Eigen::Index i = 0; i < profile.losses.size(); ++i)
        if (profile.weights[i] > 0.0 && profile.losses[i] > m) m = profile.losses[i];
    Vector q(profile.losses.size());
    for (Eigen::Index i = 0; i < q.size(); ++i)
        q[i] = profile.weights[i] > 0.0
                   ? profile.weights[i] * std::exp((profile.losses[i] - m) / mu_star)
                   : 0.0;
    const double total = pairwise_sum(q);
    return q / total;
}

double kl_between_weights(const Vector& q, const Vector& p) {
    if (q.size() != p.size())
        throw std::invalid_argument("kl_between_weights: length mismatch");
    Vector terms(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        if (q[i] < 0.0 || p[i] < 0.0)
            throw std::invalid_argument("kl_between_weights: negative weight");
        if (q[i] == 0.0) {
            terms[i] = 0.0;
        } else {
            if (p[i] == 0.0)
                throw SupportError("kl_between_weights: q charges atom " + std::to_string(i) +
                                   " where p has no mass");
            terms[i] = q[i] * std::log(q[i] / p[i]);
        }
    }
    const double s = pairwise_sum(terms);
    return s < 0.0 ? 0.0 : s;  // Jensen: negative values are roundoff
}

double gaussian_kl_location(const Vector& theta, const Matrix& A, double eps_true,
                            double eps_nominal, const Matrix& sigma_hat) {
    if (A.cols() != theta.size())
        throw std::invalid_argument("gaussian_kl_location: A/theta dimension mismatch");
    if (sigma_hat.rows() != A.rows() || sigma_hat.cols() != A.rows())
        throw std::invalid_argument("gaussian_kl_location: Sigma/A dimension mismatch");
    Eigen::LLT<Matrix> llt(sigma_hat);
    if (llt.info() != Eigen::Success)
        throw SingularityError("gaussian_kl_location: Sigma is not positive definite");
    const Vector shift = A * theta;
    const double quad = shift.dot(llt.solve(shift));
    const double de = eps_true - eps_nominal;
    return 0.5 * de * de * quad;
}

double cressie_read_dual(const LossProfile& profile, const CressieReadSpec& spec, double mu) {
    check_profile(profile);
    if (!(spec.k > 1.0)) throw std::invalid_argument("cressie_read_dual: k must be > 1");
    if (spec.rho < 0.0) throw std::invalid_argument("cressie_read_dual: rho must be >= 0");
    const double kstar = spec.conjugate_order();
    Vector terms(profile.losses.size());
    for (Eigen::Index i = 0; i < terms.size(); ++i) {
        const double excess = std::max(profile.losses[i] - mu, 0.0);
        terms[i] = profile.weights[i] * std::pow(excess, kstar);
    }
    const double moment = pairwise_sum(terms);
    const double scale = std::pow(1.0 + spec.rho * spec.k * (spec.k - 1.0), 1.0 / spec.k);
    return scale * std::pow(moment, 1.0 / kstar) + mu;
}

double augmented_pr_objective(const LossProfile& profile, double mu, double nu, double rho,
                              const std::function<double(double)>& phi_conjugate) {
    check_profile(profile);
    if (!(mu > 0.0)) throw std::invalid_argument("augmented_pr_objective: mu must be > 0");
    Vector terms(profile.losses.size());
    for (Eigen::Index i = 0; i < terms.size(); ++i) {
        const double value = phi_conjugate((profile.losses[i] - nu) / mu);
        if (!std::isfinite(value))
            throw std::domain_error("augmented_pr_objective: conjugate not finite at atom " +
                                    std::to_string(i));
        terms[i] = profile.weights[i] * value;
    }
    return mu * pairwise_sum(terms) + mu * rho + nu;
}

double kl_conjugate(double s) { return std::expm1(s); }

double chi2_conjugate(double s) { return s <= -2.0 ? -1.0 : s + 0.25 * s * s; }

ExcessRiskBounds excess_risk_bounds(const LossProfile& profile_at_theta, double rho,
                                    double kl_sup_estimate, double loss_bound) {
    check_profile(profile_at_theta);
    if (rho < 0.0 || kl_sup_estimate < 0.0 || loss_bound < 0.0)
        throw std::invalid_argument("excess_risk_bounds: inputs must be nonnegative");
    ExcessRiskBounds b;
    b.po_bound = std::sqrt(2.0) * loss_bound * std::sqrt(kl_sup_estimate);
    b.drpo_bound = std::sqrt(rho * profile_loss_variance(profile_at_theta));
    return b;
}

double profile_loss_variance(const LossProfile& profile) {
    check_profile(profile);
    const double mean = weighted_sum(profile.weights, profile.losses);
    Vector dev = profile.losses.array() - mean;
    return weighted_sum(profile.weights, dev.cwiseProduct(dev));
}

void export_loss_histogram(std::ostream& out, const LossProfile& profile,
                           const Vector& tilted_weights) {
    if (tilted_weights.size() != profile.losses.size())
        throw std::invalid_argument("export_loss_histogram: tilted weight length mismatch");
    out << "loss,base_weight,tilted_weight\n";
    for (Eigen::Index i = 0; i < profile.losses.size(); ++i)
        out << format_double(profile.losses[i]) << ',' << format_double(profile.weights[i])
            << ',' << format_double(tilted_weights[i]) << '\n';
}

}  // namespace perfdro
