#pragma once

// Shared oracles and generators for the test suites. Everything here is
// independent of the implementation paths it checks: dense-grid dual search,
// central finite differences, feasible-tilt construction.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "perfdro/risk.hpp"
#include "perfdro/solvers.hpp"

namespace testutil {

using perfdro::LossProfile;
using perfdro::Matrix;
using perfdro::Vector;

// Dense log-spaced grid search for inf_mu psi(mu); the independent oracle for
// the drpr dual minimization.
inline double drpr_grid_oracle(const LossProfile& profile, double rho, int points = 100000,
                               double mu_lo = 1e-4, double mu_hi = 1e3) {
    double best = std::numeric_limits<double>::infinity();
    const double log_lo = std::log(mu_lo), log_hi = std::log(mu_hi);
    for (int i = 0; i < points; ++i) {
        const double mu =
            std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(i) / (points - 1));
        best = std::min(best, perfdro::drpr_dual_objective(profile, mu, rho));
    }
    return best;
}

// Central finite differences of a scalar function of theta.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& theta,
                          double h = 1e-5) {
    Vector g(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        Vector lo = theta, hi = theta;
        lo[j] -= h;
        hi[j] += h;
        g[j] = (f(hi) - f(lo)) / (2.0 * h);
    }
    return g;
}

inline double rel_error(const Vector& a, const Vector& b) {
    const double scale = std::max(1e-12, std::max(a.norm(), b.norm()));
    return (a - b).norm() / scale;
}

// Exponential-family tilt q ~ p * exp(t*g) with t bisected so that
// KL(q||p) hits the requested level (KL is nondecreasing in t >= 0).
inline Vector tilt_with_kl(const Vector& p, const Vector& g, double kl_target) {
    auto tilt = [&](double t) {
        Vector q(p.size());
        const double m = (t * g).maxCoeff();
        for (Eigen::Index i = 0; i < p.size(); ++i) q[i] = p[i] * std::exp(t * g[i] - m);
        return Vector(q / q.sum());
    };
    double t_hi = 1.0;
    while (perfdro::kl_between_weights(tilt(t_hi), p) < kl_target && t_hi < 1e6) t_hi *= 2.0;
    double lo = 0.0, hi = t_hi;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (perfdro::kl_between_weights(tilt(mid), p) < kl_target ? lo : hi) = mid;
    }
    return tilt(lo);  // sits just below the target level
}

// Deterministic profile generator for dual-oracle comparisons.
struct ProfileGen {
    perfdro::Rng rng;
    explicit ProfileGen(std::uint64_t seed) : rng(seed) {}

    LossProfile make(int max_atoms = 20) {
        const int n = 2 + static_cast<int>(rng.uniform01() * (max_atoms - 2));
        LossProfile p;
        p.losses.resize(n);
        p.weights.resize(n);
        for (int i = 0; i < n; ++i) {
            p.losses[i] = 2.0 * rng.uniform01();
            p.weights[i] = 0.1 + rng.uniform01();
        }
        p.weights /= p.weights.sum();
        p.theta = Vector::Zero(1);
        return p;
    }
};

inline std::filesystem::path write_temp_file(const std::string& name,
                                             const std::string& contents) {
    const std::filesystem::path path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out << contents;
    return path;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testutil
