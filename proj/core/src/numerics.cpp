#include "perfdro/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace perfdro {

namespace {

double pairwise_sum_impl(const double* xs, std::size_t n) {
    if (n <= 32) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += xs[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum_impl(xs, half) + pairwise_sum_impl(xs + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> xs) {
    return pairwise_sum_impl(xs.data(), xs.size());
}

double pairwise_sum(const Vector& xs) {
    return pairwise_sum_impl(xs.data(), static_cast<std::size_t>(xs.size()));
}

double weighted_sum(const Vector& weights, const Vector& values) {
    if (weights.size() != values.size())
        throw std::invalid_argument("weighted_sum: length mismatch");
    Vector prod = weights.cwiseProduct(values);
    return pairwise_sum(prod);
}

double weighted_log_sum_exp(const Vector& weights, const Vector& args) {
    if (weights.size() != args.size())
        throw std::invalid_argument("weighted_log_sum_exp: length mismatch");
    if (weights.size() == 0)
        throw std::invalid_argument("weighted_log_sum_exp: empty input");
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < args.size(); ++i)
        if (weights[i] > 0.0 && args[i] > m) m = args[i];
    if (!std::isfinite(m))
        throw std::invalid_argument("weighted_log_sum_exp: no positive weight");
    Vector terms(args.size());
    for (Eigen::Index i = 0; i < args.size(); ++i)
        terms[i] = weights[i] > 0.0 ? weights[i] * std::exp(args[i] - m) : 0.0;
    return m + std::log(pairwise_sum(terms));
}

ScalarMinResult golden_section_min(const std::function<double(double)>& f, double lo,
                                   double hi, int max_iters, double xtol) {
    if (!(lo < hi)) throw std::invalid_argument("golden_section_min: lo >= hi");
    constexpr double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    int evals = 2;
    for (int it = 0; it < max_iters && (b - a) > xtol; ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        }
        ++evals;
    }
    ScalarMinResult r;
    if (f1 <= f2) {
        r.x = x1;
        r.fx = f1;
    } else {
        r.x = x2;
        r.fx = f2;
    }
    r.evals = evals;
    return r;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(base) ^ a) ^ b);
}

std::uint64_t Rng::next_u64() {
    // splitmix64
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gauss() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform01();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi_u2 = 2.0 * M_PI * u2;
    spare_ = r * std::sin(two_pi_u2);
    has_spare_ = true;
    return r * std::cos(two_pi_u2);
}

std::size_t Rng::categorical(const Vector& cumulative_weights) {
    const double u = uniform01() * cumulative_weights[cumulative_weights.size() - 1];
    const double* begin = cumulative_weights.data();
    const double* end = begin + cumulative_weights.size();
    const double* it = std::upper_bound(begin, end, u);
    std::size_t idx = static_cast<std::size_t>(it - begin);
    const std::size_t n = static_cast<std::size_t>(cumulative_weights.size());
    return idx < n ? idx : n - 1;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace perfdro
