#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace perfdro {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Fixed-order pairwise summation. The reduction tree depends only on the
// length, so results are identical run to run regardless of threading above.
double pairwise_sum(std::span<const double> xs);
double pairwise_sum(const Vector& xs);

// Weighted dot product sum_i w_i * x_i via pairwise summation.
double weighted_sum(const Vector& weights, const Vector& values);

// log sum_i w_i exp(a_i) over the support {i : w_i > 0}, max-shifted.
// Weights need not be normalized. Requires at least one positive weight.
double weighted_log_sum_exp(const Vector& weights, const Vector& args);

struct ScalarMinResult {
    double x = 0.0;
    double fx = 0.0;
    int evals = 0;
};

// Golden-section search for a unimodal f on [lo, hi]. Stops after max_iters
// shrink steps or when the interval is below xtol (absolute, in x).
ScalarMinResult golden_section_min(const std::function<double(double)>& f, double lo,
                                   double hi, int max_iters, double xtol);

// splitmix64-style mixing for deriving independent stream seeds from a base
// seed plus cell coordinates (trial index, grid index, ...).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// Deterministic random source. std:: distributions are implementation
// defined, so uniform and Gaussian variates are produced here explicitly and
// are bit-stable for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform01();

    // Standard normal via Box-Muller; draws are consumed in pairs.
    double gauss();

    // Index i with probability weights[i]; weights must sum to ~1.
    std::size_t categorical(const Vector& cumulative_weights);

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Shortest round-trip decimal formatting ("%.17g") used for CSV emission so
// identical runs produce identical bytes.
std::string format_double(double v);

// Fixed low-precision formatting for SVG coordinates.
std::string format_fixed(double v, int digits);

}  // namespace perfdro
