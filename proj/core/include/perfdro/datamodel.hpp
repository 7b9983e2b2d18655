#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "perfdro/numerics.hpp"

namespace perfdro {

// One observation z = (x, y): a dense feature vector and a binary label.
struct Sample {
    Vector features;
    int label = 0;  // 0 or 1
};

/// Finite weighted sample set standing in for a probability measure.
/// Immutable after construction; weights are nonnegative and sum to one.
class EmpiricalDistribution {
public:
    EmpiricalDistribution(std::vector<Sample> samples, Vector weights);

    // Equal mass 1/n on every atom.
    static EmpiricalDistribution uniform(std::vector<Sample> samples);

    const std::vector<Sample>& samples() const { return samples_; }
    const Vector& weights() const { return weights_; }
    std::size_t size() const { return samples_.size(); }
    Eigen::Index dim() const { return samples_.front().features.size(); }

private:
    std::vector<Sample> samples_;
    Vector weights_;
};

// Column layout of a CSV dataset plus the strategic/non-strategic feature
// split used by the response maps.
struct DatasetSchema {
    std::vector<std::string> feature_columns;
    std::string label_column;
    std::vector<bool> strategic_mask;  // length = feature_columns.size()
};

// Reads a comma-separated file (first line header, decimal-point reals) into
// a uniform-weight distribution, features ordered per schema. Rejects
// non-finite cells and labels outside {0, 1}.
EmpiricalDistribution load_csv(const std::filesystem::path& path,
                               const DatasetSchema& schema);

// n atoms drawn i.i.d. with probabilities equal to the input weights; output
// carries uniform weights 1/n. Identical (dist, n, seed) reproduce identical
// output bit for bit.
EmpiricalDistribution bootstrap_resample(const EmpiricalDistribution& dist,
                                         std::size_t n, std::uint64_t seed);

struct MomentSummary {
    Vector mean;
    Matrix covariance;
};

// Weighted mean and weighted covariance (total weight 1, no small-sample
// correction). Covariance is symmetric positive semidefinite.
MomentSummary moments(const EmpiricalDistribution& dist);

}  // namespace perfdro
