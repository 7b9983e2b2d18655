#pragma once

#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "perfdro/datamodel.hpp"

namespace perfdro {

// No performativity: T_theta(z) = z.
struct IdentityResponse {};

// Quadratic-cost best response on the strategic features:
// x' = x - epsilon * B * theta with B = diag(strategic_mask).
struct StrategicLinearResponse {
    double epsilon = 0.0;
    std::vector<bool> strategic_mask;
};

// Translation model: x' = x + A * theta, A is d x dim(Theta).
struct LocationShiftResponse {
    Matrix shift;
};

using ResponseMap =
    std::variant<IdentityResponse, StrategicLinearResponse, LocationShiftResponse>;

// x - epsilon * B * theta with B = diag(strategic_mask); labels are the
// caller's concern.
Vector best_response(const Vector& x, const Vector& theta, double epsilon,
                     const std::vector<bool>& strategic_mask);

// Image of a single feature vector under T_theta.
Vector apply_response(const ResponseMap& response, const Vector& x, const Vector& theta);

// J_theta(T_theta)^T v, the transpose-Jacobian action used by composed
// gradients. Identity contributes zero; StrategicLinear contributes -eps*B*v;
// LocationShift contributes A^T v.
Vector response_jacobian_t_vec(const ResponseMap& response, const Vector& v,
                               Eigen::Index theta_dim);

// Rule theta -> D(theta) realized as the pushforward of a base empirical
// distribution under a parametric response map.
struct DistributionMap {
    EmpiricalDistribution base;
    ResponseMap response;
};

// Atom-wise image of the base under T_theta; weights and labels preserved.
EmpiricalDistribution pushforward(const DistributionMap& map, const Vector& theta);

// Least-squares identification of a location matrix from observed pairs
// (theta_k, mean_k): A_hat = U V^+ with V^+ = (V^T V)^{-1} V^T,
// V = [theta_1-theta_0 | ...], U = [mean_1-mean_0 | ...].
Matrix partial_identify(const std::vector<Vector>& thetas, const std::vector<Vector>& means);

struct MixtureMap {
    std::vector<DistributionMap> components;
    Vector mixture_weights;
};

// Concatenated atoms of the component pushforwards with weights scaled by
// the mixture weights.
EmpiricalDistribution mixture_pushforward(const MixtureMap& mix, const Vector& theta);

// JSON wire format:
//   {"type":"identity"}
//   {"type":"strategic","epsilon":0.5,"mask":[1,1,1,0]}
//   {"type":"location","A":[[...],[...]]}
ResponseMap response_map_from_json(const nlohmann::json& j);
nlohmann::json response_map_to_json(const ResponseMap& response);

}  // namespace perfdro
