#include "perfdro/distmap.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "perfdro/errors.hpp"

namespace perfdro {

Vector best_response(const Vector& x, const Vector& theta, double epsilon,
                     const std::vector<bool>& strategic_mask) {
    if (x.size() != theta.size() ||
        static_cast<std::size_t>(x.size()) != strategic_mask.size())
        throw std::invalid_argument("best_response: dimension mismatch");
    if (!std::isfinite(epsilon))
        throw std::invalid_argument("best_response: epsilon must be finite");
    Vector out = x;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (strategic_mask[static_cast<std::size_t>(i)]) out[i] -= epsilon * theta[i];
    return out;
}

Vector apply_response(const ResponseMap& response, const Vector& x, const Vector& theta) {
    return std::visit(
        [&](const auto& r) -> Vector {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, IdentityResponse>) {
                return x;
            } else if constexpr (std::is_same_v<T, StrategicLinearResponse>) {
                return best_response(x, theta, r.epsilon, r.strategic_mask);
            } else {
                if (r.shift.rows() != x.size() || r.shift.cols() != theta.size())
                    throw std::invalid_argument("apply_response: location shift dimension mismatch");
                return x + r.shift * theta;
            }
        },
        response);
}

Vector response_jacobian_t_vec(const ResponseMap& response, const Vector& v,
                               Eigen::Index theta_dim) {
    return std::visit(
        [&](const auto& r) -> Vector {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, IdentityResponse>) {
                return Vector::Zero(theta_dim);
            } else if constexpr (std::is_same_v<T, StrategicLinearResponse>) {
                if (v.size() != theta_dim ||
                    static_cast<std::size_t>(v.size()) != r.strategic_mask.size())
                    throw std::invalid_argument("response_jacobian_t_vec: dimension mismatch");
                Vector out = Vector::Zero(theta_dim);
                for (Eigen::Index i = 0; i < v.size(); ++i)
                    if (r.strategic_mask[static_cast<std::size_t>(i)])
                        out[i] = -r.epsilon * v[i];
                return out;
            } else {
                if (r.shift.rows() != v.size() || r.shift.cols() != theta_dim)
                    throw std::invalid_argument("response_jacobian_t_vec: dimension mismatch");
                return r.shift.transpose() * v;
            }
        },
        response);
}

EmpiricalDistribution pushforward(const DistributionMap& map, const Vector& theta) {
    std::vector<Sample> out;
    out.reserve(map.base.size());
    for (const Sample& z : map.base.samples())
        out.push_back(Sample{apply_response(map.response, z.features, theta), z.label});
    return EmpiricalDistribution(std::move(out), map.base.weights());
}

Matrix partial_identify(const std::vector<Vector>& thetas, const std::vector<Vector>& means) {
    if (thetas.size() != means.size())
        throw std::invalid_argument("partial_identify: theta/mean count mismatch");
    if (thetas.size() < 2)
        throw std::invalid_argument("partial_identify: need at least two observations");
    const Eigen::Index p = thetas.front().size();
    const Eigen::Index d = means.front().size();
    const Eigen::Index K = static_cast<Eigen::Index>(thetas.size()) - 1;
    Matrix V(p, K), U(d, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        V.col(k) = thetas[static_cast<std::size_t>(k + 1)] - thetas[0];
        U.col(k) = means[static_cast<std::size_t>(k + 1)] - means[0];
    }
    const Matrix G = V.transpose() * V;
    // Normal-equations pseudoinverse; guard against rank deficiency.
    Eigen::SelfAdjointEigenSolver<Matrix> es(G);
    const double max_ev = es.eigenvalues().maxCoeff();
    const double min_ev = es.eigenvalues().minCoeff();
    if (!(max_ev > 0.0) || min_ev <= 0.0 || max_ev / min_ev > 1e12)
        throw SingularityError("partial_identify: V is rank deficient (condition number > 1e12)");
    return U * G.ldlt().solve(V.transpose());
}

EmpiricalDistribution mixture_pushforward(const MixtureMap& mix, const Vector& theta) {
    if (mix.components.empty())
        throw std::invalid_argument("mixture_pushforward: no components");
    if (static_cast<std::size_t>(mix.mixture_weights.size()) != mix.components.size())
        throw std::invalid_argument("mixture_pushforward: weight/component count mismatch");
    std::vector<Sample> atoms;
    std::size_t total = 0;
    for (const DistributionMap& c : mix.components) total += c.base.size();
    atoms.reserve(total);
    Vector weights(static_cast<Eigen::Index>(total));
    Eigen::Index pos = 0;
    for (std::size_t c = 0; c < mix.components.size(); ++c) {
        const double gamma = mix.mixture_weights[static_cast<Eigen::Index>(c)];
        EmpiricalDistribution pushed = pushforward(mix.components[c], theta);
        for (std::size_t i = 0; i < pushed.size(); ++i) {
            atoms.push_back(pushed.samples()[i]);
            weights[pos++] = gamma * pushed.weights()[static_cast<Eigen::Index>(i)];
        }
    }
    return EmpiricalDistribution(std::move(atoms), std::move(weights));
}

ResponseMap response_map_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "identity") return IdentityResponse{};
    if (type == "strategic") {
        StrategicLinearResponse r;
        r.epsilon = j.at("epsilon").get<double>();
        for (const auto& m : j.at("mask")) r.strategic_mask.push_back(m.get<int>() != 0);
        return r;
    }
    if (type == "location") {
        const auto& rows = j.at("A");
        if (rows.empty()) throw ConfigError("response map: empty location matrix");
        LocationShiftResponse r;
        r.shift.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(rows[0].size()));
        for (Eigen::Index i = 0; i < r.shift.rows(); ++i) {
            const auto& row = rows[static_cast<std::size_t>(i)];
            if (static_cast<Eigen::Index>(row.size()) != r.shift.cols())
                throw ConfigError("response map: ragged location matrix");
            for (Eigen::Index k = 0; k < r.shift.cols(); ++k)
                r.shift(i, k) = row[static_cast<std::size_t>(k)].get<double>();
        }
        return r;
    }
    throw ConfigError("response map: unknown type '" + type + "'");
}

nlohmann::json response_map_to_json(const ResponseMap& response) {
    return std::visit(
        [](const auto& r) -> nlohmann::json {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, IdentityResponse>) {
                return {{"type", "identity"}};
            } else if constexpr (std::is_same_v<T, StrategicLinearResponse>) {
                nlohmann::json mask = nlohmann::json::array();
                for (bool b : r.strategic_mask) mask.push_back(b ? 1 : 0);
                return {{"type", "strategic"}, {"epsilon", r.epsilon}, {"mask", mask}};
            } else {
                nlohmann::json rows = nlohmann::json::array();
                for (Eigen::Index i = 0; i < r.shift.rows(); ++i) {
                    nlohmann::json row = nlohmann::json::array();
                    for (Eigen::Index k = 0; k < r.shift.cols(); ++k) row.push_back(r.shift(i, k));
                    rows.push_back(row);
                }
                return {{"type", "location"}, {"A", rows}};
            }
        },
        response);
}

}  // namespace perfdro
