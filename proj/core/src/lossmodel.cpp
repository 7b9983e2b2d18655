#include "perfdro/lossmodel.hpp"

#include <cmath>

#include "perfdro/errors.hpp"

namespace perfdro {

double sigmoid(double t) {
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

namespace {

void check_model(const LossModel& model) {
    if (!(model.lambda >= 0.0) || !std::isfinite(model.lambda))
        throw std::invalid_argument("LossModel: lambda must be finite and nonnegative");
}

double clamped(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

double cross_entropy(double h, int y) {
    return y == 1 ? -std::log(clamped(h)) : -std::log(clamped(1.0 - h));
}

}  // namespace

double loss(const LossModel& model, const Sample& z, const Vector& theta) {
    check_model(model);
    if (z.features.size() != theta.size())
        throw std::invalid_argument("loss: feature/theta dimension mismatch");
    const double h = sigmoid(theta.dot(z.features));
    return cross_entropy(h, z.label) + 0.5 * model.lambda * theta.squaredNorm();
}

LossGrad composed_loss_grad(const LossModel& model, const Sample& z, const Vector& theta,
                            const ResponseMap& response) {
    check_model(model);
    const Vector x = apply_response(response, z.features, theta);
    if (x.size() != theta.size())
        throw std::invalid_argument("composed_loss_grad: transformed feature dimension mismatch");
    const double h = sigmoid(theta.dot(x));
    const double residual = h - static_cast<double>(z.label);

    LossGrad out;
    out.value = cross_entropy(h, z.label) + 0.5 * model.lambda * theta.squaredNorm();
    // d/dtheta at fixed x', plus the chain-rule term through T_theta.
    out.grad = residual * x + model.lambda * theta;
    out.grad += response_jacobian_t_vec(response, (residual * theta).eval(), theta.size());
    return out;
}

ClassificationMetrics metrics(const LossModel& model, const EmpiricalDistribution& dist,
                              const Vector& theta) {
    check_model(model);
    const Eigen::Index n = static_cast<Eigen::Index>(dist.size());
    Vector losses(n), correct(n), pos_weight(n), neg_weight(n), fp(n), fn(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Sample& z = dist.samples()[static_cast<std::size_t>(i)];
        const double w = dist.weights()[i];
        const double h = sigmoid(theta.dot(z.features));
        const int yhat = h >= 0.5 ? 1 : 0;
        losses[i] = w * (cross_entropy(h, z.label) + 0.5 * model.lambda * theta.squaredNorm());
        correct[i] = yhat == z.label ? w : 0.0;
        pos_weight[i] = z.label == 1 ? w : 0.0;
        neg_weight[i] = z.label == 0 ? w : 0.0;
        fp[i] = (z.label == 0 && yhat == 1) ? w : 0.0;
        fn[i] = (z.label == 1 && yhat == 0) ? w : 0.0;
    }
    ClassificationMetrics m;
    m.risk = pairwise_sum(losses);
    m.accuracy = pairwise_sum(correct);
    const double wpos = pairwise_sum(pos_weight);
    const double wneg = pairwise_sum(neg_weight);
    if (wpos > 0.0 && wneg > 0.0)
        m.ber = 0.5 * (pairwise_sum(fp) / wneg + pairwise_sum(fn) / wpos);
    return m;
}

}  // namespace perfdro
