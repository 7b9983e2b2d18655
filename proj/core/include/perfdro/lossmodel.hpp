#pragma once

#include <optional>

#include "perfdro/datamodel.hpp"
#include "perfdro/distmap.hpp"

namespace perfdro {

/// L2-regularized logistic classifier:
/// loss(x,y;theta) = -y log h(x) - (1-y) log(1-h(x)) + lambda/2 ||theta||^2
/// with h(x) = 1/(1+exp(-theta.x)). Probabilities are clamped away from 0/1
/// by 1e-12 so losses stay finite for any finite input.
struct LossModel {
    double lambda = 0.001;
};

constexpr double kProbClamp = 1e-12;

double sigmoid(double t);

double loss(const LossModel& model, const Sample& z, const Vector& theta);

struct LossGrad {
    double value = 0.0;
    Vector grad;
};

// Value and total derivative of the composed objective theta -> loss(T_theta(z); theta):
// grad = grad_theta loss at the transformed sample plus J_theta(T_theta)^T grad_x loss.
LossGrad composed_loss_grad(const LossModel& model, const Sample& z, const Vector& theta,
                            const ResponseMap& response);

struct ClassificationMetrics {
    double risk = 0.0;
    double accuracy = 0.0;
    std::optional<double> ber;  // absent when only one class is present
};

// Weighted risk, accuracy with the tie rule yhat = 1{h >= 0.5}, and balanced
// error rate 0.5*(FPR + FNR). BER is left unset on single-class data.
ClassificationMetrics metrics(const LossModel& model, const EmpiricalDistribution& dist,
                              const Vector& theta);

}  // namespace perfdro
