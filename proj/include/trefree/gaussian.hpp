#pragma once

#include <Eigen/Dense>

#include <span>

#include "trefree/random.hpp"

namespace trefree::nn {

using Eigen::VectorXd;

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

// Diagonal Gaussian over actions.
struct GaussianDist {
  VectorXd mean;
  VectorXd std;

  int dim() const { return static_cast<int>(mean.size()); }
};

double log_prob(const GaussianDist& dist, std::span<const double> action);
double entropy(const GaussianDist& dist);
// KL(a || b), closed form.
double kl(const GaussianDist& a, const GaussianDist& b);
VectorXd sample(const GaussianDist& dist, Rng& rng);

// Partial derivatives with respect to the mean and log-std of the
// distribution argument that carries parameters.
struct DistGrad {
  VectorXd d_mean;
  VectorXd d_log_std;
};

DistGrad log_prob_grad(const GaussianDist& dist, std::span<const double> action);
DistGrad entropy_grad(const GaussianDist& dist);
// Gradient of KL(fixed || dist) with respect to dist's parameters.
DistGrad kl_grad_second(const GaussianDist& fixed, const GaussianDist& dist);

}  // namespace trefree::nn
