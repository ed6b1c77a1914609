#include "trefree/gaussian.hpp"

#include <cmath>
#include <string>

#include "trefree/errors.hpp"

namespace trefree::nn {

namespace {

void check_std(const GaussianDist& d) {
  for (int i = 0; i < d.dim(); ++i) {
    if (!(d.std[i] > 0.0) || !std::isfinite(d.std[i])) {
      throw DomainError("Gaussian std[" + std::to_string(i) + "] must be positive and finite");
    }
  }
  if (d.std.size() != d.mean.size()) throw InvalidArgument("mean/std dimension mismatch");
}

void check_action(const GaussianDist& d, std::span<const double> action) {
  if (static_cast<int>(action.size()) != d.dim()) {
    throw InvalidArgument("action dimension " + std::to_string(action.size()) +
                          " does not match distribution dimension " + std::to_string(d.dim()));
  }
}

}  // namespace

double log_prob(const GaussianDist& dist, std::span<const double> action) {
  check_std(dist);
  check_action(dist, action);
  double total = 0.0;
  for (int i = 0; i < dist.dim(); ++i) {
    const double z = (action[static_cast<std::size_t>(i)] - dist.mean[i]) / dist.std[i];
    total += -0.5 * z * z - std::log(dist.std[i]) - kHalfLog2Pi;
  }
  return total;
}

double entropy(const GaussianDist& dist) {
  check_std(dist);
  double total = 0.0;
  for (int i = 0; i < dist.dim(); ++i) total += std::log(dist.std[i]) + 0.5 + kHalfLog2Pi;
  return total;
}

double kl(const GaussianDist& a, const GaussianDist& b) {
  check_std(a);
  check_std(b);
  if (a.dim() != b.dim()) throw InvalidArgument("KL between distributions of different dimension");
  double total = 0.0;
  for (int i = 0; i < a.dim(); ++i) {
    const double diff = a.mean[i] - b.mean[i];
    const double vb = b.std[i] * b.std[i];
    total += std::log(b.std[i] / a.std[i]) + (a.std[i] * a.std[i] + diff * diff) / (2.0 * vb) - 0.5;
  }
  return total;
}

VectorXd sample(const GaussianDist& dist, Rng& rng) {
  check_std(dist);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd out(dist.dim());
  for (int i = 0; i < dist.dim(); ++i) out[i] = dist.mean[i] + dist.std[i] * normal(rng);
  return out;
}

DistGrad log_prob_grad(const GaussianDist& dist, std::span<const double> action) {
  check_std(dist);
  check_action(dist, action);
  DistGrad g{VectorXd(dist.dim()), VectorXd(dist.dim())};
  for (int i = 0; i < dist.dim(); ++i) {
    const double diff = action[static_cast<std::size_t>(i)] - dist.mean[i];
    const double var = dist.std[i] * dist.std[i];
    g.d_mean[i] = diff / var;
    g.d_log_std[i] = diff * diff / var - 1.0;
  }
  return g;
}

DistGrad entropy_grad(const GaussianDist& dist) {
  check_std(dist);
  return {VectorXd::Zero(dist.dim()), VectorXd::Ones(dist.dim())};
}

DistGrad kl_grad_second(const GaussianDist& fixed, const GaussianDist& dist) {
  check_std(fixed);
  check_std(dist);
  DistGrad g{VectorXd(dist.dim()), VectorXd(dist.dim())};
  for (int i = 0; i < dist.dim(); ++i) {
    const double diff = dist.mean[i] - fixed.mean[i];
    const double var = dist.std[i] * dist.std[i];
    g.d_mean[i] = diff / var;
    g.d_log_std[i] = 1.0 - (fixed.std[i] * fixed.std[i] + diff * diff) / var;
  }
  return g;
}

}  // namespace trefree::nn
