#pragma once

// KL-constrained natural-gradient step.
//
// g = grad of mean(ratio * A) at the old parameters; x solves (F + damping I) x = g
// by conjugate gradient, where F v is the Hessian of mean KL(old || new) applied to
// v. At the old parameters that Hessian equals J^T diag(1/sigma^2, 2) J with J the
// Jacobian of (mean, log_std), so F v is evaluated exactly as a forward-mode pass
// followed by a reverse pass. The full step sqrt(2 max_kl / x^T (F + damping I) x) x
// is then shrunk geometrically until mean KL <= max_kl and the surrogate improves.

#include <functional>
#include <string>

#include "trefree/objectives.hpp"

namespace trefree::objectives {

struct TrpoOptions {
  double max_kl = 0.01;
  int cg_iters = 10;
  double damping = 0.1;
  double backtrack = 0.8;
  int max_backtracks = 10;
};

struct TrpoReport {
  bool accepted = false;
  std::string reason;
  double kl = 0.0;
  double improvement = 0.0;
  double expected_improvement = 0.0;
  double cg_residual = 0.0;
  double step_norm = 0.0;
  int backtracks = 0;
};

using LinearOperator = std::function<VectorXd(const VectorXd&)>;

// Undamped F v at the network's current parameters (taken as the old policy).
VectorXd fisher_vector_product(const nn::PolicyNet& net, const Minibatch& batch,
                               const VectorXd& v);

struct CgResult {
  VectorXd x;
  double residual_norm = 0.0;
  int iterations = 0;
};

// Throws NumericError on a non-finite iterate.
CgResult conjugate_gradient(const LinearOperator& op, const VectorXd& b, int iters,
                            double tolerance = 1e-10);

// Mutates `net` only when the step is accepted. `operator_override`, when set,
// replaces the damped operator (F + damping I).
TrpoReport trpo_step(nn::PolicyNet& net, const Minibatch& batch, const TrpoOptions& options,
                     const LinearOperator* operator_override = nullptr);

}  // namespace trefree::objectives
