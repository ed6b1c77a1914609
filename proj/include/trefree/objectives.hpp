#pragma once

// Policy-update objectives evaluated over a minibatch, with exact gradients.
//
// Every objective is a per-sample term of the log-ratio log(pi_new/pi_old) and
// the advantage estimate; the batch loss is the negated mean of the terms plus
// optional value-regression, entropy and KL terms:
//
//   loss = -mean(policy_term) + value_coef * mean((V - R)^2)
//          - entropy_coef * mean(H) + kl_coef * mean(KL(old || new))
//
// The batch kernel runs either as a serial reference loop or as an OpenMP loop
// over fixed-size chunks whose partial sums are reduced in chunk order, so the
// parallel result does not depend on the thread count.

#include <Eigen/Dense>

#include <string_view>

#include "trefree/nn.hpp"

namespace trefree::objectives {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kMaxLogRatio = 30.0;
inline constexpr int kChunkSize = 32;

enum class Execution { kSerial, kParallel };

// One row per sample.
struct Minibatch {
  MatrixXd obs;
  MatrixXd actions;
  VectorXd old_log_probs;
  VectorXd advantages;
  VectorXd returns;
  MatrixXd old_means;  // optional (KL terms and TRPO)
  MatrixXd old_stds;

  int size() const { return static_cast<int>(obs.rows()); }
  bool has_old_dists() const { return old_means.rows() == obs.rows() && old_means.rows() > 0; }
  void validate() const;
};

enum class ObjectiveKind {
  kPg,                     // non-conservative: ratio * A
  kRatioConservative,      // clip(ratio - 1, -lambda, lambda) * A, or the min-form clip
  kObjectiveConservative,  // min((ratio - 1) * A, delta)
  kTrpo,                   // KL-constrained natural-gradient step
};

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kObjectiveConservative;
  bool min_form_clip = false;  // ratio-conservative only: min(rA, clip(r, 1-eps, 1+eps)A)
  double delta = 0.01;
  double lambda = 0.2;
  double eps_clip = 0.2;
  double trpo_kl = 0.01;
  double value_coef = 0.5;
  double entropy_coef = 0.0;

  void validate() const;
};

std::string_view to_string(const ObjectiveSpec& spec);  // pg | ppo | ratio-cons | trefree | trpo
ObjectiveSpec objective_from_name(std::string_view name);

enum class PolicyTerm {
  kNone,
  kPg,
  kRatioClip,  // clip(r - 1, -lambda, lambda) * A
  kPpoClip,    // min(r A, clip(r, 1 - eps, 1 + eps) A)
  kTrefree,    // min((r - 1) A, delta)
};

struct LossSpec {
  PolicyTerm policy = PolicyTerm::kNone;
  double delta = 0.01;
  double lambda = 0.2;
  double eps_clip = 0.2;
  double value_coef = 0.0;
  double entropy_coef = 0.0;
  double kl_coef = 0.0;
};

// Loss terms used for the policy-optimization epochs of an objective.
LossSpec loss_spec_for(const ObjectiveSpec& spec);

struct TermValue {
  double objective = 0.0;   // per-sample term to maximize
  double d_log_prob = 0.0;  // d objective / d log pi_new
  bool flat = false;        // on the clipped side: gradient exactly zero
};

TermValue policy_term(PolicyTerm term, double log_ratio, double advantage, const LossSpec& spec);

struct LossEval {
  double loss = 0.0;
  double policy_objective = 0.0;  // mean policy term
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double max_policy_term = 0.0;
  int flat_samples = 0;
  int terms_above_delta = 0;  // objective-conservative terms exceeding delta
  nn::GradBuffer grad;

  explicit LossEval(nn::NetShape shape) : grad(shape) {}
};

// Throws NumericError naming the sample when a log-ratio exceeds kMaxLogRatio.
LossEval evaluate_loss(const nn::PolicyNet& net, const Minibatch& batch, const LossSpec& spec,
                       Execution execution = Execution::kParallel);

// Scalar losses with gradients.
LossEval pg_loss(const nn::PolicyNet& net, const Minibatch& batch);
LossEval ratio_conservative_loss(const nn::PolicyNet& net, const Minibatch& batch, double lambda,
                                 bool min_form = false);
LossEval trefree_loss(const nn::PolicyNet& net, const Minibatch& batch, double delta);
LossEval value_loss(const nn::PolicyNet& net, const Minibatch& batch);
LossEval entropy_bonus(const nn::PolicyNet& net, const Minibatch& batch);  // loss = -mean H
LossEval kl_loss(const nn::PolicyNet& net, const Minibatch& batch);        // mean KL(old || new)

struct RatioStats {
  double min_log_ratio = 0.0;
  double max_log_ratio = 0.0;
  double mean_log_ratio = 0.0;

  double max_abs() const;
};

RatioStats ratio_stats(const nn::PolicyNet& net, const Minibatch& batch);
VectorXd log_ratios(const nn::PolicyNet& net, const Minibatch& batch);

// Mean KL(old || new) over the batch; requires old_means/old_stds.
double mean_kl(const nn::PolicyNet& net, const Minibatch& batch);

}  // namespace trefree::objectives
