#pragma once

// Exact analytics on small finite MDPs.
//
// Everything here is a pure function of its inputs: values, advantages and
// discounted state distributions come from dense LU solves of (I - gamma P_pi),
// and the bound checks compare exact performance differences against the
// surrogate-minus-penalty lower bounds for two policies.

#include <Eigen/Dense>
#include "json.hpp"

#include <optional>

#include "trefree/random.hpp"

namespace trefree::tabular {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kProbabilityTolerance = 1e-12;
inline constexpr double kBoundTolerance = 1e-9;

// Finite discounted MDP. Transitions are stored as an (S*A) x S matrix whose
// row s*A + a is P(. | s, a).
class Mdp {
 public:
  Mdp(int n_states, int n_actions, MatrixXd transition, MatrixXd reward,
      VectorXd initial_dist, double gamma);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }

  const MatrixXd& transition() const { return transition_; }
  const MatrixXd& reward() const { return reward_; }
  const VectorXd& initial_dist() const { return initial_dist_; }

  double p(int s, int a, int next) const { return transition_(row(s, a), next); }
  auto next_dist(int s, int a) const { return transition_.row(row(s, a)); }

 private:
  int row(int s, int a) const { return s * n_actions_ + a; }

  int n_states_;
  int n_actions_;
  MatrixXd transition_;
  MatrixXd reward_;
  VectorXd initial_dist_;
  double gamma_;
};

class TabularPolicy {
 public:
  explicit TabularPolicy(MatrixXd probs);

  static TabularPolicy uniform(int n_states, int n_actions);

  int n_states() const { return static_cast<int>(probs_.rows()); }
  int n_actions() const { return static_cast<int>(probs_.cols()); }
  const MatrixXd& probs() const { return probs_; }
  double operator()(int s, int a) const { return probs_(s, a); }

 private:
  MatrixXd probs_;
};

// A(s,a) = r(s,a) + gamma * E_{s'}[f(s')] - f(s) for an arbitrary f.
struct StateActionFn {
  MatrixXd values;
  std::optional<VectorXd> generator_f;
};

struct QAdvantage {
  MatrixXd q;
  MatrixXd advantage;
};

struct PerformanceDifference {
  double lhs;  // J(new) - J(old)
  double rhs;  // E_{d_new,new}[A] - E_{d_old,old}[A]
};

// Weighting of the state sum in expectation-style objectives.
enum class StateWeighting {
  kDiscountedSum,  // d(s) = sum_t gamma^t P(s_t = s), total mass 1/(1-gamma)
  kNormalized,     // (1-gamma) * d(s), total mass 1
};

struct BoundReport {
  double lhs = 0.0;
  double surrogate = 0.0;
  double penalty = 0.0;
  double delta_term = 0.0;
  double epsilon_term = 0.0;
  bool holds = false;

  double slack() const { return lhs - (surrogate - penalty); }
};

MatrixXd policy_transition(const Mdp& mdp, const TabularPolicy& pi);
VectorXd policy_reward(const Mdp& mdp, const TabularPolicy& pi);

VectorXd solve_value(const Mdp& mdp, const TabularPolicy& pi);
QAdvantage q_and_advantage(const Mdp& mdp, const TabularPolicy& pi);
VectorXd discounted_state_dist(const Mdp& mdp, const TabularPolicy& pi,
                               StateWeighting weighting = StateWeighting::kDiscountedSum);
double performance(const Mdp& mdp, const TabularPolicy& pi);

StateActionFn state_action_fn_from_f(const Mdp& mdp, const VectorXd& f);

PerformanceDifference performance_difference(const Mdp& mdp, const TabularPolicy& pi_new,
                                             const TabularPolicy& pi_old,
                                             const StateActionFn& saf);

// L_old(new) = J(old) + sum_s d_old(s) sum_a new(a|s) A_old(s,a).
double surrogate_L(const Mdp& mdp, const TabularPolicy& pi_new, const TabularPolicy& pi_old);

// G_old(new) = sum_s d_old(s) sum_a old(a|s) (new/old - 1) A(s,a).
// Throws DivisionByZero when old(a|s) == 0 while new(a|s) > 0 and A(s,a) != 0.
double surrogate_G(const Mdp& mdp, const TabularPolicy& pi_new, const TabularPolicy& pi_old,
                   const StateActionFn& saf, StateWeighting weighting);

// max_{s,a} |(new/old - 1) A(s,a)|
double max_weighted_ratio_deviation(const TabularPolicy& pi_new, const TabularPolicy& pi_old,
                                    const StateActionFn& saf);
// max_s |sum_a old(a|s) A(s,a)|
double max_policy_mean(const TabularPolicy& pi_old, const StateActionFn& saf);

double max_tv(const TabularPolicy& a, const TabularPolicy& b);
// max_s KL(a(.|s) || b(.|s)); throws DomainError if supp(a) is not inside supp(b).
double max_kl(const TabularPolicy& a, const TabularPolicy& b);

// J(new) >= L_old(new) - 4 eps gamma / (1-gamma)^2 * alpha^2 with alpha = max TV and
// eps = max |A_old|. Reported as lhs = J(new), surrogate = L_old(new),
// delta_term = alpha, epsilon_term = eps.
BoundReport check_tv_bound(const Mdp& mdp, const TabularPolicy& pi_new,
                           const TabularPolicy& pi_old);

// J(new) - J(old) >= G_old(new) - 2 gamma / (1-gamma) * (delta + eps) with
// delta = max_{s,a} |(new/old - 1) A| and eps = max_s |sum_a old A|.
BoundReport check_ratio_deviation_bound(const Mdp& mdp, const TabularPolicy& pi_new,
                           const TabularPolicy& pi_old, const StateActionFn& saf,
                           StateWeighting weighting = StateWeighting::kDiscountedSum);

// Random instances: Dirichlet(1) rows for P and pi, rewards uniform on [-1, 1].
Mdp random_mdp(Rng& rng, int n_states, int n_actions, double gamma);
TabularPolicy random_policy(Rng& rng, int n_states, int n_actions);
TabularPolicy greedy_policy(const MatrixXd& advantage);

// JSON schema: {n_states, n_actions, P[s][a][s'], r[s][a], d0[s], gamma}.
nlohmann::json to_json(const Mdp& mdp);
Mdp mdp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TabularPolicy& pi);
TabularPolicy policy_from_json(const nlohmann::json& j);

}  // namespace trefree::tabular
