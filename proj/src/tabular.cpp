#include "trefree/tabular.hpp"

#include <cmath>
#include <random>
#include <string>

#include "trefree/errors.hpp"

namespace trefree::tabular {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

bool is_distribution(const Eigen::Ref<const VectorXd>& v) {
  if (!v.allFinite() || (v.array() < 0.0).any()) return false;
  return std::abs(v.sum() - 1.0) <= kProbabilityTolerance;
}

void check_compatible(const Mdp& mdp, const TabularPolicy& pi) {
  require(pi.n_states() == mdp.n_states() && pi.n_actions() == mdp.n_actions(),
          "policy shape " + std::to_string(pi.n_states()) + "x" + std::to_string(pi.n_actions()) +
              " does not match MDP " + std::to_string(mdp.n_states()) + "x" +
              std::to_string(mdp.n_actions()));
}

void check_compatible(const Mdp& mdp, const StateActionFn& saf) {
  require(saf.values.rows() == mdp.n_states() && saf.values.cols() == mdp.n_actions(),
          "state-action function shape does not match MDP");
}

// (I - gamma P_pi) factorized once; gamma < 1 keeps it non-singular.
Eigen::PartialPivLU<MatrixXd> resolvent(const Mdp& mdp, const TabularPolicy& pi) {
  const int n = mdp.n_states();
  MatrixXd m = MatrixXd::Identity(n, n) - mdp.gamma() * policy_transition(mdp, pi);
  return Eigen::PartialPivLU<MatrixXd>(m);
}

double weight_scale(const Mdp& mdp, StateWeighting weighting) {
  return weighting == StateWeighting::kNormalized ? 1.0 - mdp.gamma() : 1.0;
}

VectorXd dirichlet_ones(Rng& rng, int n) {
  std::exponential_distribution<double> expo(1.0);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = expo(rng);
  return v / v.sum();
}

}  // namespace

Mdp::Mdp(int n_states, int n_actions, MatrixXd transition, MatrixXd reward,
         VectorXd initial_dist, double gamma)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      initial_dist_(std::move(initial_dist)),
      gamma_(gamma) {
  require(n_states_ >= 1 && n_actions_ >= 1, "MDP needs at least one state and one action");
  require(transition_.rows() == n_states_ * n_actions_ && transition_.cols() == n_states_,
          "transition tensor must be S*A x S");
  require(reward_.rows() == n_states_ && reward_.cols() == n_actions_,
          "reward must be S x A");
  require(initial_dist_.size() == n_states_, "initial distribution must have S entries");
  require(reward_.allFinite(), "rewards must be finite");
  require(std::isfinite(gamma_) && gamma_ >= 0.0 && gamma_ < 1.0, "discount must lie in [0, 1)");
  for (int s = 0; s < n_states_; ++s) {
    for (int a = 0; a < n_actions_; ++a) {
      require(is_distribution(transition_.row(row(s, a)).transpose()),
              "P(.|s=" + std::to_string(s) + ", a=" + std::to_string(a) +
                  ") is not a probability vector");
    }
  }
  require(is_distribution(initial_dist_), "initial distribution is not a probability vector");
}

TabularPolicy::TabularPolicy(MatrixXd probs) : probs_(std::move(probs)) {
  require(probs_.rows() >= 1 && probs_.cols() >= 1, "policy needs at least one state and action");
  for (int s = 0; s < probs_.rows(); ++s) {
    require(is_distribution(probs_.row(s).transpose()),
            "policy row " + std::to_string(s) + " is not a probability vector");
  }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  return TabularPolicy(MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions));
}

MatrixXd policy_transition(const Mdp& mdp, const TabularPolicy& pi) {
  check_compatible(mdp, pi);
  const int n = mdp.n_states();
  MatrixXd p = MatrixXd::Zero(n, n);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) p.row(s) += pi(s, a) * mdp.next_dist(s, a);
  }
  return p;
}

VectorXd policy_reward(const Mdp& mdp, const TabularPolicy& pi) {
  check_compatible(mdp, pi);
  return mdp.reward().cwiseProduct(pi.probs()).rowwise().sum();
}

VectorXd solve_value(const Mdp& mdp, const TabularPolicy& pi) {
  return resolvent(mdp, pi).solve(policy_reward(mdp, pi));
}

QAdvantage q_and_advantage(const Mdp& mdp, const TabularPolicy& pi) {
  const VectorXd v = solve_value(mdp, pi);
  const int n = mdp.n_states();
  const int m = mdp.n_actions();
  QAdvantage out{MatrixXd(n, m), MatrixXd(n, m)};
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < m; ++a) {
      out.q(s, a) = mdp.reward()(s, a) + mdp.gamma() * mdp.next_dist(s, a).dot(v);
      out.advantage(s, a) = out.q(s, a) - v[s];
    }
  }
  return out;
}

VectorXd discounted_state_dist(const Mdp& mdp, const TabularPolicy& pi,
                               StateWeighting weighting) {
  // d^T (I - gamma P_pi) = d0^T
  const int n = mdp.n_states();
  MatrixXd m = MatrixXd::Identity(n, n) - mdp.gamma() * policy_transition(mdp, pi);
  VectorXd d = m.transpose().partialPivLu().solve(mdp.initial_dist());
  return weight_scale(mdp, weighting) * d;
}

double performance(const Mdp& mdp, const TabularPolicy& pi) {
  return mdp.initial_dist().dot(solve_value(mdp, pi));
}

StateActionFn state_action_fn_from_f(const Mdp& mdp, const VectorXd& f) {
  require(f.size() == mdp.n_states(), "f must have one entry per state");
  const int n = mdp.n_states();
  const int m = mdp.n_actions();
  MatrixXd values(n, m);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < m; ++a) {
      values(s, a) = mdp.reward()(s, a) + mdp.gamma() * mdp.next_dist(s, a).dot(f) - f[s];
    }
  }
  return {std::move(values), f};
}

PerformanceDifference performance_difference(const Mdp& mdp, const TabularPolicy& pi_new,
                                             const TabularPolicy& pi_old,
                                             const StateActionFn& saf) {
  check_compatible(mdp, saf);
  const VectorXd d_new = discounted_state_dist(mdp, pi_new);
  const VectorXd d_old = discounted_state_dist(mdp, pi_old);
  const VectorXd mean_new = pi_new.probs().cwiseProduct(saf.values).rowwise().sum();
  const VectorXd mean_old = pi_old.probs().cwiseProduct(saf.values).rowwise().sum();
  return {performance(mdp, pi_new) - performance(mdp, pi_old),
          d_new.dot(mean_new) - d_old.dot(mean_old)};
}

double surrogate_L(const Mdp& mdp, const TabularPolicy& pi_new, const TabularPolicy& pi_old) {
  check_compatible(mdp, pi_new);
  const QAdvantage qa = q_and_advantage(mdp, pi_old);
  const VectorXd d_old = discounted_state_dist(mdp, pi_old);
  const VectorXd expected = pi_new.probs().cwiseProduct(qa.advantage).rowwise().sum();
  return performance(mdp, pi_old) + d_old.dot(expected);
}

double surrogate_G(const Mdp& mdp, const TabularPolicy& pi_new, const TabularPolicy& pi_old,
                   const StateActionFn& saf, StateWeighting weighting) {
  check_compatible(mdp, pi_new);
  check_compatible(mdp, saf);
  const VectorXd d_old = discounted_state_dist(mdp, pi_old, weighting);
  double total = 0.0;
  for (int s = 0; s < mdp.n_states(); ++s) {
    double inner = 0.0;
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double old_p = pi_old(s, a);
      const double adv = saf.values(s, a);
      if (old_p == 0.0) {
        if (pi_new(s, a) > 0.0 && adv != 0.0) throw DivisionByZero(s, a);
        continue;
      }
      inner += old_p * (pi_new(s, a) / old_p - 1.0) * adv;
    }
    total += d_old[s] * inner;
  }
  return total;
}

double max_weighted_ratio_deviation(const TabularPolicy& pi_new, const TabularPolicy& pi_old,
                                    const StateActionFn& saf) {
  double worst = 0.0;
  for (int s = 0; s < pi_old.n_states(); ++s) {
    for (int a = 0; a < pi_old.n_actions(); ++a) {
      const double old_p = pi_old(s, a);
      const double adv = saf.values(s, a);
      if (old_p == 0.0) {
        if (pi_new(s, a) > 0.0 && adv != 0.0) throw DivisionByZero(s, a);
        continue;
      }
      worst = std::max(worst, std::abs((pi_new(s, a) / old_p - 1.0) * adv));
    }
  }
  return worst;
}

double max_policy_mean(const TabularPolicy& pi_old, const StateActionFn& saf) {
  return pi_old.probs().cwiseProduct(saf.values).rowwise().sum().cwiseAbs().maxCoeff();
}

double max_tv(const TabularPolicy& a, const TabularPolicy& b) {
  require(a.n_states() == b.n_states() && a.n_actions() == b.n_actions(),
          "policies have different shapes");
  return 0.5 * (a.probs() - b.probs()).cwiseAbs().rowwise().sum().maxCoeff();
}

double max_kl(const TabularPolicy& a, const TabularPolicy& b) {
  require(a.n_states() == b.n_states() && a.n_actions() == b.n_actions(),
          "policies have different shapes");
  double worst = 0.0;
  for (int s = 0; s < a.n_states(); ++s) {
    double kl = 0.0;
    for (int k = 0; k < a.n_actions(); ++k) {
      const double pa = a(s, k);
      if (pa == 0.0) continue;
      const double pb = b(s, k);
      if (pb == 0.0) {
        throw DomainError("KL support violation at (s=" + std::to_string(s) +
                          ", a=" + std::to_string(k) + ")");
      }
      kl += pa * std::log(pa / pb);
    }
    worst = std::max(worst, kl);
  }
  return worst;
}

BoundReport check_tv_bound(const Mdp& mdp, const TabularPolicy& pi_new,
                           const TabularPolicy& pi_old) {
  const double gamma = mdp.gamma();
  const QAdvantage qa = q_and_advantage(mdp, pi_old);
  BoundReport r;
  r.delta_term = max_tv(pi_new, pi_old);
  r.epsilon_term = qa.advantage.cwiseAbs().maxCoeff();
  r.lhs = performance(mdp, pi_new);
  r.surrogate = surrogate_L(mdp, pi_new, pi_old);
  r.penalty = 4.0 * r.epsilon_term * gamma / ((1.0 - gamma) * (1.0 - gamma)) * r.delta_term *
              r.delta_term;
  r.holds = r.lhs >= r.surrogate - r.penalty - kBoundTolerance;
  return r;
}

BoundReport check_ratio_deviation_bound(const Mdp& mdp, const TabularPolicy& pi_new,
                                        const TabularPolicy& pi_old, const StateActionFn& saf,
                                        StateWeighting weighting) {
  const double gamma = mdp.gamma();
  BoundReport r;
  r.delta_term = max_weighted_ratio_deviation(pi_new, pi_old, saf);
  r.epsilon_term = max_policy_mean(pi_old, saf);
  r.lhs = performance(mdp, pi_new) - performance(mdp, pi_old);
  r.surrogate = surrogate_G(mdp, pi_new, pi_old, saf, weighting);
  r.penalty = 2.0 * gamma / (1.0 - gamma) * (r.delta_term + r.epsilon_term);
  r.holds = r.lhs >= r.surrogate - r.penalty - kBoundTolerance;
  return r;
}

Mdp random_mdp(Rng& rng, int n_states, int n_actions, double gamma) {
  require(n_states >= 1 && n_actions >= 1, "random MDP needs positive sizes");
  MatrixXd p(n_states * n_actions, n_states);
  for (int row = 0; row < p.rows(); ++row) p.row(row) = dirichlet_ones(rng, n_states).transpose();
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  MatrixXd r(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) r(s, a) = unif(rng);
  VectorXd d0 = dirichlet_ones(rng, n_states);
  return Mdp(n_states, n_actions, std::move(p), std::move(r), std::move(d0), gamma);
}

TabularPolicy random_policy(Rng& rng, int n_states, int n_actions) {
  MatrixXd probs(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) probs.row(s) = dirichlet_ones(rng, n_actions).transpose();
  return TabularPolicy(std::move(probs));
}

TabularPolicy greedy_policy(const MatrixXd& advantage) {
  MatrixXd probs = MatrixXd::Zero(advantage.rows(), advantage.cols());
  for (int s = 0; s < advantage.rows(); ++s) {
    Eigen::Index best = 0;
    advantage.row(s).maxCoeff(&best);
    probs(s, best) = 1.0;
  }
  return TabularPolicy(std::move(probs));
}

nlohmann::json to_json(const Mdp& mdp) {
  nlohmann::json p = nlohmann::json::array();
  nlohmann::json r = nlohmann::json::array();
  for (int s = 0; s < mdp.n_states(); ++s) {
    nlohmann::json per_action = nlohmann::json::array();
    nlohmann::json rewards = nlohmann::json::array();
    for (int a = 0; a < mdp.n_actions(); ++a) {
      nlohmann::json next = nlohmann::json::array();
      for (int t = 0; t < mdp.n_states(); ++t) next.push_back(mdp.p(s, a, t));
      per_action.push_back(std::move(next));
      rewards.push_back(mdp.reward()(s, a));
    }
    p.push_back(std::move(per_action));
    r.push_back(std::move(rewards));
  }
  nlohmann::json d0 = nlohmann::json::array();
  for (int s = 0; s < mdp.n_states(); ++s) d0.push_back(mdp.initial_dist()[s]);
  return {{"n_states", mdp.n_states()}, {"n_actions", mdp.n_actions()}, {"P", std::move(p)},
          {"r", std::move(r)},          {"d0", std::move(d0)},           {"gamma", mdp.gamma()}};
}

Mdp mdp_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n_states").get<int>();
    const int m = j.at("n_actions").get<int>();
    require(n >= 1 && m >= 1, "n_states and n_actions must be positive");
    const auto& p = j.at("P");
    const auto& r = j.at("r");
    const auto& d0 = j.at("d0");
    require(p.size() == static_cast<std::size_t>(n) && r.size() == static_cast<std::size_t>(n) &&
                d0.size() == static_cast<std::size_t>(n),
            "P, r and d0 must have n_states entries");
    MatrixXd transition(n * m, n);
    MatrixXd reward(n, m);
    VectorXd initial(n);
    for (int s = 0; s < n; ++s) {
      require(p[s].size() == static_cast<std::size_t>(m) && r[s].size() == static_cast<std::size_t>(m),
              "P[s] and r[s] must have n_actions entries");
      for (int a = 0; a < m; ++a) {
        require(p[s][a].size() == static_cast<std::size_t>(n), "P[s][a] must have n_states entries");
        for (int t = 0; t < n; ++t) transition(s * m + a, t) = p[s][a][t].get<double>();
        reward(s, a) = r[s][a].get<double>();
      }
      initial[s] = d0[s].get<double>();
    }
    return Mdp(n, m, std::move(transition), std::move(reward), std::move(initial),
               j.at("gamma").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed MDP JSON: ") + e.what());
  }
}

nlohmann::json to_json(const TabularPolicy& pi) {
  nlohmann::json rows = nlohmann::json::array();
  for (int s = 0; s < pi.n_states(); ++s) {
    nlohmann::json row = nlohmann::json::array();
    for (int a = 0; a < pi.n_actions(); ++a) row.push_back(pi(s, a));
    rows.push_back(std::move(row));
  }
  return rows;
}

TabularPolicy policy_from_json(const nlohmann::json& j) {
  try {
    require(j.is_array() && !j.empty(), "policy JSON must be a non-empty array of rows");
    const auto n = static_cast<int>(j.size());
    const auto m = static_cast<int>(j[0].size());
    MatrixXd probs(n, m);
    for (int s = 0; s < n; ++s) {
      require(j[s].size() == static_cast<std::size_t>(m), "ragged policy rows");
      for (int a = 0; a < m; ++a) probs(s, a) = j[s][a].get<double>();
    }
    return TabularPolicy(std::move(probs));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed policy JSON: ") + e.what());
  }
}

}  // namespace trefree::tabular
