#pragma once

// Episodic environments with a uniform interface.
//
// pointmass: 2-D point mass pushed towards the origin.
// pendulum:  torque-limited swing-up (theta = 0 is upright).
// chain:     n-state left/right chain with one-hot observations; exports its
//            exact MDP so a learned policy can be evaluated in closed form.
//
// Actions outside the bounds are clipped and counted. Reaching the horizon
// reports truncated = true, never done.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "trefree/random.hpp"
#include "trefree/tabular.hpp"

namespace trefree::envs {

using Eigen::VectorXd;

struct EnvSpec {
  int obs_dim = 1;
  int act_dim = 1;
  int max_episode_steps = 1;
  VectorXd action_low;
  VectorXd action_high;
};

struct StepResult {
  VectorXd next_obs;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
};

class Env {
 public:
  virtual ~Env() = default;

  const EnvSpec& spec() const { return spec_; }
  virtual std::string_view name() const = 0;

  VectorXd reset();
  StepResult step(std::span<const double> action);

  long long clipped_actions() const { return clipped_actions_; }
  int elapsed_steps() const { return elapsed_; }

 protected:
  explicit Env(EnvSpec spec, std::uint64_t seed);

  virtual VectorXd reset_state() = 0;
  // Action is already clipped. Returns (next_obs, reward, done).
  virtual StepResult advance(const VectorXd& action) = 0;

  Rng rng_;

 private:
  EnvSpec spec_;
  long long clipped_actions_ = 0;
  int elapsed_ = 0;
  bool needs_reset_ = true;
};

class PointMassEnv : public Env {
 public:
  static constexpr int kHorizon = 200;

  explicit PointMassEnv(std::uint64_t seed);
  std::string_view name() const override { return "pointmass"; }

  // Position (x, y) and velocity (vx, vy).
  void set_state(const Eigen::Vector4d& state);
  const Eigen::Vector4d& state() const { return state_; }

 protected:
  VectorXd reset_state() override;
  StepResult advance(const VectorXd& action) override;

 private:
  Eigen::Vector4d state_ = Eigen::Vector4d::Zero();
};

class PendulumEnv : public Env {
 public:
  static constexpr int kHorizon = 200;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;

  explicit PendulumEnv(std::uint64_t seed);
  std::string_view name() const override { return "pendulum"; }

  void set_state(double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }

 protected:
  VectorXd reset_state() override;
  StepResult advance(const VectorXd& action) override;

 private:
  VectorXd observe() const;

  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

// States 0..n-1, start uniform; action a > 0 moves right, otherwise left
// (saturating at the ends); reward 1 whenever the agent is in state n-1.
class ChainEnv : public Env {
 public:
  static constexpr int kDefaultHorizon = 100;

  ChainEnv(int n, std::uint64_t seed, int horizon = kDefaultHorizon);
  std::string_view name() const override { return "chain"; }

  int n_states() const { return n_; }
  int position() const { return position_; }
  void set_position(int s);

  static int action_index(double action) { return action > 0.0 ? 1 : 0; }  // 0 left, 1 right
  VectorXd one_hot(int s) const;

  // Exact MDP of the chain (actions: 0 = left, 1 = right) with the given discount.
  tabular::Mdp export_mdp(double gamma) const;

 protected:
  VectorXd reset_state() override;
  StepResult advance(const VectorXd& action) override;

 private:
  int n_;
  int position_ = 0;
};

// "pointmass", "pendulum", "chain" (5 states) or "chain:<n>".
std::unique_ptr<Env> make_env(std::string_view name, std::uint64_t seed);
bool is_known_env(std::string_view name);

}  // namespace trefree::envs
