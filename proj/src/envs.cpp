#include "trefree/envs.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "trefree/errors.hpp"

namespace trefree::envs {

namespace {

EnvSpec box_spec(int obs_dim, int act_dim, int horizon, double low, double high) {
  return {obs_dim, act_dim, horizon, VectorXd::Constant(act_dim, low),
          VectorXd::Constant(act_dim, high)};
}

double angle_normalize(double x) {
  const double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(x + std::numbers::pi, two_pi);
  if (y < 0.0) y += two_pi;
  return y - std::numbers::pi;
}

void check_finite(const StepResult& r, std::string_view env) {
  if (!r.next_obs.allFinite() || !std::isfinite(r.reward)) {
    throw NumericError(std::string(env) + ": non-finite observation or reward");
  }
}

}  // namespace

Env::Env(EnvSpec spec, std::uint64_t seed) : rng_(seed), spec_(std::move(spec)) {
  if (spec_.obs_dim < 1 || spec_.act_dim < 1 || spec_.max_episode_steps < 1) {
    throw InvalidArgument("environment dimensions must be >= 1");
  }
  if (spec_.action_low.size() != spec_.act_dim || spec_.action_high.size() != spec_.act_dim ||
      (spec_.action_low.array() >= spec_.action_high.array()).any()) {
    throw InvalidArgument("action bounds must satisfy low < high elementwise");
  }
}

VectorXd Env::reset() {
  elapsed_ = 0;
  needs_reset_ = false;
  return reset_state();
}

StepResult Env::step(std::span<const double> action) {
  if (needs_reset_) throw std::logic_error("step() called before reset() or after episode end");
  if (static_cast<int>(action.size()) != spec_.act_dim) {
    throw InvalidArgument("action has " + std::to_string(action.size()) + " entries, expected " +
                          std::to_string(spec_.act_dim));
  }
  VectorXd a(spec_.act_dim);
  bool clipped = false;
  for (int i = 0; i < spec_.act_dim; ++i) {
    const double raw = action[static_cast<std::size_t>(i)];
    if (std::isnan(raw)) throw InvalidArgument("action contains NaN");
    a[i] = std::clamp(raw, spec_.action_low[i], spec_.action_high[i]);
    clipped = clipped || a[i] != raw;
  }
  if (clipped) ++clipped_actions_;
  StepResult r = advance(a);
  check_finite(r, name());
  ++elapsed_;
  if (!r.done && elapsed_ >= spec_.max_episode_steps) r.truncated = true;
  if (r.done || r.truncated) needs_reset_ = true;
  return r;
}

PointMassEnv::PointMassEnv(std::uint64_t seed) : Env(box_spec(4, 2, kHorizon, -1.0, 1.0), seed) {}

void PointMassEnv::set_state(const Eigen::Vector4d& state) { state_ = state; }

VectorXd PointMassEnv::reset_state() {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const double x = unif(rng_);
  const double y = unif(rng_);
  state_ << x, y, 0.0, 0.0;
  return state_;
}

StepResult PointMassEnv::advance(const VectorXd& action) {
  // Reward is charged on the pre-step state; the goal is the origin.
  const double dist = state_.head<2>().norm();
  const double reward = -dist - 0.01 * action.squaredNorm();
  state_.head<2>() += 0.05 * state_.tail<2>();
  state_.tail<2>() = 0.95 * state_.tail<2>() + 0.1 * action;
  return {state_, reward, false, false};
}

PendulumEnv::PendulumEnv(std::uint64_t seed)
    : Env(box_spec(3, 1, kHorizon, -kMaxTorque, kMaxTorque), seed) {}

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
}

VectorXd PendulumEnv::observe() const {
  VectorXd o(3);
  o << std::cos(theta_), std::sin(theta_), theta_dot_;
  return o;
}

VectorXd PendulumEnv::reset_state() {
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  theta_ = angle(rng_);
  theta_dot_ = speed(rng_);
  return observe();
}

StepResult PendulumEnv::advance(const VectorXd& action) {
  const double u = action[0];
  const double th = angle_normalize(theta_);
  const double reward = -(th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);
  double new_dot = theta_dot_ + (3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                                 3.0 / (kMass * kLength * kLength) * u) *
                                    kDt;
  new_dot = std::clamp(new_dot, -kMaxSpeed, kMaxSpeed);
  theta_ += new_dot * kDt;
  theta_dot_ = new_dot;
  return {observe(), reward, false, false};
}

ChainEnv::ChainEnv(int n, std::uint64_t seed, int horizon)
    : Env(box_spec(std::max(n, 1), 1, horizon, -1.0, 1.0), seed), n_(n) {
  if (n < 2) throw InvalidArgument("chain needs at least 2 states");
}

void ChainEnv::set_position(int s) {
  if (s < 0 || s >= n_) throw InvalidArgument("chain position out of range");
  position_ = s;
}

VectorXd ChainEnv::one_hot(int s) const {
  VectorXd o = VectorXd::Zero(n_);
  o[s] = 1.0;
  return o;
}

VectorXd ChainEnv::reset_state() {
  std::uniform_int_distribution<int> start(0, n_ - 1);
  position_ = start(rng_);
  return one_hot(position_);
}

StepResult ChainEnv::advance(const VectorXd& action) {
  const double reward = position_ == n_ - 1 ? 1.0 : 0.0;
  position_ = action_index(action[0]) == 1 ? std::min(position_ + 1, n_ - 1)
                                           : std::max(position_ - 1, 0);
  return {one_hot(position_), reward, false, false};
}

tabular::Mdp ChainEnv::export_mdp(double gamma) const {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2 * n_, n_);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n_, 2);
  for (int s = 0; s < n_; ++s) {
    p(s * 2 + 0, std::max(s - 1, 0)) = 1.0;
    p(s * 2 + 1, std::min(s + 1, n_ - 1)) = 1.0;
  }
  r.row(n_ - 1).setOnes();
  return tabular::Mdp(n_, 2, std::move(p), std::move(r), VectorXd::Constant(n_, 1.0 / n_), gamma);
}

bool is_known_env(std::string_view name) {
  try {
    make_env(name, 0);
    return true;
  } catch (const InvalidArgument&) {
    return false;
  }
}

std::unique_ptr<Env> make_env(std::string_view name, std::uint64_t seed) {
  if (name == "pointmass") return std::make_unique<PointMassEnv>(seed);
  if (name == "pendulum") return std::make_unique<PendulumEnv>(seed);
  if (name == "chain") return std::make_unique<ChainEnv>(5, seed);
  if (name.starts_with("chain:")) {
    const auto digits = name.substr(6);
    int n = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
      throw InvalidArgument("bad chain length in '" + std::string(name) + "'");
    }
    return std::make_unique<ChainEnv>(n, seed);
  }
  throw InvalidArgument("unknown environment '" + std::string(name) +
                        "' (expected pointmass, pendulum, chain or chain:<n>)");
}

}  // namespace trefree::envs
