#include "trefree/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace trefree::objectives {

namespace {

std::vector<bool> flat_pattern(const nn::PolicyNet& net, const Minibatch& batch,
                               const LossSpec& spec) {
  std::vector<bool> out(static_cast<std::size_t>(batch.size()), false);
  if (spec.policy == PolicyTerm::kNone) return out;
  const VectorXd lr = log_ratios(net, batch);
  for (int i = 0; i < batch.size(); ++i) {
    out[static_cast<std::size_t>(i)] = policy_term(spec.policy, lr[i], batch.advantages[i], spec).flat;
  }
  return out;
}

Minibatch single_sample(const Minibatch& b, int i) {
  Minibatch s;
  s.obs = b.obs.row(i);
  s.actions = b.actions.row(i);
  s.old_log_probs = b.old_log_probs.segment(i, 1);
  s.advantages = b.advantages.segment(i, 1);
  s.returns = b.returns.segment(i, 1);
  if (b.has_old_dists()) {
    s.old_means = b.old_means.row(i);
    s.old_stds = b.old_stds.row(i);
  }
  return s;
}

}  // namespace

GradCheckResult check_gradient(const nn::PolicyNet& net, const Minibatch& batch,
                               const LossSpec& spec, const std::string& family) {
  GradCheckResult res;
  res.family = family;
  const LossEval analytic = evaluate_loss(net, batch, spec, Execution::kSerial);
  const std::vector<bool> base_pattern = flat_pattern(net, batch, spec);

  // Flat samples must contribute an exactly-zero gradient of their own.
  const bool policy_only =
      spec.value_coef == 0.0 && spec.entropy_coef == 0.0 && spec.kl_coef == 0.0;
  for (int i = 0; i < batch.size(); ++i) {
    if (!base_pattern[static_cast<std::size_t>(i)]) continue;
    ++res.flat_samples;
    if (policy_only) {
      const LossEval one = evaluate_loss(net, single_sample(batch, i), spec, Execution::kSerial);
      if (one.grad.values().cwiseAbs().maxCoeff() != 0.0) ++res.flat_nonzero;
    }
  }

  nn::PolicyNet probe = net;
  const auto n = static_cast<Eigen::Index>(net.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    const double orig = probe.values()[k];
    probe.values()[k] = orig + kFdStep;
    const double up = evaluate_loss(probe, batch, spec, Execution::kSerial).loss;
    const bool up_same = flat_pattern(probe, batch, spec) == base_pattern;
    probe.values()[k] = orig - kFdStep;
    const double down = evaluate_loss(probe, batch, spec, Execution::kSerial).loss;
    const bool down_same = flat_pattern(probe, batch, spec) == base_pattern;
    probe.values()[k] = orig;
    if (!up_same || !down_same) {
      ++res.elements_skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * kFdStep);
    const double a = analytic.grad.values()[k];
    const double denom = std::max({std::abs(a), std::abs(numeric), kGradRelFloor});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
    ++res.elements_checked;
  }
  res.passed = res.max_rel_error <= kGradRelTolerance && res.flat_nonzero == 0;
  return res;
}

Minibatch random_minibatch(const nn::PolicyNet& net, Rng& rng, int size, double log_ratio_spread) {
  const nn::NetShape shape = net.shape();
  std::normal_distribution<double> normal(0.0, 1.0);
  Minibatch b;
  b.obs.resize(size, shape.obs_dim);
  b.actions.resize(size, shape.act_dim);
  b.old_log_probs.resize(size);
  b.advantages.resize(size);
  b.returns.resize(size);
  b.old_means.resize(size, shape.act_dim);
  b.old_stds.resize(size, shape.act_dim);
  for (int i = 0; i < size; ++i) {
    std::vector<double> obs(static_cast<std::size_t>(shape.obs_dim));
    for (auto& x : obs) x = normal(rng);
    for (int j = 0; j < shape.obs_dim; ++j) b.obs(i, j) = obs[static_cast<std::size_t>(j)];
    const nn::GaussianDist dist = nn::forward_policy(net, obs);
    const VectorXd action = nn::sample(dist, rng);
    b.actions.row(i) = action.transpose();
    b.old_log_probs[i] = nn::log_prob(dist, std::span<const double>(action.data(), action.size())) +
                         log_ratio_spread * normal(rng);
    b.advantages[i] = normal(rng);
    b.returns[i] = normal(rng);
    for (int j = 0; j < shape.act_dim; ++j) {
      b.old_means(i, j) = dist.mean[j] + 0.1 * normal(rng);
      b.old_stds(i, j) = dist.std[j] * std::exp(0.1 * normal(rng));
    }
  }
  return b;
}

std::vector<LossFamily> gradient_families() {
  std::vector<LossFamily> out;
  LossSpec s;
  s.policy = PolicyTerm::kPg;
  out.push_back({"pg", s});
  s.policy = PolicyTerm::kRatioClip;
  s.lambda = 0.2;
  out.push_back({"ratio-cons", s});
  s.policy = PolicyTerm::kPpoClip;
  s.eps_clip = 0.2;
  out.push_back({"ppo", s});
  s.policy = PolicyTerm::kTrefree;
  s.delta = 0.01;
  out.push_back({"trefree", s});
  LossSpec v;
  v.value_coef = 1.0;
  out.push_back({"value", v});
  LossSpec e;
  e.entropy_coef = 1.0;
  out.push_back({"entropy", e});
  LossSpec k;
  k.kl_coef = 1.0;
  out.push_back({"kl", k});
  return out;
}

GradSuiteResult run_gradient_suite(std::uint64_t seed, int nets, int hidden, int batch_size) {
  GradSuiteResult suite;
  suite.passed = true;
  const auto families = gradient_families();
  for (int n = 0; n < nets; ++n) {
    Rng rng = make_rng(seed, 500 + static_cast<std::uint64_t>(n));
    std::uniform_int_distribution<int> obs_dim(1, 4);
    std::uniform_int_distribution<int> act_dim(1, 3);
    nn::PolicyNet net = nn::PolicyNet::initialized({obs_dim(rng), act_dim(rng), hidden}, rng);
    // Push the heads away from the near-zero initialization so every path carries gradient.
    std::normal_distribution<double> normal(0.0, 0.3);
    for (Eigen::Index k = 0; k < net.values().size(); ++k) net.values()[k] += normal(rng);
    net.clamp_log_std();
    const Minibatch batch = random_minibatch(net, rng, batch_size, 0.3);
    for (const auto& f : families) {
      GradCheckResult r = check_gradient(net, batch, f.spec, f.name);
      suite.passed = suite.passed && r.passed;
      suite.results.push_back(std::move(r));
    }
  }
  return suite;
}

}  // namespace trefree::objectives
