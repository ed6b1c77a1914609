#include "trefree/bound_sweep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "trefree/errors.hpp"

namespace trefree::tabular {

SweepInstance make_instance(const SweepConfig& config, int index) {
  Rng rng = make_rng(config.seed, streams::kInstanceBase + static_cast<std::uint64_t>(index));
  std::uniform_int_distribution<int> states(1, config.max_states);
  std::uniform_int_distribution<int> actions(1, config.max_actions);
  const int n = states(rng);
  const int m = actions(rng);

  Mdp mdp = random_mdp(rng, n, m, config.gamma);
  TabularPolicy pi_old = random_policy(rng, n, m);

  NewPolicyKind kind = NewPolicyKind::kRandom;
  if (config.identical_policies) {
    kind = NewPolicyKind::kIdentical;
  } else if (index % 10 == 9) {
    kind = NewPolicyKind::kGreedy;
  }
  std::optional<TabularPolicy> pi_new;
  switch (kind) {
    case NewPolicyKind::kIdentical:
      pi_new = pi_old;
      break;
    case NewPolicyKind::kGreedy:
      pi_new = greedy_policy(q_and_advantage(mdp, pi_old).advantage);
      break;
    case NewPolicyKind::kRandom:
      pi_new = random_policy(rng, n, m);
      break;
  }

  const bool value_generator = index % 2 == 0;
  VectorXd f(n);
  if (value_generator) {
    f = solve_value(mdp, pi_old);
  } else {
    std::uniform_real_distribution<double> unif(-5.0, 5.0);
    for (int s = 0; s < n; ++s) f[s] = unif(rng);
  }
  StateActionFn saf = state_action_fn_from_f(mdp, f);
  return SweepInstance{index,           std::move(mdp), std::move(pi_old), std::move(*pi_new),
                       std::move(saf), kind,           value_generator};
}

InstanceOutcome evaluate_instance(const SweepInstance& instance, StateWeighting weighting) {
  InstanceOutcome out;
  out.index = instance.index;
  out.value_generator = instance.value_generator;
  out.tv_bound = check_tv_bound(instance.mdp, instance.pi_new, instance.pi_old);
  out.ratio_bound = check_ratio_deviation_bound(instance.mdp, instance.pi_new, instance.pi_old,
                                                instance.saf, weighting);
  out.identity =
      performance_difference(instance.mdp, instance.pi_new, instance.pi_old, instance.saf);
  out.identity_holds = std::abs(out.identity.lhs - out.identity.rhs) <= kBoundTolerance;
  return out;
}

SweepSummary run_bound_sweep(const SweepConfig& config, Execution execution) {
  if (config.count < 1) throw InvalidArgument("sweep count must be >= 1");
  if (config.max_states < 1 || config.max_actions < 1) {
    throw InvalidArgument("sweep sizes must be >= 1");
  }
  std::vector<InstanceOutcome> outcomes(static_cast<std::size_t>(config.count));
  if (execution == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < config.count; ++i) {
      outcomes[static_cast<std::size_t>(i)] =
          evaluate_instance(make_instance(config, i), config.weighting);
    }
  } else {
    for (int i = 0; i < config.count; ++i) {
      outcomes[static_cast<std::size_t>(i)] =
          evaluate_instance(make_instance(config, i), config.weighting);
    }
  }

  SweepSummary summary;
  summary.instances = config.count;
  summary.min_tv_slack = std::numeric_limits<double>::infinity();
  summary.min_ratio_slack = std::numeric_limits<double>::infinity();
  for (const auto& o : outcomes) {
    summary.tv_violations += o.tv_bound.holds ? 0 : 1;
    summary.ratio_violations += o.ratio_bound.holds ? 0 : 1;
    summary.identity_violations += o.identity_holds ? 0 : 1;
    summary.value_generator_instances += o.value_generator ? 1 : 0;
    summary.min_tv_slack = std::min(summary.min_tv_slack, o.tv_bound.slack());
    summary.min_ratio_slack = std::min(summary.min_ratio_slack, o.ratio_bound.slack());
    summary.max_identity_residual =
        std::max(summary.max_identity_residual, std::abs(o.identity.lhs - o.identity.rhs));
  }
  summary.outcomes = std::move(outcomes);
  return summary;
}

}  // namespace trefree::tabular
