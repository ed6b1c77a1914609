#pragma once

// Randomized verification of the performance-difference identity and the two
// monotonic-improvement lower bounds over many small random MDPs.
//
// Instance i is generated from split_seed(seed, kInstanceBase + i) alone, so the
// OpenMP sweep and the serial reference produce the same instances regardless of
// thread count or scheduling.

#include <cstdint>
#include <vector>

#include "trefree/tabular.hpp"

namespace trefree::tabular {

enum class Execution { kSerial, kParallel };

enum class NewPolicyKind {
  kRandom,     // independent Dirichlet(1) policy
  kGreedy,     // greedy with respect to the old policy's advantage
  kIdentical,  // new == old
};

struct SweepConfig {
  int count = 1000;
  std::uint64_t seed = 0;
  double gamma = 0.9;
  int max_states = 5;
  int max_actions = 3;
  bool identical_policies = false;
  StateWeighting weighting = StateWeighting::kDiscountedSum;
};

struct SweepInstance {
  int index = 0;
  Mdp mdp;
  TabularPolicy pi_old;
  TabularPolicy pi_new;
  StateActionFn saf;
  NewPolicyKind new_kind = NewPolicyKind::kRandom;
  bool value_generator = false;  // f == V_old
};

struct InstanceOutcome {
  int index = 0;
  BoundReport tv_bound;
  BoundReport ratio_bound;
  PerformanceDifference identity{};
  bool identity_holds = false;
  bool value_generator = false;
};

struct SweepSummary {
  int instances = 0;
  int tv_violations = 0;
  int ratio_violations = 0;
  int identity_violations = 0;
  int value_generator_instances = 0;
  double min_tv_slack = 0.0;
  double min_ratio_slack = 0.0;
  double max_identity_residual = 0.0;
  std::vector<InstanceOutcome> outcomes;

  bool passed() const {
    return tv_violations == 0 && ratio_violations == 0 && identity_violations == 0;
  }
};

// Even indices use f = V_old (so A is the advantage); odd indices use a random f
// drawn uniformly from [-5, 5]^S. Every tenth instance uses the greedy new policy.
SweepInstance make_instance(const SweepConfig& config, int index);
InstanceOutcome evaluate_instance(const SweepInstance& instance, StateWeighting weighting);

SweepSummary run_bound_sweep(const SweepConfig& config,
                             Execution execution = Execution::kParallel);

}  // namespace trefree::tabular
