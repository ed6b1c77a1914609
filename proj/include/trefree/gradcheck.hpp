#pragma once

// Central finite-difference verification of the analytic loss gradients.

#include <cstdint>
#include <string>
#include <vector>

#include "trefree/objectives.hpp"

namespace trefree::objectives {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradRelTolerance = 1e-5;
// Denominator floor of the elementwise relative error |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradRelFloor = 1e-4;

struct GradCheckResult {
  std::string family;
  int elements_checked = 0;
  int elements_skipped = 0;  // a sample changed clip branch inside [theta - h, theta + h]
  int flat_samples = 0;
  int flat_nonzero = 0;      // flat samples whose own gradient was not exactly zero
  double max_rel_error = 0.0;
  bool passed = false;
};

GradCheckResult check_gradient(const nn::PolicyNet& net, const Minibatch& batch,
                               const LossSpec& spec, const std::string& family);

// Random minibatch around `net`: actions drawn from the policy, old log-probs
// offset by N(0, log_ratio_spread^2), advantages/returns N(0, 1), old
// distributions jittered away from the current ones.
Minibatch random_minibatch(const nn::PolicyNet& net, Rng& rng, int size, double log_ratio_spread);

struct LossFamily {
  std::string name;
  LossSpec spec;
};

// pg, ratio-cons, ppo, trefree, value, entropy, kl
std::vector<LossFamily> gradient_families();

struct GradSuiteResult {
  std::vector<GradCheckResult> results;  // one per (net, family)
  bool passed = false;
};

GradSuiteResult run_gradient_suite(std::uint64_t seed, int nets = 10, int hidden = 16,
                                   int batch_size = 16);

}  // namespace trefree::objectives
