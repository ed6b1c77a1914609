#include "trefree/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "trefree/errors.hpp"

namespace trefree::objectives {

namespace {

struct Partial {
  double policy_sum = 0.0;
  double value_sum = 0.0;
  double entropy_sum = 0.0;
  double kl_sum = 0.0;
  double max_term = -std::numeric_limits<double>::infinity();
  int flat = 0;
  int above_delta = 0;
  nn::GradBuffer grad;

  explicit Partial(nn::NetShape shape) : grad(shape) {}
};

std::span<const double> row_span(const MatrixXd& m, int i, std::vector<double>& scratch) {
  scratch.resize(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) scratch[static_cast<std::size_t>(j)] = m(i, j);
  return scratch;
}

nn::GaussianDist old_dist(const Minibatch& b, int i) {
  return {b.old_means.row(i).transpose(), b.old_stds.row(i).transpose()};
}

double checked_log_ratio(double log_prob, double old_log_prob, int sample) {
  const double lr = log_prob - old_log_prob;
  if (!std::isfinite(lr) || lr > kMaxLogRatio) {
    throw NumericError("log-ratio " + std::to_string(lr) + " at sample " + std::to_string(sample) +
                       " exceeds " + std::to_string(kMaxLogRatio));
  }
  return lr;
}

// Adds sample i's loss contribution, scaled by 1/M, into p.
void accumulate_sample(const nn::PolicyNet& net, const Minibatch& b, int i, const LossSpec& spec,
                       double inv_m, Partial& p) {
  std::vector<double> obs_buf;
  std::vector<double> act_buf;
  const nn::ForwardCache cache = nn::forward(net, row_span(b.obs, i, obs_buf));

  nn::HeadGrad head;
  const bool needs_dist =
      spec.policy != PolicyTerm::kNone || spec.entropy_coef != 0.0 || spec.kl_coef != 0.0;
  if (needs_dist) {
    const nn::GaussianDist dist = cache.dist();
    head.d_mean = VectorXd::Zero(dist.dim());
    head.d_log_std = VectorXd::Zero(dist.dim());

    if (spec.policy != PolicyTerm::kNone) {
      const auto action = row_span(b.actions, i, act_buf);
      const double lr = checked_log_ratio(nn::log_prob(dist, action), b.old_log_probs[i], i);
      const TermValue t = policy_term(spec.policy, lr, b.advantages[i], spec);
      p.policy_sum += t.objective;
      p.max_term = std::max(p.max_term, t.objective);
      if (spec.policy == PolicyTerm::kTrefree && t.objective > spec.delta) ++p.above_delta;
      if (t.flat) {
        ++p.flat;
      } else if (t.d_log_prob != 0.0) {
        const nn::DistGrad g = nn::log_prob_grad(dist, action);
        head.d_mean -= t.d_log_prob * g.d_mean;
        head.d_log_std -= t.d_log_prob * g.d_log_std;
      }
    }
    if (spec.entropy_coef != 0.0) {
      p.entropy_sum += nn::entropy(dist);
      head.d_log_std -= spec.entropy_coef * nn::entropy_grad(dist).d_log_std;
    }
    if (spec.kl_coef != 0.0) {
      const nn::GaussianDist old = old_dist(b, i);
      p.kl_sum += nn::kl(old, dist);
      const nn::DistGrad g = nn::kl_grad_second(old, dist);
      head.d_mean += spec.kl_coef * g.d_mean;
      head.d_log_std += spec.kl_coef * g.d_log_std;
    }
  }
  if (spec.value_coef != 0.0) {
    const double err = cache.value - b.returns[i];
    p.value_sum += err * err;
    head.d_value = spec.value_coef * 2.0 * err;
  }
  nn::backward(net, cache, head, p.grad, inv_m);
}

void merge(Partial& into, const Partial& from) {
  into.policy_sum += from.policy_sum;
  into.value_sum += from.value_sum;
  into.entropy_sum += from.entropy_sum;
  into.kl_sum += from.kl_sum;
  into.max_term = std::max(into.max_term, from.max_term);
  into.flat += from.flat;
  into.above_delta += from.above_delta;
  into.grad.values() += from.grad.values();
}

}  // namespace

void Minibatch::validate() const {
  const auto m = obs.rows();
  if (m < 1) throw InvalidArgument("minibatch is empty");
  if (actions.rows() != m || old_log_probs.size() != m || advantages.size() != m ||
      returns.size() != m) {
    throw InvalidArgument("minibatch fields have inconsistent sample counts");
  }
  if (old_means.rows() != 0 &&
      (old_means.rows() != m || old_stds.rows() != m || old_means.cols() != actions.cols() ||
       old_stds.cols() != actions.cols())) {
    throw InvalidArgument("old_means/old_stds do not match the minibatch");
  }
  if (!old_log_probs.allFinite()) throw InvalidArgument("old_log_probs must be finite");
  if (!advantages.allFinite()) throw InvalidArgument("advantages must be finite");
}

void ObjectiveSpec::validate() const {
  if (!(delta > 0.0)) throw InvalidArgument("delta must be > 0");
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be > 0");
  if (!(eps_clip > 0.0 && eps_clip < 1.0)) throw InvalidArgument("eps_clip must lie in (0, 1)");
  if (!(trpo_kl > 0.0)) throw InvalidArgument("trpo_kl must be > 0");
  if (!(value_coef >= 0.0) || !(entropy_coef >= 0.0)) {
    throw InvalidArgument("value_coef and entropy_coef must be >= 0");
  }
}

std::string_view to_string(const ObjectiveSpec& spec) {
  switch (spec.kind) {
    case ObjectiveKind::kPg:
      return "pg";
    case ObjectiveKind::kRatioConservative:
      return spec.min_form_clip ? "ppo" : "ratio-cons";
    case ObjectiveKind::kObjectiveConservative:
      return "trefree";
    case ObjectiveKind::kTrpo:
      return "trpo";
  }
  return "unknown";
}

ObjectiveSpec objective_from_name(std::string_view name) {
  ObjectiveSpec spec;
  if (name == "pg") {
    spec.kind = ObjectiveKind::kPg;
  } else if (name == "ppo") {
    spec.kind = ObjectiveKind::kRatioConservative;
    spec.min_form_clip = true;
  } else if (name == "ratio-cons") {
    spec.kind = ObjectiveKind::kRatioConservative;
  } else if (name == "trefree") {
    spec.kind = ObjectiveKind::kObjectiveConservative;
  } else if (name == "trpo") {
    spec.kind = ObjectiveKind::kTrpo;
  } else {
    throw InvalidArgument("unknown objective '" + std::string(name) +
                          "' (expected pg, ppo, ratio-cons, trefree or trpo)");
  }
  return spec;
}

LossSpec loss_spec_for(const ObjectiveSpec& spec) {
  LossSpec out;
  out.delta = spec.delta;
  out.lambda = spec.lambda;
  out.eps_clip = spec.eps_clip;
  out.value_coef = spec.value_coef;
  out.entropy_coef = spec.entropy_coef;
  switch (spec.kind) {
    case ObjectiveKind::kPg:
      out.policy = PolicyTerm::kPg;
      break;
    case ObjectiveKind::kRatioConservative:
      out.policy = spec.min_form_clip ? PolicyTerm::kPpoClip : PolicyTerm::kRatioClip;
      break;
    case ObjectiveKind::kObjectiveConservative:
      out.policy = PolicyTerm::kTrefree;
      break;
    case ObjectiveKind::kTrpo:
      out.policy = PolicyTerm::kNone;
      out.entropy_coef = 0.0;
      break;
  }
  return out;
}

TermValue policy_term(PolicyTerm term, double log_ratio, double advantage, const LossSpec& spec) {
  if (term == PolicyTerm::kNone) return {};
  const double r = std::exp(log_ratio);
  const double full_grad = r * advantage;
  switch (term) {
    case PolicyTerm::kNone:
      break;
    case PolicyTerm::kPg:
      return {r * advantage, full_grad, false};
    case PolicyTerm::kRatioClip: {
      const double dev = r - 1.0;
      if (dev >= spec.lambda) return {spec.lambda * advantage, 0.0, true};
      if (dev <= -spec.lambda) return {-spec.lambda * advantage, 0.0, true};
      return {dev * advantage, full_grad, false};
    }
    case PolicyTerm::kPpoClip: {
      const double unclipped = r * advantage;
      const double clipped = std::clamp(r, 1.0 - spec.eps_clip, 1.0 + spec.eps_clip) * advantage;
      if (unclipped < clipped) return {unclipped, full_grad, false};
      if (r > 1.0 - spec.eps_clip && r < 1.0 + spec.eps_clip) return {unclipped, full_grad, false};
      return {clipped, 0.0, true};
    }
    case PolicyTerm::kTrefree: {
      const double t = (r - 1.0) * advantage;
      // Ties go to the clipped branch.
      if (t >= spec.delta) return {spec.delta, 0.0, true};
      return {t, full_grad, false};
    }
  }
  return {};
}

LossEval evaluate_loss(const nn::PolicyNet& net, const Minibatch& batch, const LossSpec& spec,
                       Execution execution) {
  batch.validate();
  if (spec.kl_coef != 0.0 && !batch.has_old_dists()) {
    throw InvalidArgument("KL term requires old_means/old_stds in the minibatch");
  }
  const int m = batch.size();
  const double inv_m = 1.0 / m;
  const nn::NetShape shape = net.shape();

  Partial total(shape);
  if (execution == Execution::kSerial) {
    for (int i = 0; i < m; ++i) accumulate_sample(net, batch, i, spec, inv_m, total);
  } else {
    const int chunks = (m + kChunkSize - 1) / kChunkSize;
    std::vector<Partial> partials(static_cast<std::size_t>(chunks), Partial(shape));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
    for (int c = 0; c < chunks; ++c) {
      try {
        const int end = std::min(m, (c + 1) * kChunkSize);
        for (int i = c * kChunkSize; i < end; ++i) {
          accumulate_sample(net, batch, i, spec, inv_m, partials[static_cast<std::size_t>(c)]);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (const auto& p : partials) merge(total, p);
  }

  LossEval out(shape);
  out.policy_objective = total.policy_sum * inv_m;
  out.value_loss = total.value_sum * inv_m;
  out.entropy = total.entropy_sum * inv_m;
  out.kl = total.kl_sum * inv_m;
  out.max_policy_term = spec.policy == PolicyTerm::kNone ? 0.0 : total.max_term;
  out.flat_samples = total.flat;
  out.terms_above_delta = total.above_delta;
  out.loss = -out.policy_objective + spec.value_coef * out.value_loss -
             spec.entropy_coef * out.entropy + spec.kl_coef * out.kl;
  out.grad = std::move(total.grad);
  return out;
}

LossEval pg_loss(const nn::PolicyNet& net, const Minibatch& batch) {
  LossSpec spec;
  spec.policy = PolicyTerm::kPg;
  return evaluate_loss(net, batch, spec);
}

LossEval ratio_conservative_loss(const nn::PolicyNet& net, const Minibatch& batch, double lambda,
                                 bool min_form) {
  if (!(lambda > 0.0)) throw InvalidArgument("clip range must be > 0");
  LossSpec spec;
  spec.policy = min_form ? PolicyTerm::kPpoClip : PolicyTerm::kRatioClip;
  spec.lambda = lambda;
  spec.eps_clip = lambda;
  return evaluate_loss(net, batch, spec);
}

LossEval trefree_loss(const nn::PolicyNet& net, const Minibatch& batch, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("delta must be > 0");
  LossSpec spec;
  spec.policy = PolicyTerm::kTrefree;
  spec.delta = delta;
  return evaluate_loss(net, batch, spec);
}

LossEval value_loss(const nn::PolicyNet& net, const Minibatch& batch) {
  LossSpec spec;
  spec.value_coef = 1.0;
  return evaluate_loss(net, batch, spec);
}

LossEval entropy_bonus(const nn::PolicyNet& net, const Minibatch& batch) {
  LossSpec spec;
  spec.entropy_coef = 1.0;
  return evaluate_loss(net, batch, spec);
}

LossEval kl_loss(const nn::PolicyNet& net, const Minibatch& batch) {
  LossSpec spec;
  spec.kl_coef = 1.0;
  return evaluate_loss(net, batch, spec);
}

double RatioStats::max_abs() const {
  return std::max(std::abs(min_log_ratio), std::abs(max_log_ratio));
}

VectorXd log_ratios(const nn::PolicyNet& net, const Minibatch& batch) {
  batch.validate();
  const int m = batch.size();
  VectorXd out(m);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(m));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    try {
      std::vector<double> obs_buf;
      std::vector<double> act_buf;
      const auto dist = nn::forward_policy(net, row_span(batch.obs, i, obs_buf));
      out[i] = nn::log_prob(dist, row_span(batch.actions, i, act_buf)) - batch.old_log_probs[i];
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

RatioStats ratio_stats(const nn::PolicyNet& net, const Minibatch& batch) {
  const VectorXd lr = log_ratios(net, batch);
  return {lr.minCoeff(), lr.maxCoeff(), lr.mean()};
}

double mean_kl(const nn::PolicyNet& net, const Minibatch& batch) {
  batch.validate();
  if (!batch.has_old_dists()) throw InvalidArgument("mean_kl requires old_means/old_stds");
  double total = 0.0;
  std::vector<double> obs_buf;
  for (int i = 0; i < batch.size(); ++i) {
    total += nn::kl(old_dist(batch, i), nn::forward_policy(net, row_span(batch.obs, i, obs_buf)));
  }
  return total / batch.size();
}

}  // namespace trefree::objectives
