#include "trefree/trpo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <vector>

#include "trefree/errors.hpp"

namespace trefree::objectives {

namespace {

std::vector<double> row_vec(const MatrixXd& m, int i) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

struct SurrogateEval {
  double surrogate = 0.0;
  double kl = 0.0;
};

SurrogateEval evaluate_surrogate(const nn::PolicyNet& net, const Minibatch& batch) {
  LossSpec spec;
  spec.policy = PolicyTerm::kPg;
  const LossEval e = evaluate_loss(net, batch, spec);
  return {e.policy_objective, mean_kl(net, batch)};
}

}  // namespace

VectorXd fisher_vector_product(const nn::PolicyNet& net, const Minibatch& batch,
                               const VectorXd& v) {
  batch.validate();
  if (v.size() != static_cast<Eigen::Index>(net.size())) {
    throw InvalidArgument("Fisher-vector product direction has the wrong size");
  }
  nn::ParamVector dir(net.shape());
  dir.values() = v;
  const int m = batch.size();
  const int chunks = (m + kChunkSize - 1) / kChunkSize;
  std::vector<nn::GradBuffer> partials(static_cast<std::size_t>(chunks), nn::GradBuffer(net.shape()));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
  for (int c = 0; c < chunks; ++c) {
    try {
      const int end = std::min(m, (c + 1) * kChunkSize);
      for (int i = c * kChunkSize; i < end; ++i) {
        const auto obs = row_vec(batch.obs, i);
        const nn::ForwardCache cache = nn::forward(net, obs);
        const nn::HeadGrad tangent = nn::jvp(net, cache, dir);
        const VectorXd var = (2.0 * cache.log_std).array().exp().matrix();
        nn::HeadGrad upstream;
        upstream.d_mean = tangent.d_mean.cwiseQuotient(var);
        upstream.d_log_std = 2.0 * tangent.d_log_std;
        nn::backward(net, cache, upstream, partials[static_cast<std::size_t>(c)], 1.0 / m);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  VectorXd out = VectorXd::Zero(v.size());
  for (const auto& p : partials) out += p.values();
  return out;
}

CgResult conjugate_gradient(const LinearOperator& op, const VectorXd& b, int iters,
                            double tolerance) {
  CgResult res;
  res.x = VectorXd::Zero(b.size());
  VectorXd r = b;
  VectorXd p = b;
  double rr = r.squaredNorm();
  for (int k = 0; k < iters && rr > tolerance * tolerance; ++k) {
    const VectorXd ap = op(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap) || pap <= 0.0) {
      throw NumericError("conjugate gradient breakdown: p^T A p = " + std::to_string(pap));
    }
    const double alpha = rr / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    if (!res.x.allFinite() || !r.allFinite()) {
      throw NumericError("non-finite conjugate gradient iterate at iteration " + std::to_string(k));
    }
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    res.iterations = k + 1;
  }
  res.residual_norm = std::sqrt(rr);
  return res;
}

TrpoReport trpo_step(nn::PolicyNet& net, const Minibatch& batch, const TrpoOptions& options,
                     const LinearOperator* operator_override) {
  batch.validate();
  if (!batch.has_old_dists()) throw InvalidArgument("TRPO step requires old_means/old_stds");
  if (!(options.max_kl > 0.0)) throw InvalidArgument("max_kl must be > 0");

  TrpoReport report;
  LossSpec spec;
  spec.policy = PolicyTerm::kPg;
  const LossEval base = evaluate_loss(net, batch, spec);
  const double surrogate_before = base.policy_objective;
  const VectorXd g = -base.grad.values();  // ascent direction of the surrogate

  if (g.squaredNorm() == 0.0) {
    report.reason = "zero surrogate gradient";
    return report;
  }

  const LinearOperator damped = [&](const VectorXd& v) -> VectorXd {
    return fisher_vector_product(net, batch, v) + options.damping * v;
  };
  const LinearOperator& op = operator_override ? *operator_override : damped;

  const CgResult cg = conjugate_gradient(op, g, options.cg_iters);
  report.cg_residual = cg.residual_norm;

  const double shs = cg.x.dot(op(cg.x));
  if (!(shs > 0.0) || !std::isfinite(shs)) {
    throw NumericError("non-positive curvature along the CG direction");
  }
  const VectorXd full_step = std::sqrt(2.0 * options.max_kl / shs) * cg.x;
  const double expected = g.dot(full_step);
  report.step_norm = full_step.norm();

  const VectorXd theta0 = net.values();
  double fraction = 1.0;
  for (int k = 0; k < options.max_backtracks; ++k, fraction *= options.backtrack) {
    net.values() = theta0 + fraction * full_step;
    net.clamp_log_std();
    SurrogateEval e;
    try {
      e = evaluate_surrogate(net, batch);
    } catch (const NumericError&) {
      continue;
    }
    const double improvement = e.surrogate - surrogate_before;
    report.backtracks = k;
    report.kl = e.kl;
    report.improvement = improvement;
    report.expected_improvement = fraction * expected;
    if (std::isfinite(e.kl) && e.kl <= options.max_kl && improvement > 0.0) {
      report.accepted = true;
      report.reason = "accepted";
      return report;
    }
  }
  net.values() = theta0;
  report.accepted = false;
  report.reason = "line search exhausted";
  report.kl = 0.0;
  report.improvement = 0.0;
  return report;
}

}  // namespace trefree::objectives
