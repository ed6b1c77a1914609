#include "trefree/nn.hpp"

#include <cmath>
#include <string>

#include "trefree/errors.hpp"

namespace trefree::nn {

namespace {

void check_node(const VectorXd& v, const char* node) {
  if (!v.allFinite()) throw NumericError(std::string("non-finite value at node '") + node + "'");
}

VectorXd tanh_of(const VectorXd& z) { return z.array().tanh().matrix(); }

// d tanh = 1 - tanh^2
VectorXd tanh_backward(const VectorXd& y, const VectorXd& upstream) {
  return upstream.cwiseProduct((1.0 - y.array().square()).matrix());
}

void orthogonal_fill(MatrixMap w, double gain, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index rows = w.rows();
  const Eigen::Index cols = w.cols();
  const bool tall = rows >= cols;
  Eigen::MatrixXd a(tall ? rows : cols, tall ? cols : rows);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  // Sign fix so the distribution is uniform over orthogonal matrices.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  if (tall) {
    w = gain * q;
  } else {
    w = gain * q.transpose();
  }
}

}  // namespace

ParamLayout::ParamLayout(NetShape shape) : shape_(shape) {
  if (shape.obs_dim < 1 || shape.act_dim < 1 || shape.hidden < 1) {
    throw InvalidArgument("network dimensions must be >= 1");
  }
  const int h = shape.hidden;
  const std::array<TensorInfo, kTensorCount> specs{{
      {"shared_w", h, shape.obs_dim, 0},
      {"shared_b", h, 1, 0},
      {"actor_w", h, h, 0},
      {"actor_b", h, 1, 0},
      {"mean_w", shape.act_dim, h, 0},
      {"mean_b", shape.act_dim, 1, 0},
      {"log_std", shape.act_dim, 1, 0},
      {"critic_w", h, h, 0},
      {"critic_b", h, 1, 0},
      {"value_w", 1, h, 0},
      {"value_b", 1, 1, 0},
  }};
  std::size_t offset = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    tensors_[i] = specs[i];
    tensors_[i].offset = offset;
    offset += specs[i].size();
  }
  size_ = offset;
}

ParamVector::ParamVector(NetShape shape)
    : layout_(shape), values_(VectorXd::Zero(static_cast<Eigen::Index>(layout_.size()))) {}

MatrixMap ParamVector::tensor(Tensor t) {
  const auto& i = layout_.info(t);
  return MatrixMap(values_.data() + i.offset, i.rows, i.cols);
}

ConstMatrixMap ParamVector::tensor(Tensor t) const {
  const auto& i = layout_.info(t);
  return ConstMatrixMap(values_.data() + i.offset, i.rows, i.cols);
}

Eigen::Map<VectorXd> ParamVector::segment(Tensor t) {
  const auto& i = layout_.info(t);
  return Eigen::Map<VectorXd>(values_.data() + i.offset, static_cast<Eigen::Index>(i.size()));
}

Eigen::Map<const VectorXd> ParamVector::segment(Tensor t) const {
  const auto& i = layout_.info(t);
  return Eigen::Map<const VectorXd>(values_.data() + i.offset,
                                    static_cast<Eigen::Index>(i.size()));
}

PolicyNet PolicyNet::initialized(NetShape shape, Rng& rng) {
  PolicyNet net(shape);
  const double hidden_gain = std::sqrt(2.0);
  orthogonal_fill(net.tensor(Tensor::kSharedW), hidden_gain, rng);
  orthogonal_fill(net.tensor(Tensor::kActorW), hidden_gain, rng);
  orthogonal_fill(net.tensor(Tensor::kMeanW), 0.01, rng);
  orthogonal_fill(net.tensor(Tensor::kCriticW), hidden_gain, rng);
  orthogonal_fill(net.tensor(Tensor::kValueW), 1.0, rng);
  return net;
}

void PolicyNet::clamp_log_std() {
  auto ls = segment(Tensor::kLogStd);
  ls = ls.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

GaussianDist ForwardCache::dist() const { return {mean, log_std.array().exp().matrix()}; }

ForwardCache forward(const PolicyNet& net, std::span<const double> obs) {
  const NetShape shape = net.shape();
  if (static_cast<int>(obs.size()) != shape.obs_dim) {
    throw InvalidArgument("observation has " + std::to_string(obs.size()) + " entries, expected " +
                          std::to_string(shape.obs_dim));
  }
  ForwardCache c;
  c.obs = Eigen::Map<const VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
  if (!c.obs.allFinite()) throw InvalidArgument("observation contains non-finite values");

  c.shared = tanh_of(net.tensor(Tensor::kSharedW) * c.obs + net.segment(Tensor::kSharedB));
  check_node(c.shared, "shared");
  c.actor = tanh_of(net.tensor(Tensor::kActorW) * c.shared + net.segment(Tensor::kActorB));
  check_node(c.actor, "actor");
  c.mean = net.tensor(Tensor::kMeanW) * c.actor + net.segment(Tensor::kMeanB);
  check_node(c.mean, "mean");
  c.log_std = net.segment(Tensor::kLogStd);
  check_node(c.log_std, "log_std");
  c.critic = tanh_of(net.tensor(Tensor::kCriticW) * c.shared + net.segment(Tensor::kCriticB));
  check_node(c.critic, "critic");
  c.value = net.segment(Tensor::kValueW).dot(c.critic) + net.segment(Tensor::kValueB)[0];
  if (!std::isfinite(c.value)) throw NumericError("non-finite value at node 'value'");
  return c;
}

GaussianDist forward_policy(const PolicyNet& net, std::span<const double> obs) {
  return forward(net, obs).dist();
}

double forward_value(const PolicyNet& net, std::span<const double> obs) {
  return forward(net, obs).value;
}

void backward(const PolicyNet& net, const ForwardCache& c, const HeadGrad& head, GradBuffer& out,
              double scale) {
  if (!(out.layout() == net.layout())) throw InvalidArgument("gradient buffer layout mismatch");
  const int act_dim = net.shape().act_dim;
  const bool has_policy = head.d_mean.size() > 0 || head.d_log_std.size() > 0;
  if (head.d_mean.size() > 0 && head.d_mean.size() != act_dim) {
    throw InvalidArgument("d_mean has the wrong dimension");
  }
  if (head.d_log_std.size() > 0 && head.d_log_std.size() != act_dim) {
    throw InvalidArgument("d_log_std has the wrong dimension");
  }
  if (!std::isfinite(head.d_value)) throw NumericError("non-finite gradient at node 'value'");

  VectorXd d_shared = VectorXd::Zero(c.shared.size());

  if (head.d_value != 0.0) {
    const double dv = scale * head.d_value;
    out.segment(Tensor::kValueW) += dv * c.critic;
    out.segment(Tensor::kValueB)[0] += dv;
    const VectorXd d_critic = dv * net.segment(Tensor::kValueW);
    const VectorXd dz = tanh_backward(c.critic, d_critic);
    check_node(dz, "critic");
    out.tensor(Tensor::kCriticW).noalias() += dz * c.shared.transpose();
    out.segment(Tensor::kCriticB) += dz;
    d_shared.noalias() += net.tensor(Tensor::kCriticW).transpose() * dz;
  }

  if (has_policy) {
    if (head.d_log_std.size() > 0) {
      check_node(head.d_log_std, "log_std");
      out.segment(Tensor::kLogStd) += scale * head.d_log_std;
    }
    if (head.d_mean.size() > 0) {
      check_node(head.d_mean, "mean");
      const VectorXd dm = scale * head.d_mean;
      out.tensor(Tensor::kMeanW).noalias() += dm * c.actor.transpose();
      out.segment(Tensor::kMeanB) += dm;
      const VectorXd d_actor = net.tensor(Tensor::kMeanW).transpose() * dm;
      const VectorXd dz = tanh_backward(c.actor, d_actor);
      check_node(dz, "actor");
      out.tensor(Tensor::kActorW).noalias() += dz * c.shared.transpose();
      out.segment(Tensor::kActorB) += dz;
      d_shared.noalias() += net.tensor(Tensor::kActorW).transpose() * dz;
    }
  }

  const VectorXd dz = tanh_backward(c.shared, d_shared);
  check_node(dz, "shared");
  out.tensor(Tensor::kSharedW).noalias() += dz * c.obs.transpose();
  out.segment(Tensor::kSharedB) += dz;
}

GradBuffer backward(const PolicyNet& net, const ForwardCache& cache, const HeadGrad& head) {
  GradBuffer g(net.shape());
  backward(net, cache, head, g);
  return g;
}

HeadGrad jvp(const PolicyNet& net, const ForwardCache& c, const ParamVector& dir) {
  if (!(dir.layout() == net.layout())) throw InvalidArgument("direction layout mismatch");
  const VectorXd dz_shared =
      dir.tensor(Tensor::kSharedW) * c.obs + dir.segment(Tensor::kSharedB);
  const VectorXd d_shared = tanh_backward(c.shared, dz_shared);

  const VectorXd dz_actor = dir.tensor(Tensor::kActorW) * c.shared +
                            net.tensor(Tensor::kActorW) * d_shared + dir.segment(Tensor::kActorB);
  const VectorXd d_actor = tanh_backward(c.actor, dz_actor);

  const VectorXd dz_critic = dir.tensor(Tensor::kCriticW) * c.shared +
                             net.tensor(Tensor::kCriticW) * d_shared +
                             dir.segment(Tensor::kCriticB);
  const VectorXd d_critic = tanh_backward(c.critic, dz_critic);

  HeadGrad out;
  out.d_mean = dir.tensor(Tensor::kMeanW) * c.actor + net.tensor(Tensor::kMeanW) * d_actor +
               dir.segment(Tensor::kMeanB);
  out.d_log_std = dir.segment(Tensor::kLogStd);
  out.d_value = dir.segment(Tensor::kValueW).dot(c.critic) +
                net.segment(Tensor::kValueW).dot(d_critic) + dir.segment(Tensor::kValueB)[0];
  return out;
}

void adam_step(PolicyNet& net, const GradBuffer& grads, AdamState& state, double lr) {
  const auto n = static_cast<Eigen::Index>(net.size());
  if (grads.values().size() != n || state.m.size() != n || state.v.size() != n) {
    throw InvalidArgument("Adam state/gradient shapes do not match the network");
  }
  const VectorXd& g = grads.values();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(g[i])) {
      throw NumericError("non-finite gradient entry " + std::to_string(i) + "; Adam step aborted");
    }
  }
  state.step += 1;
  state.m = kAdamBeta1 * state.m + (1.0 - kAdamBeta1) * g;
  state.v = kAdamBeta2 * state.v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  net.values().array() -=
      lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + kAdamEps);
  net.clamp_log_std();
}

}  // namespace trefree::nn
