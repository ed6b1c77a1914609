#pragma once

// Shared-trunk actor-critic MLP with a diagonal Gaussian policy head.
//
//   shared   = tanh(W_s obs + b_s)                (obs_dim -> hidden)
//   actor    = tanh(W_a shared + b_a)             (hidden -> hidden)
//   mean     = W_m actor + b_m                    (hidden -> act_dim)
//   std      = exp(log_std)                       (state independent)
//   critic   = tanh(W_c shared + b_c)             (hidden -> hidden)
//   value    = w_v . critic + b_v
//
// All parameters live in one flat vector; tensors are row-major views into it.
// Gradients, Adam moments and search directions share the same layout.

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

#include "trefree/gaussian.hpp"
#include "trefree/random.hpp"

namespace trefree::nn {

using Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct NetShape {
  int obs_dim = 1;
  int act_dim = 1;
  int hidden = 64;

  bool operator==(const NetShape&) const = default;
};

enum class Tensor : int {
  kSharedW,
  kSharedB,
  kActorW,
  kActorB,
  kMeanW,
  kMeanB,
  kLogStd,
  kCriticW,
  kCriticB,
  kValueW,
  kValueB,
};
inline constexpr int kTensorCount = 11;

struct TensorInfo {
  std::string_view name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

class ParamLayout {
 public:
  explicit ParamLayout(NetShape shape);

  NetShape shape() const { return shape_; }
  std::size_t size() const { return size_; }
  const TensorInfo& info(Tensor t) const { return tensors_[static_cast<std::size_t>(t)]; }
  std::span<const TensorInfo> tensors() const { return tensors_; }

  bool operator==(const ParamLayout& other) const { return shape_ == other.shape_; }

 private:
  NetShape shape_;
  std::array<TensorInfo, kTensorCount> tensors_{};
  std::size_t size_ = 0;
};

// Flat parameter-shaped storage with named tensor views.
class ParamVector {
 public:
  explicit ParamVector(NetShape shape);  // zero-filled

  const ParamLayout& layout() const { return layout_; }
  NetShape shape() const { return layout_.shape(); }
  std::size_t size() const { return layout_.size(); }

  VectorXd& values() { return values_; }
  const VectorXd& values() const { return values_; }

  MatrixMap tensor(Tensor t);
  ConstMatrixMap tensor(Tensor t) const;
  Eigen::Map<VectorXd> segment(Tensor t);
  Eigen::Map<const VectorXd> segment(Tensor t) const;

  void set_zero() { values_.setZero(); }

 private:
  ParamLayout layout_;
  VectorXd values_;
};

class GradBuffer : public ParamVector {
 public:
  using ParamVector::ParamVector;
};

class PolicyNet : public ParamVector {
 public:
  using ParamVector::ParamVector;

  // Orthogonal init: gain sqrt(2) on hidden layers, 0.01 on the mean head,
  // 1.0 on the value head; zero biases; log_std = 0.
  static PolicyNet initialized(NetShape shape, Rng& rng);

  void clamp_log_std();
};

// Activations kept for the backward and Jacobian-vector passes.
struct ForwardCache {
  VectorXd obs;
  VectorXd shared;
  VectorXd actor;
  VectorXd critic;
  VectorXd mean;
  VectorXd log_std;
  double value = 0.0;

  GaussianDist dist() const;
};

ForwardCache forward(const PolicyNet& net, std::span<const double> obs);
GaussianDist forward_policy(const PolicyNet& net, std::span<const double> obs);
double forward_value(const PolicyNet& net, std::span<const double> obs);

// Upstream gradient of a scalar loss with respect to the network heads.
struct HeadGrad {
  VectorXd d_mean;
  VectorXd d_log_std;
  double d_value = 0.0;
};

// Reverse pass: accumulates scale * dLoss/dparams into `out`.
void backward(const PolicyNet& net, const ForwardCache& cache, const HeadGrad& head,
              GradBuffer& out, double scale = 1.0);
GradBuffer backward(const PolicyNet& net, const ForwardCache& cache, const HeadGrad& head);

// Forward-mode pass: directional derivative of the heads along `direction`.
HeadGrad jvp(const PolicyNet& net, const ForwardCache& cache, const ParamVector& direction);

struct AdamState {
  VectorXd m;
  VectorXd v;
  long long step = 0;

  explicit AdamState(std::size_t n) : m(VectorXd::Zero(static_cast<Eigen::Index>(n))),
                                      v(VectorXd::Zero(static_cast<Eigen::Index>(n))) {}
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Bias-corrected Adam update followed by the log_std clamp. Throws NumericError
// (leaving net and state untouched) if any gradient entry is non-finite.
void adam_step(PolicyNet& net, const GradBuffer& grads, AdamState& state, double lr);

}  // namespace trefree::nn
