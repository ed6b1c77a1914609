#include "trefree/running_stats.hpp"

#include "trefree/errors.hpp"

namespace trefree::trainer {

RunningStats::RunningStats(int dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {
  if (dim < 1) throw InvalidArgument("running stats need dim >= 1");
}

Eigen::VectorXd RunningStats::variance() const {
  if (count_ == 0.0) return Eigen::VectorXd::Zero(dim());
  return (m2_ / count_).cwiseMax(0.0);
}

Eigen::VectorXd RunningStats::stddev() const { return variance().cwiseSqrt(); }

void RunningStats::update(std::span<const double> x) {
  if (static_cast<int>(x.size()) != dim()) throw InvalidArgument("running stats dimension mismatch");
  count_ += 1.0;
  for (int i = 0; i < dim(); ++i) {
    const double v = x[static_cast<std::size_t>(i)];
    const double delta = v - mean_[i];
    mean_[i] += delta / count_;
    m2_[i] += delta * (v - mean_[i]);
  }
}

void RunningStats::merge(const RunningStats& other) {
  if (other.dim() != dim()) throw InvalidArgument("running stats dimension mismatch");
  if (other.count_ == 0.0) return;
  if (count_ == 0.0) {
    *this = other;
    return;
  }
  const double total = count_ + other.count_;
  const Eigen::VectorXd delta = other.mean_ - mean_;
  mean_ += delta * (other.count_ / total);
  m2_ += other.m2_ + delta.cwiseProduct(delta) * (count_ * other.count_ / total);
  count_ = total;
}

}  // namespace trefree::trainer
