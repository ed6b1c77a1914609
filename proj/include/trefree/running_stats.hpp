#pragma once

#include <Eigen/Dense>

#include <span>

namespace trefree::trainer {

// Per-dimension running mean/variance (Welford updates, Chan merges).
class RunningStats {
 public:
  explicit RunningStats(int dim = 1);

  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd variance() const;  // population variance; zero before any update
  Eigen::VectorXd stddev() const;

  void update(std::span<const double> x);
  void merge(const RunningStats& other);

 private:
  double count_ = 0.0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

}  // namespace trefree::trainer
