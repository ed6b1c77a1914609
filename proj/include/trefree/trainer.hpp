#pragma once

// On-policy training loop: N lockstep actors collect a batch under the frozen
// policy, GAE turns it into advantages, and K epochs of shuffled minibatches
// optimize the configured objective with Adam (TRPO takes one constrained
// natural-gradient step on the full batch and fits the critic separately).

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "trefree/envs.hpp"
#include "trefree/errors.hpp"
#include "trefree/nn.hpp"
#include "trefree/objectives.hpp"
#include "trefree/running_stats.hpp"
#include "trefree/trpo.hpp"

namespace trefree::trainer {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kObsClip = 10.0;
inline constexpr double kRewardClip = 10.0;
inline constexpr double kNormEps = 1e-8;
inline constexpr double kAdvStdFloor = 1e-8;

struct TrainConfig {
  std::string env_name = "pointmass";
  long long total_steps = 200'000;
  int n_actors = 4;
  int steps_per_actor = 512;
  int epochs = 10;
  int minibatch_size = 64;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double lr_start = 3e-4;
  double lr_end = 0.0;
  objectives::ObjectiveSpec objective;
  std::uint64_t seed = 0;
  bool normalize_obs = true;
  bool normalize_rew = true;
  bool normalize_adv = true;
  int hidden = 64;

  long long batch_size() const {
    return static_cast<long long>(n_actors) * static_cast<long long>(steps_per_actor);
  }
  int iterations() const { return static_cast<int>(total_steps / batch_size()); }
  double lr_at(long long steps_done) const;
  void validate() const;
};

// Running observation and discounted-return statistics.
class Normalizer {
 public:
  Normalizer(int obs_dim, int n_actors, double gamma, bool normalize_obs, bool normalize_rew);

  void observe(std::span<const double> raw_obs);
  VectorXd normalize(std::span<const double> raw_obs) const;
  // Scales a raw reward by the running std of actor's discounted return.
  double scale_reward(int actor, double raw_reward, bool episode_end);

  const RunningStats& obs_stats() const { return obs_stats_; }
  const RunningStats& return_stats() const { return ret_stats_; }

 private:
  bool normalize_obs_;
  bool normalize_rew_;
  double gamma_;
  RunningStats obs_stats_;
  RunningStats ret_stats_;
  std::vector<double> running_return_;
};

struct Actor {
  std::unique_ptr<envs::Env> env;
  Rng rng;
  VectorXd raw_obs;
  double episode_return = 0.0;
  int episode_length = 0;
};

std::vector<Actor> make_actors(const TrainConfig& config);

// Steps are stored actor-major: index = actor * steps_per_actor + t.
struct RolloutBatch {
  int n_actors = 0;
  int steps_per_actor = 0;
  MatrixXd obs;      // normalized, as fed to the policy
  MatrixXd actions;  // unclipped samples
  MatrixXd means;
  MatrixXd stds;
  VectorXd reward_norm;
  VectorXd reward_raw;
  std::vector<std::uint8_t> done;
  std::vector<std::uint8_t> truncated;
  VectorXd log_prob;
  VectorXd value;
  VectorXd next_value;  // bootstrap target: V(s_{t+1}), 0 on done
  VectorXd advantage;
  VectorXd returns;
  std::vector<double> episode_returns;  // raw, episodes finished during collection

  int size() const { return n_actors * steps_per_actor; }
  std::uint64_t hash() const;
};

RolloutBatch collect_rollouts(const nn::PolicyNet& net, std::vector<Actor>& actors,
                              const TrainConfig& config, Normalizer& normalizer);

struct GaeResult {
  VectorXd advantages;
  VectorXd returns;
};

// Segments of `segment_length` consecutive steps; the recursion restarts at
// segment boundaries and after done/truncated steps.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const double> next_values, std::span<const std::uint8_t> done,
                      std::span<const std::uint8_t> truncated, int segment_length, double gamma,
                      double lambda);
void compute_gae(RolloutBatch& batch, double gamma, double lambda);

// Zero mean, unit population std; std floored at kAdvStdFloor.
VectorXd normalize_advantages(const VectorXd& adv);

objectives::Minibatch to_minibatch(const RolloutBatch& batch);
objectives::Minibatch select(const objectives::Minibatch& batch, std::span<const int> rows);

struct IterationMetrics {
  int iteration = 0;
  long long step = 0;  // environment steps consumed after this iteration
  double return_mean = 0.0;
  double return_std = 0.0;
  int episodes = 0;
  double objective = 0.0;
  objectives::RatioStats ratio;
  double kl = 0.0;
  double lr = 0.0;
  double value_loss = 0.0;
  double max_policy_term = 0.0;
  long long terms_above_delta = 0;
  double first_minibatch_max_abs_log_ratio = 0.0;
  bool trpo_accepted = false;
  double trpo_kl = 0.0;           // mean KL of the accepted step
  double trpo_improvement = 0.0;  // surrogate gain of the accepted step
};

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  bool finished() const { return iteration_ >= config_.iterations(); }
  const IterationMetrics& run_iteration();

  const TrainConfig& config() const { return config_; }
  const nn::PolicyNet& net() const { return net_; }
  const Normalizer& normalizer() const { return normalizer_; }
  const std::vector<IterationMetrics>& rows() const { return rows_; }
  long long steps_done() const { return steps_done_; }

 private:
  void optimize_first_order(const objectives::Minibatch& full, double lr, IterationMetrics& m);
  void optimize_trpo(const objectives::Minibatch& full, IterationMetrics& m);

  TrainConfig config_;
  nn::PolicyNet net_;
  nn::AdamState adam_;
  Normalizer normalizer_;
  std::vector<Actor> actors_;
  Rng shuffle_rng_;
  int iteration_ = 0;
  long long steps_done_ = 0;
  std::vector<IterationMetrics> rows_;
};

struct TrainingLog {
  TrainConfig config;
  std::vector<IterationMetrics> rows;
  double max_policy_term = 0.0;
  long long terms_above_delta = 0;
  std::string error;  // empty on success
};

class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, int iteration, TrainingLog partial)
      : NumericError(what), iteration_(iteration), partial_(std::move(partial)) {}
  int iteration() const { return iteration_; }
  const TrainingLog& partial_log() const { return partial_; }

 private:
  int iteration_;
  TrainingLog partial_;
};

using IterationObserver = std::function<void(const IterationMetrics&, const Trainer&)>;

// Runs every iteration. A NumericError during iteration i is rethrown as
// TrainingAborted carrying the rows completed so far.
TrainingLog train(const TrainConfig& config, const IterationObserver& observer = {});

// Mean of return_mean over the last `window` rows that saw finished episodes.
double final_return(const std::vector<IterationMetrics>& rows, int window = 10);

void write_metrics_csv(const std::vector<IterationMetrics>& rows, const std::filesystem::path& path);
nlohmann::json make_manifest(const TrainingLog& log);

// Exact tabular policy of a Gaussian actor on a chain: P(right | s) = P(a > 0).
tabular::TabularPolicy chain_policy(const nn::PolicyNet& net, const Normalizer& normalizer,
                                    int n_states);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int episodes = 0;
};

// Discounted returns of the Gaussian actor sampled through ChainEnv, truncated
// at `horizon` steps.
MonteCarloEstimate chain_monte_carlo(const nn::PolicyNet& net, const Normalizer& normalizer,
                                     int n_states, double gamma, int episodes, int horizon,
                                     std::uint64_t seed);

}  // namespace trefree::trainer
