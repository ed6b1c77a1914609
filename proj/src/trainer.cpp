#include "trefree/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "trefree/config.hpp"
#include "trefree/errors.hpp"

namespace trefree::trainer {

namespace {

std::span<const double> as_span(const VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

nn::NetShape probe_shape(const TrainConfig& config) {
  const auto env = envs::make_env(config.env_name, 0);
  return {env->spec().obs_dim, env->spec().act_dim, config.hidden};
}

// FNV-1a over raw bytes.
class Fnv {
 public:
  void add(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  template <typename Derived>
  void add(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        add(&v, sizeof v);
      }
    }
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

void mask_to_critic(nn::GradBuffer& g) {
  nn::GradBuffer keep(g.shape());
  for (const auto t : {nn::Tensor::kCriticW, nn::Tensor::kCriticB, nn::Tensor::kValueW,
                       nn::Tensor::kValueB}) {
    keep.segment(t) = g.segment(t);
  }
  g.values() = keep.values();
}

}  // namespace

double TrainConfig::lr_at(long long steps_done) const {
  const double f =
      std::clamp(static_cast<double>(steps_done) / static_cast<double>(total_steps), 0.0, 1.0);
  return lr_start * (1.0 - f) + lr_end * f;
}

void TrainConfig::validate() const {
  if (!envs::is_known_env(env_name)) throw InvalidArgument("unknown env '" + env_name + "'");
  if (n_actors < 1 || steps_per_actor < 1) {
    throw InvalidArgument("n_actors and steps_per_actor must be >= 1");
  }
  if (total_steps < batch_size()) {
    throw InvalidArgument("total_steps must cover at least one batch of n_actors * steps_per_actor");
  }
  if (minibatch_size < 1 || minibatch_size > batch_size()) {
    throw InvalidArgument("minibatch_size must lie in [1, n_actors * steps_per_actor]");
  }
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw InvalidArgument("gae_lambda must lie in [0, 1]");
  }
  if (!(lr_start >= 0.0) || !(lr_end >= 0.0)) throw InvalidArgument("learning rates must be >= 0");
  if (hidden < 1) throw InvalidArgument("hidden must be >= 1");
  objective.validate();
}

Normalizer::Normalizer(int obs_dim, int n_actors, double gamma, bool normalize_obs,
                       bool normalize_rew)
    : normalize_obs_(normalize_obs),
      normalize_rew_(normalize_rew),
      gamma_(gamma),
      obs_stats_(obs_dim),
      ret_stats_(1),
      running_return_(static_cast<std::size_t>(n_actors), 0.0) {}

void Normalizer::observe(std::span<const double> raw_obs) {
  if (normalize_obs_) obs_stats_.update(raw_obs);
}

VectorXd Normalizer::normalize(std::span<const double> raw_obs) const {
  VectorXd x = Eigen::Map<const VectorXd>(raw_obs.data(), static_cast<Eigen::Index>(raw_obs.size()));
  if (!normalize_obs_) return x;
  const VectorXd scale = (obs_stats_.variance().array() + kNormEps).sqrt();
  return ((x - obs_stats_.mean()).array() / scale.array()).cwiseMax(-kObsClip).cwiseMin(kObsClip);
}

double Normalizer::scale_reward(int actor, double raw_reward, bool episode_end) {
  if (!normalize_rew_) return raw_reward;
  double& ret = running_return_.at(static_cast<std::size_t>(actor));
  ret = gamma_ * ret + raw_reward;
  ret_stats_.update(std::span<const double>(&ret, 1));
  if (episode_end) ret = 0.0;
  // A single sample carries no spread; leave the reward unscaled until there are two.
  const double scale =
      ret_stats_.count() < 2.0 ? 1.0 : 1.0 / std::sqrt(ret_stats_.variance()[0] + kNormEps);
  return std::clamp(raw_reward * scale, -kRewardClip, kRewardClip);
}

std::vector<Actor> make_actors(const TrainConfig& config) {
  std::vector<Actor> actors;
  actors.reserve(static_cast<std::size_t>(config.n_actors));
  for (int i = 0; i < config.n_actors; ++i) {
    const auto k = static_cast<std::uint64_t>(i);
    Actor a{envs::make_env(config.env_name, split_seed(config.seed, streams::kEnvBase + k)),
            make_rng(config.seed, streams::kActionBase + k), VectorXd(), 0.0, 0};
    a.raw_obs = a.env->reset();
    actors.push_back(std::move(a));
  }
  return actors;
}

std::uint64_t RolloutBatch::hash() const {
  Fnv h;
  h.add(obs);
  h.add(actions);
  h.add(means);
  h.add(stds);
  h.add(reward_norm);
  h.add(reward_raw);
  h.add(done.data(), done.size());
  h.add(truncated.data(), truncated.size());
  h.add(log_prob);
  h.add(value);
  h.add(next_value);
  return h.value();
}

RolloutBatch collect_rollouts(const nn::PolicyNet& net, std::vector<Actor>& actors,
                              const TrainConfig& config, Normalizer& normalizer) {
  const int n = static_cast<int>(actors.size());
  const int steps = config.steps_per_actor;
  const int obs_dim = net.shape().obs_dim;
  const int act_dim = net.shape().act_dim;
  const int total = n * steps;

  RolloutBatch b;
  b.n_actors = n;
  b.steps_per_actor = steps;
  b.obs.resize(total, obs_dim);
  b.actions.resize(total, act_dim);
  b.means.resize(total, act_dim);
  b.stds.resize(total, act_dim);
  b.reward_norm.resize(total);
  b.reward_raw.resize(total);
  b.done.assign(static_cast<std::size_t>(total), 0);
  b.truncated.assign(static_cast<std::size_t>(total), 0);
  b.log_prob.resize(total);
  b.value.resize(total);
  b.next_value = VectorXd::Zero(total);

  std::vector<envs::StepResult> results(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

  for (int t = 0; t < steps; ++t) {
    for (auto& a : actors) normalizer.observe(as_span(a.raw_obs));
    for (int i = 0; i < n; ++i) {
      b.obs.row(i * steps + t) = normalizer.normalize(as_span(actors[static_cast<std::size_t>(i)].raw_obs));
    }

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      const int idx = i * steps + t;
      Actor& a = actors[static_cast<std::size_t>(i)];
      try {
        const VectorXd o = b.obs.row(idx).transpose();
        const nn::ForwardCache cache = nn::forward(net, as_span(o));
        const nn::GaussianDist dist = cache.dist();
        const VectorXd action = nn::sample(dist, a.rng);
        b.actions.row(idx) = action.transpose();
        b.means.row(idx) = dist.mean.transpose();
        b.stds.row(idx) = dist.std.transpose();
        b.log_prob[idx] = nn::log_prob(dist, as_span(action));
        b.value[idx] = cache.value;
        results[static_cast<std::size_t>(i)] = a.env->step(as_span(action));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
    for (int i = 0; i < n; ++i) {
      if (const auto& e = errors[static_cast<std::size_t>(i)]) {
        try {
          std::rethrow_exception(e);
        } catch (const NumericError& err) {
          throw NumericError("actor " + std::to_string(i) + " step " + std::to_string(t) + ": " +
                             err.what());
        }
      }
    }

    for (int i = 0; i < n; ++i) {
      const int idx = i * steps + t;
      Actor& a = actors[static_cast<std::size_t>(i)];
      const envs::StepResult& r = results[static_cast<std::size_t>(i)];
      const bool ended = r.done || r.truncated;
      b.reward_raw[idx] = r.reward;
      b.reward_norm[idx] = normalizer.scale_reward(i, r.reward, ended);
      b.done[static_cast<std::size_t>(idx)] = r.done ? 1 : 0;
      b.truncated[static_cast<std::size_t>(idx)] = r.truncated ? 1 : 0;
      a.episode_return += r.reward;
      ++a.episode_length;
      if (r.truncated) {
        // Bootstrap from the state the horizon cut off, without touching the stats.
        b.next_value[idx] = nn::forward_value(net, as_span(normalizer.normalize(as_span(r.next_obs))));
      }
      if (ended) {
        b.episode_returns.push_back(a.episode_return);
        a.episode_return = 0.0;
        a.episode_length = 0;
        a.raw_obs = a.env->reset();
      } else {
        a.raw_obs = r.next_obs;
      }
    }
  }

  // Continuing steps bootstrap from the value recorded at the next step; the
  // segment tail from the actor's current observation.
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < steps; ++t) {
      const int idx = i * steps + t;
      if (b.done[static_cast<std::size_t>(idx)] || b.truncated[static_cast<std::size_t>(idx)]) continue;
      if (t + 1 < steps) {
        b.next_value[idx] = b.value[idx + 1];
      } else {
        const VectorXd o = normalizer.normalize(as_span(actors[static_cast<std::size_t>(i)].raw_obs));
        b.next_value[idx] = nn::forward_value(net, as_span(o));
      }
    }
  }
  b.advantage = VectorXd::Zero(total);
  b.returns = VectorXd::Zero(total);
  return b;
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const double> next_values, std::span<const std::uint8_t> done,
                      std::span<const std::uint8_t> truncated, int segment_length, double gamma,
                      double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || done.size() != n || truncated.size() != n) {
    throw InvalidArgument("GAE inputs have mismatched lengths");
  }
  if (segment_length < 1 || n % static_cast<std::size_t>(segment_length) != 0) {
    throw InvalidArgument("GAE input length is not a multiple of the segment length");
  }
  GaeResult out{VectorXd::Zero(static_cast<Eigen::Index>(n)),
                VectorXd::Zero(static_cast<Eigen::Index>(n))};
  const auto seg = static_cast<std::size_t>(segment_length);
  for (std::size_t start = 0; start < n; start += seg) {
    double running = 0.0;
    for (std::size_t k = seg; k-- > 0;) {
      const std::size_t i = start + k;
      const bool continues = !done[i] && !truncated[i] && k + 1 < seg;
      const double bootstrap = done[i] ? 0.0 : next_values[i];
      const double delta = rewards[i] + gamma * bootstrap - values[i];
      running = delta + (continues ? gamma * lambda * running : 0.0);
      out.advantages[static_cast<Eigen::Index>(i)] = running;
      out.returns[static_cast<Eigen::Index>(i)] = running + values[i];
    }
  }
  return out;
}

void compute_gae(RolloutBatch& batch, double gamma, double lambda) {
  const auto n = static_cast<std::size_t>(batch.size());
  GaeResult r = compute_gae({batch.reward_norm.data(), n}, {batch.value.data(), n},
                            {batch.next_value.data(), n}, batch.done, batch.truncated,
                            batch.steps_per_actor, gamma, lambda);
  batch.advantage = std::move(r.advantages);
  batch.returns = std::move(r.returns);
}

VectorXd normalize_advantages(const VectorXd& adv) {
  if (adv.size() < 2) throw InvalidArgument("advantage normalization needs at least 2 samples");
  const double mean = adv.mean();
  const VectorXd centered = adv.array() - mean;
  const double std = std::sqrt(centered.squaredNorm() / static_cast<double>(adv.size()));
  return centered / std::max(std, kAdvStdFloor);
}

objectives::Minibatch to_minibatch(const RolloutBatch& batch) {
  return {batch.obs,     batch.actions, batch.log_prob, batch.advantage,
          batch.returns, batch.means,   batch.stds};
}

objectives::Minibatch select(const objectives::Minibatch& batch, std::span<const int> rows) {
  const auto m = static_cast<Eigen::Index>(rows.size());
  objectives::Minibatch out;
  out.obs.resize(m, batch.obs.cols());
  out.actions.resize(m, batch.actions.cols());
  out.old_log_probs.resize(m);
  out.advantages.resize(m);
  out.returns.resize(m);
  const bool dists = batch.has_old_dists();
  if (dists) {
    out.old_means.resize(m, batch.old_means.cols());
    out.old_stds.resize(m, batch.old_stds.cols());
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    const int i = rows[static_cast<std::size_t>(k)];
    if (i < 0 || i >= batch.size()) throw InvalidArgument("minibatch row index out of range");
    out.obs.row(k) = batch.obs.row(i);
    out.actions.row(k) = batch.actions.row(i);
    out.old_log_probs[k] = batch.old_log_probs[i];
    out.advantages[k] = batch.advantages[i];
    out.returns[k] = batch.returns[i];
    if (dists) {
      out.old_means.row(k) = batch.old_means.row(i);
      out.old_stds.row(k) = batch.old_stds.row(i);
    }
  }
  return out;
}

Trainer::Trainer(TrainConfig config)
    : config_((config.validate(), std::move(config))),
      net_([this] {
        Rng rng = make_rng(config_.seed, streams::kNetInit);
        return nn::PolicyNet::initialized(probe_shape(config_), rng);
      }()),
      adam_(net_.size()),
      normalizer_(net_.shape().obs_dim, config_.n_actors, config_.gamma, config_.normalize_obs,
                  config_.normalize_rew),
      actors_(make_actors(config_)),
      shuffle_rng_(make_rng(config_.seed, streams::kShuffle)) {}

const IterationMetrics& Trainer::run_iteration() {
  if (finished()) throw std::logic_error("training already consumed total_steps");
  IterationMetrics m;
  m.iteration = iteration_;
  m.lr = config_.lr_at(steps_done_);

  RolloutBatch batch = collect_rollouts(net_, actors_, config_, normalizer_);
  compute_gae(batch, config_.gamma, config_.gae_lambda);
  objectives::Minibatch full = to_minibatch(batch);
  if (config_.normalize_adv) full.advantages = normalize_advantages(full.advantages);
  if (!full.advantages.allFinite()) throw NumericError("non-finite advantages");

  m.episodes = static_cast<int>(batch.episode_returns.size());
  if (m.episodes > 0) {
    const Eigen::Map<const VectorXd> rets(batch.episode_returns.data(), m.episodes);
    m.return_mean = rets.mean();
    m.return_std = std::sqrt((rets.array() - m.return_mean).square().mean());
  } else {
    m.return_mean = std::numeric_limits<double>::quiet_NaN();
    m.return_std = std::numeric_limits<double>::quiet_NaN();
  }

  m.max_policy_term = -std::numeric_limits<double>::infinity();
  if (config_.objective.kind == objectives::ObjectiveKind::kTrpo) {
    optimize_trpo(full, m);
  } else {
    optimize_first_order(full, m.lr, m);
  }
  m.ratio = objectives::ratio_stats(net_, full);
  m.kl = objectives::mean_kl(net_, full);
  if (!std::isfinite(m.kl) || !std::isfinite(m.ratio.min_log_ratio) ||
      !std::isfinite(m.ratio.max_log_ratio) || !std::isfinite(m.ratio.mean_log_ratio) ||
      !std::isfinite(m.objective)) {
    throw NumericError("non-finite policy diagnostics after the update (kl " + std::to_string(m.kl) +
                       ", mean log-ratio " + std::to_string(m.ratio.mean_log_ratio) + ")");
  }

  steps_done_ += config_.batch_size();
  m.step = steps_done_;
  ++iteration_;
  rows_.push_back(m);
  return rows_.back();
}

void Trainer::optimize_first_order(const objectives::Minibatch& full, double lr,
                                   IterationMetrics& m) {
  const objectives::LossSpec spec = objectives::loss_spec_for(config_.objective);
  const auto track = [&m](const objectives::LossEval& ev) {
    m.max_policy_term = std::max(m.max_policy_term, ev.max_policy_term);
    m.terms_above_delta += ev.terms_above_delta;
  };

  std::vector<int> order(static_cast<std::size_t>(full.size()));
  std::iota(order.begin(), order.end(), 0);
  const int mb = config_.minibatch_size;
  const int per_epoch = full.size() / mb;  // remainder dropped
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng_);
    for (int k = 0; k < per_epoch; ++k) {
      const objectives::Minibatch sub =
          select(full, std::span<const int>(order).subspan(static_cast<std::size_t>(k * mb),
                                                           static_cast<std::size_t>(mb)));
      if (epoch == 0 && k == 0) {
        m.first_minibatch_max_abs_log_ratio = objectives::ratio_stats(net_, sub).max_abs();
      }
      const objectives::LossEval ev = objectives::evaluate_loss(net_, sub, spec);
      track(ev);
      nn::adam_step(net_, ev.grad, adam_, lr);
    }
  }

  const objectives::LossEval after = objectives::evaluate_loss(net_, full, spec);
  track(after);
  m.objective = after.policy_objective;
  m.value_loss = after.value_loss;
}

void Trainer::optimize_trpo(const objectives::Minibatch& full, IterationMetrics& m) {
  m.first_minibatch_max_abs_log_ratio = objectives::ratio_stats(net_, full).max_abs();
  objectives::TrpoOptions options;
  options.max_kl = config_.objective.trpo_kl;
  const objectives::TrpoReport report = objectives::trpo_step(net_, full, options);
  m.trpo_accepted = report.accepted;
  m.trpo_kl = report.kl;
  m.trpo_improvement = report.improvement;

  // Critic fit touches only the critic branch so the accepted policy stays put.
  objectives::LossSpec critic;
  critic.value_coef = config_.objective.value_coef;
  std::vector<int> order(static_cast<std::size_t>(full.size()));
  std::iota(order.begin(), order.end(), 0);
  const int mb = config_.minibatch_size;
  const int per_epoch = full.size() / mb;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng_);
    for (int k = 0; k < per_epoch; ++k) {
      const objectives::Minibatch sub =
          select(full, std::span<const int>(order).subspan(static_cast<std::size_t>(k * mb),
                                                           static_cast<std::size_t>(mb)));
      objectives::LossEval ev = objectives::evaluate_loss(net_, sub, critic);
      mask_to_critic(ev.grad);
      nn::adam_step(net_, ev.grad, adam_, m.lr);
    }
  }

  objectives::LossSpec surrogate;
  surrogate.policy = objectives::PolicyTerm::kPg;
  surrogate.value_coef = 1.0;
  const objectives::LossEval after = objectives::evaluate_loss(net_, full, surrogate);
  m.objective = after.policy_objective;
  m.value_loss = after.value_loss;
  m.max_policy_term = after.max_policy_term;
}

namespace {

void summarize(TrainingLog& log) {
  log.max_policy_term = -std::numeric_limits<double>::infinity();
  log.terms_above_delta = 0;
  for (const auto& r : log.rows) {
    log.max_policy_term = std::max(log.max_policy_term, r.max_policy_term);
    log.terms_above_delta += r.terms_above_delta;
  }
}

}  // namespace

TrainingLog train(const TrainConfig& config, const IterationObserver& observer) {
  Trainer trainer(config);
  TrainingLog log;
  log.config = config;
  while (!trainer.finished()) {
    const int iteration = static_cast<int>(trainer.rows().size());
    try {
      const IterationMetrics& row = trainer.run_iteration();
      if (observer) observer(row, trainer);
    } catch (const NumericError& e) {
      TrainingLog partial = log;
      partial.rows = trainer.rows();
      summarize(partial);
      partial.error = e.what();
      throw TrainingAborted("iteration " + std::to_string(iteration) + ": " + e.what(), iteration,
                            std::move(partial));
    }
  }
  log.rows = trainer.rows();
  summarize(log);
  return log;
}

double final_return(const std::vector<IterationMetrics>& rows, int window) {
  std::vector<double> seen;
  for (const auto& r : rows) {
    if (r.episodes > 0) seen.push_back(r.return_mean);
  }
  if (seen.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto take = std::min<std::size_t>(seen.size(), static_cast<std::size_t>(std::max(window, 1)));
  return std::accumulate(seen.end() - static_cast<std::ptrdiff_t>(take), seen.end(), 0.0) /
         static_cast<double>(take);
}

void write_metrics_csv(const std::vector<IterationMetrics>& rows,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,return_mean,return_std,objective,min_log_ratio,max_log_ratio,mean_log_ratio,kl,lr\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.step << ',' << r.return_mean << ',' << r.return_std << ',' << r.objective << ','
        << r.ratio.min_log_ratio << ',' << r.ratio.max_log_ratio << ',' << r.ratio.mean_log_ratio
        << ',' << r.kl << ',' << r.lr << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

nlohmann::json make_manifest(const TrainingLog& log) {
  nlohmann::json j;
  j["format"] = "trefree-manifest";
  j["version"] = TREFREE_VERSION_STRING;
  j["seed"] = log.config.seed;
  j["config"] = config::to_json(log.config);
  j["iterations"] = log.rows.size();
  j["env_steps"] = log.rows.empty() ? 0LL : log.rows.back().step;
  j["final_return"] = log.rows.empty() ? nlohmann::json(nullptr)
                                       : nlohmann::json(final_return(log.rows));
  j["terms_above_delta"] = log.terms_above_delta;
  if (!log.error.empty()) j["error"] = log.error;
  return j;
}

tabular::TabularPolicy chain_policy(const nn::PolicyNet& net, const Normalizer& normalizer,
                                    int n_states) {
  if (net.shape().act_dim != 1 || net.shape().obs_dim != n_states) {
    throw InvalidArgument("network shape does not match a chain of " + std::to_string(n_states));
  }
  Eigen::MatrixXd probs(n_states, 2);
  for (int s = 0; s < n_states; ++s) {
    VectorXd raw = VectorXd::Zero(n_states);
    raw[s] = 1.0;
    const auto dist = nn::forward_policy(net, as_span(normalizer.normalize(as_span(raw))));
    // P(a > 0) for a ~ N(mu, sigma^2).
    const double right = 0.5 * std::erfc(-dist.mean[0] / (dist.std[0] * std::sqrt(2.0)));
    probs(s, 0) = 1.0 - right;
    probs(s, 1) = right;
  }
  return tabular::TabularPolicy(std::move(probs));
}

MonteCarloEstimate chain_monte_carlo(const nn::PolicyNet& net, const Normalizer& normalizer,
                                     int n_states, double gamma, int episodes, int horizon,
                                     std::uint64_t seed) {
  if (episodes < 2) throw InvalidArgument("Monte-Carlo estimate needs at least 2 episodes");
  std::vector<nn::GaussianDist> dists;
  for (int s = 0; s < n_states; ++s) {
    VectorXd raw = VectorXd::Zero(n_states);
    raw[s] = 1.0;
    dists.push_back(nn::forward_policy(net, as_span(normalizer.normalize(as_span(raw)))));
  }
  envs::ChainEnv env(n_states, split_seed(seed, streams::kEnvBase), horizon);
  Rng rng = make_rng(seed, streams::kActionBase);
  RunningStats stats(1);
  for (int e = 0; e < episodes; ++e) {
    env.reset();
    double ret = 0.0;
    double discount = 1.0;
    for (;;) {
      const VectorXd a = nn::sample(dists[static_cast<std::size_t>(env.position())], rng);
      const envs::StepResult r = env.step(as_span(a));
      ret += discount * r.reward;
      discount *= gamma;
      if (r.done || r.truncated) break;
    }
    stats.update(std::span<const double>(&ret, 1));
  }
  const double n = stats.count();
  const double sample_var = stats.variance()[0] * n / (n - 1.0);
  return {stats.mean()[0], std::sqrt(sample_var / n), episodes};
}

}  // namespace trefree::trainer
