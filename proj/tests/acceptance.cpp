// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 1 4 10     run a subset
//
// Exit status is 0 only if every selected criterion passes.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "trefree/bound_sweep.hpp"
#include "trefree/envs.hpp"
#include "trefree/gradcheck.hpp"
#include "trefree/nn.hpp"
#include "trefree/objectives.hpp"
#include "trefree/tabular.hpp"
#include "trefree/trainer.hpp"
#include "trefree/trpo.hpp"

using namespace trefree;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kBoundTol = 1e-9;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

nlohmann::json fixture() {
  std::ifstream in(std::string(TREFREE_FIXTURE_DIR) + "/acceptance.json");
  if (!in) throw std::runtime_error("missing fixture acceptance.json");
  return nlohmann::json::parse(in);
}

double max_abs_log_ratio(const std::vector<trainer::IterationMetrics>& rows) {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.ratio.max_abs());
  return m;
}

// ---- tabular bounds

struct TimedSweep {
  tabular::SweepSummary summary;
  double seconds = 0.0;
};

TimedSweep sweep() {
  tabular::SweepConfig c;  // 1000 instances, |S| <= 5, |A| <= 3, gamma 0.9
  const auto t0 = std::chrono::steady_clock::now();
  TimedSweep out{tabular::run_bound_sweep(c, tabular::Execution::kParallel), 0.0};
  out.seconds = seconds_since(t0);
  return out;
}

Verdict bound_criterion(bool ratio) {
  const TimedSweep s = sweep();
  int violations = 0;
  double min_slack = INFINITY;
  for (const auto& o : s.summary.outcomes) {
    const double slack = ratio ? o.ratio_bound.slack() : o.tv_bound.slack();
    min_slack = std::min(min_slack, slack);
    if (slack < -kBoundTol) ++violations;
  }
  const bool pass = s.summary.instances == 1000 && violations == 0 && s.seconds < 30.0;
  return {pass, fmt("%d instances, %d violations, min slack %.3g, %.2f s", s.summary.instances,
                    violations, min_slack, s.seconds)};
}

Verdict c1_ratio_bound() { return bound_criterion(true); }
Verdict c2_tv_bound() { return bound_criterion(false); }

Verdict c3_identity() {
  const TimedSweep s = sweep();
  int violations = 0, non_value = 0;
  double worst = 0.0;
  for (const auto& o : s.summary.outcomes) {
    const double r = std::abs(o.identity.lhs - o.identity.rhs);
    worst = std::max(worst, r);
    if (r > kBoundTol) ++violations;
    if (!o.value_generator) ++non_value;
  }
  const bool pass = s.summary.instances == 1000 && violations == 0 && non_value >= 100;
  return {pass, fmt("%d instances (%d with f != V), %d violations, max residual %.3g",
                    s.summary.instances, non_value, violations, worst)};
}

// ---- gradients

Verdict c4_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const objectives::GradSuiteResult suite = objectives::run_gradient_suite(0, 10, 16, 16);
  std::map<std::string, double> worst;
  int flat_nonzero = 0, flat = 0, failed = 0;
  for (const auto& r : suite.results) {
    worst[r.family] = std::max(worst[r.family], r.max_rel_error);
    flat += r.flat_samples;
    flat_nonzero += r.flat_nonzero;
    if (!r.passed || r.elements_checked == 0) ++failed;
  }
  bool pass = suite.passed && failed == 0 && flat_nonzero == 0 && worst.size() == 7 &&
              suite.results.size() == 70;
  std::ostringstream os;
  os << suite.results.size() << " checks, " << failed << " failed, flat samples " << flat
     << " (nonzero " << flat_nonzero << "), worst rel err:";
  for (const auto& [family, e] : worst) {
    os << ' ' << family << '=' << fmt("%.2g", e);
    pass = pass && e <= 1e-5;
  }
  os << fmt(", %.1f s", seconds_since(t0));
  return {pass, os.str()};
}

// ---- training runs shared by the clamp and learning criteria

trainer::TrainConfig learning_config(std::uint64_t seed) {
  const auto fx = fixture().at("learning");
  trainer::TrainConfig c;  // objective-conservative, delta 0.01, defaults
  c.env_name = fx.at("env").get<std::string>();
  c.total_steps = fx.at("total_steps").get<long long>();
  c.seed = seed;
  return c;
}

struct LearningRun {
  trainer::TrainingLog log;
  double seconds = 0.0;
};

std::map<std::uint64_t, LearningRun>& learning_cache() {
  static std::map<std::uint64_t, LearningRun> cache;
  return cache;
}

// Runs single-threaded so the timing reflects one core.
const LearningRun& learning_run(std::uint64_t seed) {
  auto& cache = learning_cache();
  if (auto it = cache.find(seed); it != cache.end()) return it->second;
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto t0 = std::chrono::steady_clock::now();
  LearningRun run{trainer::train(learning_config(seed)), 0.0};
  run.seconds = seconds_since(t0);
  omp_set_num_threads(threads);
  return cache.emplace(seed, std::move(run)).first->second;
}

Verdict c5_clamp() {
  const double delta = trainer::TrainConfig{}.objective.delta;
  const LearningRun& run = learning_run(0);
  const bool pass = run.log.terms_above_delta == 0 && run.log.max_policy_term <= delta &&
                    run.log.config.objective.kind == objectives::ObjectiveKind::kObjectiveConservative;
  return {pass, fmt("%zu iterations, %lld terms above delta=%g, largest term %.6g",
                    run.log.rows.size(), run.log.terms_above_delta, delta, run.log.max_policy_term)};
}

Verdict c9_learning() {
  const auto fx = fixture().at("learning");
  const double threshold = fx.at("min_final_return").get<double>();
  const int window = fx.at("window").get<int>();
  const double max_seconds = fx.at("max_seconds_per_run").get<double>();
  bool pass = true;
  std::ostringstream os;
  os << "threshold " << threshold << ";";
  for (const auto seed : fx.at("seeds").get<std::vector<std::uint64_t>>()) {
    const LearningRun& run = learning_run(seed);
    const double ret = trainer::final_return(run.log.rows, window);
    const long long steps = run.log.rows.empty() ? 0 : run.log.rows.back().step;
    const bool ok = ret >= threshold && steps <= fx.at("total_steps").get<long long>() &&
                    run.seconds < max_seconds;
    pass = pass && ok;
    os << fmt(" seed %llu: %.2f (%lld steps, %.0f s, 1 thread)%s", static_cast<unsigned long long>(seed),
              ret, steps, run.seconds, ok ? "" : " FAILED");
  }
  return {pass, os.str()};
}

// ---- degeneracy of an unbounded cap

Verdict c6_unbounded_delta() {
  trainer::TrainConfig base;
  base.total_steps = 5 * base.batch_size();
  trainer::TrainConfig pg = base, capped = base;
  pg.objective = objectives::objective_from_name("pg");
  capped.objective.delta = 1e18;
  trainer::Trainer a(pg), b(capped);
  double worst = 0.0;
  int iterations = 0;
  while (!a.finished() && !b.finished()) {
    a.run_iteration();
    b.run_iteration();
    worst = std::max(worst, (a.net().values() - b.net().values()).cwiseAbs().maxCoeff());
    ++iterations;
  }
  const bool pass = iterations == 5 && a.finished() && b.finished() && worst <= 1e-10;
  return {pass, fmt("%d iterations, max parameter difference %.3g", iterations, worst)};
}

// ---- TRPO

Verdict c7_trpo() {
  trainer::TrainConfig c;
  c.objective = objectives::objective_from_name("trpo");
  c.total_steps = 20 * c.batch_size();
  const double radius = c.objective.trpo_kl;
  int accepted = 0, bad = 0;
  double max_kl = 0.0, min_gain = INFINITY;
  trainer::train(c, [&](const trainer::IterationMetrics& m, const trainer::Trainer&) {
    if (!m.trpo_accepted) return;
    ++accepted;
    max_kl = std::max(max_kl, m.trpo_kl);
    min_gain = std::min(min_gain, m.trpo_improvement);
    if (m.trpo_kl > radius + 1e-8 || m.trpo_improvement < 0.0) ++bad;
  });

  // Dense solve on a tiny net: F from per-output reverse passes, then (F + damping I) x = g.
  const nn::NetShape shape{2, 1, 8};
  Rng rng = make_rng(7, 1);
  nn::PolicyNet net = nn::PolicyNet::initialized(shape, rng);
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (auto& p : net.values()) p += jitter(rng);
  const objectives::Minibatch b = objectives::random_minibatch(net, rng, 4, 0.0);
  const auto n = static_cast<Eigen::Index>(net.size());
  MatrixXd fisher = MatrixXd::Zero(n, n);
  for (int i = 0; i < b.size(); ++i) {
    const VectorXd obs = b.obs.row(i).transpose();
    const auto cache = nn::forward(net, {obs.data(), static_cast<std::size_t>(obs.size())});
    const VectorXd jm = nn::backward(net, cache, {VectorXd::Ones(1), VectorXd::Zero(1), 0.0}).values();
    const VectorXd js = nn::backward(net, cache, {VectorXd::Zero(1), VectorXd::Ones(1), 0.0}).values();
    const double var = std::exp(2.0 * cache.log_std[0]);
    fisher += (jm * jm.transpose() / var + 2.0 * js * js.transpose()) / b.size();
  }
  objectives::LossSpec pg;
  pg.policy = objectives::PolicyTerm::kPg;
  pg.value_coef = 0.0;
  const VectorXd g = -objectives::evaluate_loss(net, b, pg).grad.values();
  const double damping = objectives::TrpoOptions{}.damping;
  const VectorXd dense = (fisher + damping * MatrixXd::Identity(n, n)).ldlt().solve(g);
  const objectives::LinearOperator op = [&](const VectorXd& x) -> VectorXd {
    return objectives::fisher_vector_product(net, b, x) + damping * x;
  };
  const objectives::CgResult cg =
      objectives::conjugate_gradient(op, g, objectives::TrpoOptions{}.cg_iters);
  const double cg_err = (cg.x - dense).cwiseAbs().maxCoeff();

  const bool pass = accepted > 0 && bad == 0 && cg_err <= 1e-6;
  return {pass, fmt("%d/20 steps accepted, %d out of contract, max KL %.3g (radius %g), min gain %.3g; "
                    "CG vs dense max diff %.3g",
                    accepted, bad, max_kl, radius, min_gain, cg_err)};
}

// ---- ratio spread, objective-conservative vs PPO

Verdict c8_ratio_spread() {
  bool pass = true;
  std::ostringstream os;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    double spread[2];
    int k = 0;
    for (const char* name : {"trefree", "ppo"}) {
      trainer::TrainConfig c;
      c.objective = objectives::objective_from_name(name);
      c.total_steps = 50 * c.batch_size();
      c.seed = seed;
      spread[k++] = max_abs_log_ratio(trainer::train(c).rows);
    }
    const bool ok = spread[0] <= spread[1];
    pass = pass && ok;
    os << fmt("%sseed %llu: trefree %.4f vs ppo %.4f%s", seed ? "; " : "",
              static_cast<unsigned long long>(seed), spread[0], spread[1], ok ? "" : " FAILED");
  }
  return {pass, "max |log ratio| " + os.str()};
}

// ---- chain cross-check

Verdict c10_chain() {
  trainer::TrainConfig c;
  c.env_name = "chain:5";
  c.gamma = 0.9;
  c.total_steps = 10 * c.batch_size();
  c.seed = 3;
  trainer::Trainer t(c);
  while (!t.finished()) t.run_iteration();

  const int n = 5;
  const tabular::TabularPolicy pi = trainer::chain_policy(t.net(), t.normalizer(), n);
  const envs::ChainEnv chain(n, 0);
  const double exact = tabular::performance(chain.export_mdp(c.gamma), pi);
  // gamma^300 ~ 2e-14: truncation bias is far below the standard error.
  const trainer::MonteCarloEstimate mc =
      trainer::chain_monte_carlo(t.net(), t.normalizer(), n, c.gamma, 20000, 300, 11);
  const double z = std::abs(mc.mean - exact) / mc.std_error;
  const bool pass = mc.std_error > 0.0 && z <= 3.0;
  return {pass, fmt("exact %.5f, Monte Carlo %.5f +- %.5f over %d episodes (%.2f SE), P(right) %.3f..%.3f",
                    exact, mc.mean, mc.std_error, mc.episodes, z, pi.probs().col(1).minCoeff(),
                    pi.probs().col(1).maxCoeff())};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "ratio-deviation bound over 1000 random instances", c1_ratio_bound},
      {2, "total-variation bound over 1000 random instances", c2_tv_bound},
      {3, "performance-difference identity", c3_identity},
      {4, "analytic vs finite-difference gradients", c4_gradients},
      {5, "per-sample objective terms capped at delta", c5_clamp},
      {6, "delta = 1e18 tracks plain policy gradient", c6_unbounded_delta},
      {7, "TRPO step contract and CG vs dense solve", c7_trpo},
      {8, "ratio spread: objective cap vs PPO clip", c8_ratio_spread},
      {9, "pointmass learning within 200k steps", c9_learning},
      {10, "chain: tabular performance vs Monte Carlo", c10_chain},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    ++ran;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("criterion %2d %s  %s  [%s] (%.1f s)\n", c.id, v.pass ? "PASS" : "FAIL", c.name,
                v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
