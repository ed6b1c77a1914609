#include "trefree/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trefree/bound_sweep.hpp"
#include "trefree/checkpoint.hpp"
#include "trefree/config.hpp"
#include "trefree/errors.hpp"
#include "trefree/gradcheck.hpp"
#include "trefree/trainer.hpp"

namespace trefree::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json bound_json(const tabular::BoundReport& r) {
  return {{"lhs", r.lhs},          {"surrogate", r.surrogate},   {"penalty", r.penalty},
          {"delta_term", r.delta_term}, {"epsilon_term", r.epsilon_term}, {"slack", r.slack()},
          {"holds", r.holds}};
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---- verify-bounds -------------------------------------------------------

struct VerifyArgs {
  tabular::SweepConfig sweep;
  std::string weighting = "discounted-sum";
  fs::path out_dir = ".";
  bool serial = false;
};

int verify_bounds(const VerifyArgs& args) {
  tabular::SweepConfig config = args.sweep;
  if (!(config.gamma >= 0.0 && config.gamma < 1.0)) {
    std::cerr << "error: --gamma must lie in [0, 1)\n";
    return kExitUsage;
  }
  config.weighting = args.weighting == "normalized" ? tabular::StateWeighting::kNormalized
                                                    : tabular::StateWeighting::kDiscountedSum;

  const auto start = std::chrono::steady_clock::now();
  const tabular::SweepSummary summary = tabular::run_bound_sweep(
      config, args.serial ? tabular::Execution::kSerial : tabular::Execution::kParallel);
  const double elapsed = seconds_since(start);

  json violating = json::array();
  for (const auto& o : summary.outcomes) {
    if (o.tv_bound.holds && o.ratio_bound.holds && o.identity_holds) continue;
    const tabular::SweepInstance inst = tabular::make_instance(config, o.index);
    json v = {{"index", o.index},
              {"value_generator", o.value_generator},
              {"mdp", tabular::to_json(inst.mdp)},
              {"pi_old", tabular::to_json(inst.pi_old)},
              {"pi_new", tabular::to_json(inst.pi_new)},
              {"tv_bound", bound_json(o.tv_bound)},
              {"ratio_bound", bound_json(o.ratio_bound)},
              {"identity", {{"lhs", o.identity.lhs}, {"rhs", o.identity.rhs}}}};
    if (inst.saf.generator_f) {
      const auto& f = *inst.saf.generator_f;
      v["f"] = std::vector<double>(f.data(), f.data() + f.size());
    }
    violating.push_back(std::move(v));
  }

  json report = {
      {"format", "trefree-bounds-report"},
      {"version", TREFREE_VERSION_STRING},
      {"config",
       {{"count", config.count},
        {"seed", config.seed},
        {"gamma", config.gamma},
        {"max_states", config.max_states},
        {"max_actions", config.max_actions},
        {"identical_policies", config.identical_policies},
        {"weighting", args.weighting}}},
      {"instances", summary.instances},
      {"value_generator_instances", summary.value_generator_instances},
      {"violations",
       {{"tv_bound", summary.tv_violations},
        {"ratio_bound", summary.ratio_violations},
        {"identity", summary.identity_violations}}},
      {"min_tv_slack", summary.min_tv_slack},
      {"min_ratio_slack", summary.min_ratio_slack},
      {"max_identity_residual", summary.max_identity_residual},
      {"seconds", elapsed},
      {"passed", summary.passed()},
      {"violating_instances", violating},
  };
  fs::create_directories(args.out_dir);
  const fs::path path = args.out_dir / "report.json";
  write_json(report, path);

  std::cout << "instances " << summary.instances << "  tv violations " << summary.tv_violations
            << "  ratio violations " << summary.ratio_violations << "  identity violations "
            << summary.identity_violations << "\n"
            << "min slack tv " << summary.min_tv_slack << "  ratio " << summary.min_ratio_slack
            << "  max identity residual " << summary.max_identity_residual << "\n"
            << "report " << path.string() << "\n";
  return summary.passed() ? kExitOk : kExitFailure;
}

// ---- train / compare -----------------------------------------------------

struct RunFlags {
  std::string env;
  std::string objective;
  double delta = 0.0;
  double eps_clip = 0.0;
  double lambda = 0.0;
  double trpo_kl = 0.0;
  std::uint64_t seed = 0;
  long long total_steps = 0;
  std::string config_path;
  std::vector<std::string> overrides;
  fs::path out_dir = "out";
  bool quiet = false;

  CLI::Option* env_opt = nullptr;
  CLI::Option* objective_opt = nullptr;
  CLI::Option* delta_opt = nullptr;
  CLI::Option* eps_opt = nullptr;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* trpo_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
};

void add_run_flags(CLI::App& app, RunFlags& f, bool with_objective, bool with_seed) {
  const trainer::TrainConfig d;
  f.env_opt = app.add_option("--env", f.env, "pointmass | pendulum | chain | chain:<n>")
                  ->default_str(d.env_name);
  if (with_objective) {
    f.objective_opt = app.add_option("--objective", f.objective, "pg | ppo | ratio-cons | trefree | trpo")
                          ->default_str("trefree");
  }
  f.delta_opt = app.add_option("--delta", f.delta, "objective-conservative cap")
                    ->default_str(std::to_string(d.objective.delta));
  f.eps_opt = app.add_option("--eps-clip", f.eps_clip, "ppo clip range")
                  ->default_str(std::to_string(d.objective.eps_clip));
  f.lambda_opt = app.add_option("--lambda", f.lambda, "ratio-conservative clip range")
                     ->default_str(std::to_string(d.objective.lambda));
  f.trpo_opt = app.add_option("--trpo-kl", f.trpo_kl, "trpo KL radius")
                   ->default_str(std::to_string(d.objective.trpo_kl));
  if (with_seed) f.seed_opt = app.add_option("--seed", f.seed, "root seed")->default_str("0");
  f.steps_opt = app.add_option("--total-steps", f.total_steps, "environment steps")
                    ->default_str(std::to_string(d.total_steps));
  app.add_option("--config", f.config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--set", f.overrides, "key=value override, applied last (repeatable)");
  app.add_option("--out-dir", f.out_dir, "output directory")->default_str(f.out_dir.string());
  app.add_flag("--quiet", f.quiet, "no per-iteration progress");
}

// Precedence: defaults < config file < dedicated flags < --set.
trainer::TrainConfig build_config(const RunFlags& f) {
  trainer::TrainConfig c;
  if (!f.config_path.empty()) config::apply(c, config::read_settings(f.config_path));
  if (f.env_opt->count()) c.env_name = f.env;
  if (f.objective_opt && f.objective_opt->count()) config::apply(c, "objective", f.objective);
  if (f.delta_opt->count()) c.objective.delta = f.delta;
  if (f.eps_opt->count()) c.objective.eps_clip = f.eps_clip;
  if (f.lambda_opt->count()) c.objective.lambda = f.lambda;
  if (f.trpo_opt->count()) c.objective.trpo_kl = f.trpo_kl;
  if (f.seed_opt && f.seed_opt->count()) c.seed = f.seed;
  if (f.steps_opt->count()) c.total_steps = f.total_steps;
  for (const auto& o : f.overrides) {
    const auto [k, v] = config::parse_override(o);
    config::apply(c, k, v);
  }
  c.validate();
  return c;
}

trainer::IterationObserver progress(bool quiet) {
  if (quiet) return {};
  return [](const trainer::IterationMetrics& m, const trainer::Trainer& t) {
    std::cout << "iter " << std::setw(4) << m.iteration + 1 << "/" << t.config().iterations()
              << "  step " << std::setw(8) << m.step << "  return " << std::setw(10)
              << std::fixed << std::setprecision(3) << m.return_mean << "  kl " << std::scientific
              << std::setprecision(2) << m.kl << "  max|log r| " << m.ratio.max_abs()
              << std::defaultfloat << std::setprecision(6) << "\n";
  };
}

void write_run(const trainer::TrainingLog& log, const fs::path& dir) {
  fs::create_directories(dir);
  trainer::write_metrics_csv(log.rows, dir / "metrics.csv");
  write_json(trainer::make_manifest(log), dir / "manifest.json");
}

int train_cmd(const RunFlags& flags) {
  const trainer::TrainConfig config = build_config(flags);
  const auto start = std::chrono::steady_clock::now();
  try {
    trainer::TrainingLog log;
    std::optional<nn::PolicyNet> final_net;
    log = trainer::train(config, [&](const trainer::IterationMetrics& m, const trainer::Trainer& t) {
      if (const auto p = progress(flags.quiet)) p(m, t);
      if (t.finished()) final_net = t.net();
    });
    write_run(log, flags.out_dir);
    if (final_net) nn::save_binary(*final_net, flags.out_dir / "policy.ckpt");
    std::cout << "final return (last 10 iterations) " << trainer::final_return(log.rows) << "\n"
              << "elapsed " << seconds_since(start) << " s\n"
              << "metrics " << (flags.out_dir / "metrics.csv").string() << "\n"
              << "manifest " << (flags.out_dir / "manifest.json").string() << "\n";
    return kExitOk;
  } catch (const trainer::TrainingAborted& e) {
    write_run(e.partial_log(), flags.out_dir);
    std::cerr << "training aborted: " << e.what() << "\n"
              << "partial metrics " << (flags.out_dir / "metrics.csv").string() << "\n";
    return kExitFailure;
  }
}

struct CompareArgs {
  RunFlags run;
  std::vector<std::string> objectives;
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

int compare_cmd(const CompareArgs& args) {
  for (const auto& name : args.objectives) objectives::objective_from_name(name);  // usage check
  const trainer::TrainConfig base = build_config(args.run);
  fs::create_directories(args.run.out_dir);

  struct Row {
    std::string objective;
    std::vector<double> finals;
    double min_log_ratio = 0.0;
    double max_log_ratio = 0.0;
  };
  std::vector<Row> rows;
  int exit_code = kExitOk;
  for (std::size_t k = 0; k < args.objectives.size(); ++k) {
    const std::string& name = args.objectives[k];
    Row row{name, {}, std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};
    for (const auto seed : args.seeds) {
      trainer::TrainConfig c = base;
      config::apply(c, "objective", name);
      c.seed = seed;
      const fs::path dir = args.run.out_dir / (std::to_string(k) + "_" + name + "_seed" + std::to_string(seed));
      try {
        const trainer::TrainingLog log = trainer::train(c, progress(args.run.quiet));
        write_run(log, dir);
        row.finals.push_back(trainer::final_return(log.rows));
        for (const auto& m : log.rows) {
          row.min_log_ratio = std::min(row.min_log_ratio, m.ratio.min_log_ratio);
          row.max_log_ratio = std::max(row.max_log_ratio, m.ratio.max_log_ratio);
        }
      } catch (const trainer::TrainingAborted& e) {
        write_run(e.partial_log(), dir);
        std::cerr << name << " seed " << seed << " aborted: " << e.what() << "\n";
        row.finals.push_back(std::numeric_limits<double>::quiet_NaN());
        exit_code = kExitFailure;
      }
    }
    rows.push_back(std::move(row));
  }

  const fs::path path = args.run.out_dir / "summary.csv";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "objective,seeds,final_return_mean,final_return_std,min_log_ratio,max_log_ratio,"
         "max_abs_log_ratio\n"
      << std::setprecision(17);
  for (const auto& r : rows) {
    const Eigen::Map<const Eigen::VectorXd> f(r.finals.data(), static_cast<Eigen::Index>(r.finals.size()));
    const double mean = f.mean();
    const double std = std::sqrt((f.array() - mean).square().mean());
    const double max_abs = std::max(std::abs(r.min_log_ratio), std::abs(r.max_log_ratio));
    out << r.objective << ',' << r.finals.size() << ',' << mean << ',' << std << ','
        << r.min_log_ratio << ',' << r.max_log_ratio << ',' << max_abs << '\n';
    std::cout << std::left << std::setw(12) << r.objective << std::right << " final return "
              << std::setw(10) << mean << " +- " << std << "  max|log r| " << max_abs << "\n";
  }
  std::cout << "summary " << path.string() << "\n";
  return exit_code;
}

// ---- grad-check ----------------------------------------------------------

struct GradArgs {
  std::uint64_t seed = 0;
  int nets = 10;
  int hidden = 16;
  int batch = 16;
  fs::path out_dir;
};

int grad_check_cmd(const GradArgs& args) {
  const objectives::GradSuiteResult suite =
      objectives::run_gradient_suite(args.seed, args.nets, args.hidden, args.batch);
  json results = json::array();
  for (const auto& r : suite.results) {
    results.push_back({{"family", r.family},
                       {"elements_checked", r.elements_checked},
                       {"elements_skipped", r.elements_skipped},
                       {"flat_samples", r.flat_samples},
                       {"flat_nonzero", r.flat_nonzero},
                       {"max_rel_error", r.max_rel_error},
                       {"passed", r.passed}});
    if (!r.passed) {
      std::cout << "FAIL " << r.family << " max rel error " << r.max_rel_error << " flat nonzero "
                << r.flat_nonzero << "\n";
    }
  }
  double worst = 0.0;
  for (const auto& r : suite.results) worst = std::max(worst, r.max_rel_error);
  std::cout << suite.results.size() << " checks, worst relative error " << worst << ", "
            << (suite.passed ? "all passed" : "FAILED") << "\n";
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    write_json({{"format", "trefree-gradcheck-report"},
                {"version", TREFREE_VERSION_STRING},
                {"seed", args.seed},
                {"nets", args.nets},
                {"hidden", args.hidden},
                {"batch", args.batch},
                {"relative_tolerance", objectives::kGradRelTolerance},
                {"passed", suite.passed},
                {"results", results}},
               args.out_dir / "report.json");
  }
  return suite.passed ? kExitOk : kExitFailure;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Trust-region-free policy optimization toolkit"};
  app.set_version_flag("--version", std::string(TREFREE_VERSION_STRING));
  app.require_subcommand(1);

  VerifyArgs verify;
  auto* vb = app.add_subcommand("verify-bounds", "randomized check of the tabular bounds");
  vb->add_option("--count", verify.sweep.count, "instances")->check(CLI::PositiveNumber)->capture_default_str();
  vb->add_option("--seed", verify.sweep.seed, "root seed")->capture_default_str();
  vb->add_option("--gamma", verify.sweep.gamma, "discount in [0, 1)")->capture_default_str();
  vb->add_option("--max-states", verify.sweep.max_states)->check(CLI::PositiveNumber)->capture_default_str();
  vb->add_option("--max-actions", verify.sweep.max_actions)->check(CLI::PositiveNumber)->capture_default_str();
  vb->add_option("--weighting", verify.weighting, "state weighting of the ratio-deviation surrogate")
      ->check(CLI::IsMember({"discounted-sum", "normalized"}))
      ->capture_default_str();
  vb->add_flag("--identical-policies", verify.sweep.identical_policies, "force new policy = old");
  vb->add_flag("--serial", verify.serial, "use the serial reference sweep");
  vb->add_option("--out-dir", verify.out_dir)->capture_default_str();

  RunFlags train;
  auto* tr = app.add_subcommand("train", "train one policy");
  add_run_flags(*tr, train, true, true);

  GradArgs grad;
  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
  gc->add_option("--seed", grad.seed)->capture_default_str();
  gc->add_option("--nets", grad.nets)->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--hidden", grad.hidden)->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--batch", grad.batch)->check(CLI::Range(2, 4096))->capture_default_str();
  gc->add_option("--out-dir", grad.out_dir, "write report.json here");

  CompareArgs cmp;
  auto* co = app.add_subcommand("compare", "several objectives on shared seeds");
  co->add_option("--objectives", cmp.objectives, "two or more objective names")
      ->required()
      ->expected(2, CLI::detail::expected_max_vector_size);
  co->add_option("--seeds", cmp.seeds, "root seeds")->capture_default_str();
  add_run_flags(*co, cmp.run, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*vb) return verify_bounds(verify);
    if (*tr) return train_cmd(train);
    if (*gc) return grad_check_cmd(grad);
    if (*co) return compare_cmd(cmp);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace trefree::cli
