#include "trefree/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "trefree/errors.hpp"

namespace trefree::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw InvalidArgument("config key '" + std::string(key) + "': cannot parse '" +
                        std::string(value) + "' as " + std::string(want));
}

double to_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a number");
  return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view value) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "a boolean");
}

using Setter = std::function<void(trainer::TrainConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  using C = trainer::TrainConfig;
  static const std::map<std::string, Setter, std::less<>> table = {
      {"env", [](C& c, auto, auto v) { c.env_name = std::string(v); }},
      {"total_steps", [](C& c, auto k, auto v) { c.total_steps = to_int<long long>(k, v); }},
      {"n_actors", [](C& c, auto k, auto v) { c.n_actors = to_int<int>(k, v); }},
      {"steps_per_actor", [](C& c, auto k, auto v) { c.steps_per_actor = to_int<int>(k, v); }},
      {"epochs", [](C& c, auto k, auto v) { c.epochs = to_int<int>(k, v); }},
      {"minibatch_size", [](C& c, auto k, auto v) { c.minibatch_size = to_int<int>(k, v); }},
      {"gamma", [](C& c, auto k, auto v) { c.gamma = to_double(k, v); }},
      {"gae_lambda", [](C& c, auto k, auto v) { c.gae_lambda = to_double(k, v); }},
      {"lr_start", [](C& c, auto k, auto v) { c.lr_start = to_double(k, v); }},
      {"lr_end", [](C& c, auto k, auto v) { c.lr_end = to_double(k, v); }},
      {"objective",
       [](C& c, auto, auto v) {
         // Keep numeric settings made earlier; only the kind changes.
         const auto named = objectives::objective_from_name(v);
         c.objective.kind = named.kind;
         c.objective.min_form_clip = named.min_form_clip;
       }},
      {"delta", [](C& c, auto k, auto v) { c.objective.delta = to_double(k, v); }},
      {"lambda", [](C& c, auto k, auto v) { c.objective.lambda = to_double(k, v); }},
      {"eps_clip", [](C& c, auto k, auto v) { c.objective.eps_clip = to_double(k, v); }},
      {"trpo_kl", [](C& c, auto k, auto v) { c.objective.trpo_kl = to_double(k, v); }},
      {"value_coef", [](C& c, auto k, auto v) { c.objective.value_coef = to_double(k, v); }},
      {"entropy_coef", [](C& c, auto k, auto v) { c.objective.entropy_coef = to_double(k, v); }},
      {"seed", [](C& c, auto k, auto v) { c.seed = to_int<std::uint64_t>(k, v); }},
      {"normalize_obs", [](C& c, auto k, auto v) { c.normalize_obs = to_bool(k, v); }},
      {"normalize_rew", [](C& c, auto k, auto v) { c.normalize_rew = to_bool(k, v); }},
      {"normalize_adv", [](C& c, auto k, auto v) { c.normalize_adv = to_bool(k, v); }},
      {"hidden", [](C& c, auto k, auto v) { c.hidden = to_int<int>(k, v); }},
  };
  return table;
}

}  // namespace

std::vector<Setting> parse_settings(std::string_view text, std::string_view origin) {
  std::vector<Setting> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument(std::string(origin) + ":" + std::to_string(line_no) +
                            ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw InvalidArgument(std::string(origin) + ":" + std::to_string(line_no) +
                            ": empty key or value");
    }
    out.emplace_back(std::string(key), std::string(value));
  }
  return out;
}

std::vector<Setting> read_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str(), path.string());
}

Setting parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw InvalidArgument("override '" + std::string(text) + "' is not key=value");
  }
  const auto key = trim(text.substr(0, eq));
  const auto value = trim(text.substr(eq + 1));
  if (key.empty() || value.empty()) {
    throw InvalidArgument("override '" + std::string(text) + "' has an empty key or value");
  }
  return {std::string(key), std::string(value)};
}

void apply(trainer::TrainConfig& config, std::string_view key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw InvalidArgument("unknown config key '" + std::string(key) + "'");
  it->second(config, key, value);
}

void apply(trainer::TrainConfig& config, const std::vector<Setting>& settings) {
  for (const auto& [k, v] : settings) apply(config, k, v);
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : setters()) out.push_back(k);
  return out;
}

nlohmann::json to_json(const trainer::TrainConfig& c) {
  return {
      {"env", c.env_name},
      {"total_steps", c.total_steps},
      {"n_actors", c.n_actors},
      {"steps_per_actor", c.steps_per_actor},
      {"epochs", c.epochs},
      {"minibatch_size", c.minibatch_size},
      {"gamma", c.gamma},
      {"gae_lambda", c.gae_lambda},
      {"lr_start", c.lr_start},
      {"lr_end", c.lr_end},
      {"objective", std::string(objectives::to_string(c.objective))},
      {"delta", c.objective.delta},
      {"lambda", c.objective.lambda},
      {"eps_clip", c.objective.eps_clip},
      {"trpo_kl", c.objective.trpo_kl},
      {"value_coef", c.objective.value_coef},
      {"entropy_coef", c.objective.entropy_coef},
      {"seed", c.seed},
      {"normalize_obs", c.normalize_obs},
      {"normalize_rew", c.normalize_rew},
      {"normalize_adv", c.normalize_adv},
      {"hidden", c.hidden},
  };
}

}  // namespace trefree::config
