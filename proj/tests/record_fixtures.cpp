// Writes fixtures/golden.json and fixtures/chain4_mdp.json. Run once after an intentional behavior change:
//   ./build/tests/record_fixtures tests/fixtures/golden.json

#include <filesystem>
#include <fstream>
#include <iostream>

#include "golden.hpp"
#include "json.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: record_fixtures <out.json>\n";
    return 2;
  }
  nlohmann::json j;
  for (const char* env : {"pointmass", "pendulum", "chain:6"}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      j["env_returns"][env][std::to_string(seed)] = golden::env_return(env, seed);
    }
  }
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    j["rollout_hash"][std::to_string(seed)] = golden::rollout_hash(seed);
  }
  std::ofstream(argv[1]) << j.dump(2) << "\n";
  // Exported chain model, kept next to the golden values for schema checks.
  const auto dir = std::filesystem::path(argv[1]).parent_path();
  std::ofstream(dir / "chain4_mdp.json")
      << trefree::tabular::to_json(trefree::envs::ChainEnv(4, 0).export_mdp(0.9)).dump(2) << "\n";
  return 0;
}
