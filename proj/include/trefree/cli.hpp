#pragma once

// Command-line front end.
//
//   trefree verify-bounds  randomized tabular bound/identity sweep -> report.json
//   trefree train          one training run -> metrics.csv, manifest.json, policy.ckpt
//   trefree grad-check     analytic vs finite-difference gradients -> report.json
//   trefree compare        several objectives on shared seeds -> summary.csv
//
// Exit codes are a stable contract.

namespace trefree::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // property violation or aborted run
inline constexpr int kExitUsage = 2;    // bad flags, bad config, unknown names

int run(int argc, char** argv);

}  // namespace trefree::cli
