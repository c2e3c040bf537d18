#pragma once
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "exin/config.hpp"

namespace exin {

// One trained-and-evaluated cell of the ablation grid.
struct AblationRun {
  std::string variant;
  uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double closed_f1 = 0.0;
  double closed_precision = 0.0;
  double closed_recall = 0.0;
  double alpha_gap = 0.0;
  bool has_alpha = false;
};

struct AblationVerdict {
  std::string name;
  bool pass = false;
  double observed = 0.0;   // the measured margin/difference
  double required = 0.0;   // the threshold it was held to
};

struct AblationResult {
  std::vector<AblationRun> runs;          // variant-major, then seed
  std::vector<AblationVerdict> verdicts;  // empty when any run failed
  bool complete = false;                  // all runs finished
  bool ordering_holds = false;            // every verdict passed
  std::string report_path;
};

const std::set<std::string>& ablate_keys();

// Train and evaluate the five-variant ladder (baseline, add, gated,
// gated_direct, gated_adapt) for every seed in the plan, then check the
// expected ordering of closed-question macro F1 with the required margins.
// A failed variant run is recorded and the remaining runs still execute.
AblationResult ablate_run(const Config& cfg, std::ostream& log);

}  // namespace exin
