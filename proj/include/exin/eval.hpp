#pragma once
#include <iosfwd>
#include <set>
#include <string>

#include "exin/config.hpp"
#include "exin/metrics.hpp"

namespace exin {

// Aggregate outcome of one evaluation pass over a corpus split.
struct EvalResult {
  MetricReport metrics;   // over all evaluated items
  MacroPrf closed;        // classification metrics over the closed-mode items
  int64_t items = 0;
  int64_t closed_items = 0;
  int64_t open_items = 0;
  int64_t invalid_predictions = 0;
  // fusion-gate statistics (gated models only; NaN-free zeros otherwise)
  bool has_alpha = false;
  double alpha_lesion_mean = 0.0;
  double alpha_nonlesion_mean = 0.0;
  double alpha_gap = 0.0;
  std::string report_path;
};

const std::set<std::string>& eval_keys();

// Evaluate the checkpoint named in the config on one corpus split, writing
// predictions.jsonl and eval_report.json under the output directory. The
// worker count only shards the item loop; results are merged in item order,
// so every worker count produces identical artifacts.
EvalResult eval_run(const Config& cfg, std::ostream& log);

}  // namespace exin
