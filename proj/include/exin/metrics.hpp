#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace exin {

// Confusion counts over integer labels. The label universe is exactly the set
// of labels that appear in at least one (gold, pred) pair, so a sentinel label
// (e.g. "invalid" = -1) only affects the macro average when it actually occurs.
struct ConfusionTally {
  std::map<std::pair<int, int>, int64_t> counts;  // (gold, pred) -> n
  void add(int gold, int pred, int64_t n = 1) { counts[{gold, pred}] += n; }
  std::vector<int> labels() const;  // ascending
  int64_t total() const;
};

struct MacroPrf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Macro-averaged precision/recall/F1. Per label: P = TP/(TP+FP),
// R = TP/(TP+FN), F1 = 2PR/(P+R); every 0/0 is defined as 0. The macro value
// is the unweighted mean over the label universe, iterated in ascending label
// order (the summation order is part of the contract so results are
// reproducible bit-for-bit).
MacroPrf macro_prf(const ConfusionTally& tally);

// Unigram BLEU: clipped unigram precision times the brevity penalty
// (1 when |cand| >= |ref|, else exp(1 - |ref|/|cand|)). Empty candidate -> 0.
double bleu1(const std::vector<int>& candidate, const std::vector<int>& reference);

// ROUGE-L F-measure (beta = 1) from the longest common subsequence:
// P = LCS/|cand|, R = LCS/|ref|, F = 2PR/(P+R), 0/0 -> 0.
double rouge_l(const std::vector<int>& candidate, const std::vector<int>& reference);

// Simplified METEOR on exact unigram matches. m = multiset-intersection size;
// P = m/|cand|, R = m/|ref|; F_mean = 10PR/(R+9P); penalty =
// 0.5 * (chunks/m)^3 where chunks counts maximal runs that are contiguous in
// BOTH sequences under the greedy alignment that maps each candidate token
// (left to right) to the earliest unused reference position of the same
// token. Score = F_mean * (1 - penalty); m = 0 -> 0.
double meteor_basic(const std::vector<int>& candidate, const std::vector<int>& reference);

// Aggregated evaluation report with pinned field names.
struct MetricReport {
  double f1_macro = 0.0;
  double recall_macro = 0.0;
  double precision_macro = 0.0;
  double bleu1 = 0.0;
  double rouge_l = 0.0;
  double meteor_basic = 0.0;
  std::string to_json(int indent = 2) const;
};

}  // namespace exin
