#include "exin/metrics.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

namespace exin {

std::vector<int> ConfusionTally::labels() const {
  std::set<int> s;
  for (const auto& [key, n] : counts) {
    if (n == 0) continue;
    s.insert(key.first);
    s.insert(key.second);
  }
  return {s.begin(), s.end()};
}

int64_t ConfusionTally::total() const {
  int64_t t = 0;
  for (const auto& [key, n] : counts) t += n;
  return t;
}

namespace {
double ratio0(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
}  // namespace

MacroPrf macro_prf(const ConfusionTally& tally) {
  const std::vector<int> labels = tally.labels();
  if (labels.empty()) return {};
  double sp = 0.0, sr = 0.0, sf = 0.0;
  for (int c : labels) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (const auto& [key, n] : tally.counts) {
      const auto [gold, pred] = key;
      if (gold == c && pred == c) tp += n;
      else if (gold != c && pred == c) fp += n;
      else if (gold == c && pred != c) fn += n;
    }
    const double p = ratio0(static_cast<double>(tp), static_cast<double>(tp + fp));
    const double r = ratio0(static_cast<double>(tp), static_cast<double>(tp + fn));
    const double f = ratio0(2.0 * p * r, p + r);
    sp += p;
    sr += r;
    sf += f;
  }
  const double k = static_cast<double>(labels.size());
  return {sp / k, sr / k, sf / k};
}

double bleu1(const std::vector<int>& candidate, const std::vector<int>& reference) {
  if (candidate.empty()) return 0.0;
  std::map<int, int64_t> ref_counts;
  for (int w : reference) ref_counts[w] += 1;
  std::map<int, int64_t> cand_counts;
  for (int w : candidate) cand_counts[w] += 1;
  int64_t clipped = 0;
  for (const auto& [w, n] : cand_counts) {
    const auto it = ref_counts.find(w);
    if (it != ref_counts.end()) clipped += std::min(n, it->second);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double precision = static_cast<double>(clipped) / c;
  const double bp = (c >= r) ? 1.0 : std::exp(1.0 - r / c);
  return precision * bp;
}

double rouge_l(const std::vector<int>& candidate, const std::vector<int>& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const size_t n = candidate.size(), m = reference.size();
  std::vector<int64_t> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      if (candidate[i - 1] == reference[j - 1]) cur[j] = prev[j - 1] + 1;
      else cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[m]);
  const double p = lcs / static_cast<double>(n);
  const double r = lcs / static_cast<double>(m);
  return ratio0(2.0 * p * r, p + r);
}

double meteor_basic(const std::vector<int>& candidate, const std::vector<int>& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;

  // greedy alignment: each candidate token takes the earliest unused
  // reference position holding the same token
  std::map<int, std::vector<size_t>> ref_positions;
  for (size_t j = 0; j < reference.size(); ++j) ref_positions[reference[j]].push_back(j);
  std::map<int, size_t> next_slot;
  std::vector<int64_t> match_ref(candidate.size(), -1);  // ref index or -1
  int64_t m = 0;
  for (size_t i = 0; i < candidate.size(); ++i) {
    auto it = ref_positions.find(candidate[i]);
    if (it == ref_positions.end()) continue;
    size_t& slot = next_slot[candidate[i]];
    if (slot >= it->second.size()) continue;
    match_ref[i] = static_cast<int64_t>(it->second[slot]);
    ++slot;
    ++m;
  }
  if (m == 0) return 0.0;

  const double p = static_cast<double>(m) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(m) / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);

  // chunks: maximal runs of matched candidate tokens whose reference
  // positions are consecutive as well
  int64_t chunks = 0;
  int64_t prev_ref = -2;
  bool in_chunk = false;
  for (size_t i = 0; i < candidate.size(); ++i) {
    if (match_ref[i] < 0) {
      in_chunk = false;
      prev_ref = -2;
      continue;
    }
    if (!in_chunk || match_ref[i] != prev_ref + 1) ++chunks;
    in_chunk = true;
    prev_ref = match_ref[i];
  }

  const double frag = static_cast<double>(chunks) / static_cast<double>(m);
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

std::string MetricReport::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["f1_macro"] = f1_macro;
  j["recall_macro"] = recall_macro;
  j["precision_macro"] = precision_macro;
  j["bleu1"] = bleu1;
  j["rouge_l"] = rouge_l;
  j["meteor_basic"] = meteor_basic;
  return j.dump(indent);
}

}  // namespace exin
