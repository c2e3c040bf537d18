#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "exin/metrics.hpp"
#include "exin/rng.hpp"

using namespace exin;

namespace {

// independent re-derivation of macro PRF, written from the definition
MacroPrf macro_prf_reference(const ConfusionTally& tally) {
  std::set<int> label_set;
  for (const auto& [key, n] : tally.counts)
    if (n != 0) {
      label_set.insert(key.first);
      label_set.insert(key.second);
    }
  if (label_set.empty()) return {};
  double sp = 0.0, sr = 0.0, sf = 0.0;
  for (int c : label_set) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& [key, n] : tally.counts) {
      if (key.first == c && key.second == c) tp += static_cast<double>(n);
      if (key.first != c && key.second == c) fp += static_cast<double>(n);
      if (key.first == c && key.second != c) fn += static_cast<double>(n);
    }
    const double p = (tp + fp) == 0.0 ? 0.0 : tp / (tp + fp);
    const double r = (tp + fn) == 0.0 ? 0.0 : tp / (tp + fn);
    const double f = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    sp += p;
    sr += r;
    sf += f;
  }
  const double k = static_cast<double>(label_set.size());
  return {sp / k, sr / k, sf / k};
}

}  // namespace

TEST_CASE("macro PRF hand cases") {
  {
    // gold = [0,0], pred = [0,1]
    // label 0: TP=1 FP=0 FN=1 -> P=1,   R=1/2, F=2/3
    // label 1: TP=0 FP=1 FN=0 -> P=0,   R=0,   F=0
    ConfusionTally t;
    t.add(0, 0);
    t.add(0, 1);
    MacroPrf m = macro_prf(t);
    CHECK(m.precision == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  {
    // perfect predictions over three labels -> exactly 1.0
    ConfusionTally t;
    t.add(0, 0, 5);
    t.add(1, 1, 2);
    t.add(7, 7, 1);
    MacroPrf m = macro_prf(t);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  {
    // a never-predicted, never-golded label does not exist for the average;
    // the sentinel "invalid" label (-1) only counts when it appears
    ConfusionTally t;
    t.add(0, 0, 3);
    t.add(1, -1, 1);  // one unparseable prediction
    MacroPrf m = macro_prf(t);
    // labels {-1, 0, 1}: P(-1)=0, P(0)=1, P(1)=0 -> 1/3
    CHECK(m.precision == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  {
    // all wrong -> all zeros; empty tally -> zeros
    ConfusionTally t;
    t.add(0, 1, 4);
    MacroPrf m = macro_prf(t);
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);
    CHECK(macro_prf(ConfusionTally{}).f1 == 0.0);
  }
  {
    // asymmetric two-label case, worked by hand:
    // counts: (0,0)=2 (0,1)=2 (1,0)=6 (1,1)=2
    // label 0: TP=2 FP=6 FN=2 -> P=1/4, R=1/2, F=2*(1/8)/(3/4)=1/3
    // label 1: TP=2 FP=2 FN=6 -> P=1/2, R=1/4, F=1/3
    ConfusionTally t;
    t.add(0, 0, 2);
    t.add(0, 1, 2);
    t.add(1, 0, 6);
    t.add(1, 1, 2);
    MacroPrf m = macro_prf(t);
    CHECK(m.precision == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("macro PRF matches a from-definition reference on 1000 random tallies") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionTally t;
    const int labels = 2 + static_cast<int>(rng.index(7));
    const int pairs = 1 + static_cast<int>(rng.index(40));
    for (int i = 0; i < pairs; ++i) {
      int gold = static_cast<int>(rng.index(labels));
      int pred = static_cast<int>(rng.index(labels + 1));  // may emit unseen label
      if (pred == labels) pred = -1;                       // sentinel
      t.add(gold, pred, 1 + rng.index(5));
    }
    const MacroPrf got = macro_prf(t);
    const MacroPrf want = macro_prf_reference(t);
    CHECK(got.precision == want.precision);
    CHECK(got.recall == want.recall);
    CHECK(got.f1 == want.f1);
  }
}

TEST_CASE("bleu1 hand oracles") {
  using V = std::vector<int>;
  // "a a a" vs "a b": clipped count min(3,1)=1, precision 1/3, no brevity hit
  CHECK(bleu1(V{5, 5, 5}, V{5, 6}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // identical -> 1
  CHECK(bleu1(V{1, 2, 3}, V{1, 2, 3}) == 1.0);
  // short candidate: precision 1, BP = exp(1 - 3/1)
  CHECK(bleu1(V{2}, V{2, 3, 4}) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  // disjoint -> 0; empty candidate -> 0
  CHECK(bleu1(V{9, 9}, V{1, 2}) == 0.0);
  CHECK(bleu1(V{}, V{1}) == 0.0);
  // order-insensitive at n=1
  CHECK(bleu1(V{3, 2, 1}, V{1, 2, 3}) == 1.0);
}

TEST_CASE("rouge_l hand oracles") {
  using V = std::vector<int>;
  // "a c" vs "a b c": LCS 2, P=1, R=2/3, F=0.8
  CHECK(rouge_l(V{1, 3}, V{1, 2, 3}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(rouge_l(V{1, 2, 3}, V{1, 2, 3}) == 1.0);
  // reversal: LCS("c b a", "a b c") = 1; P=R=1/3, F=1/3
  CHECK(rouge_l(V{3, 2, 1}, V{1, 2, 3}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(rouge_l(V{7}, V{1, 2}) == 0.0);
  CHECK(rouge_l(V{}, V{1}) == 0.0);
  // classic interleave: LCS("a b c d", "a c b d") = 3 -> P=R=3/4
  CHECK(rouge_l(V{1, 2, 3, 4}, V{1, 3, 2, 4}) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("meteor_basic hand oracles") {
  using V = std::vector<int>;
  // identical 3-gram: m=3, F=1, one chunk -> 1 - 0.5*(1/3)^3
  CHECK(meteor_basic(V{1, 2, 3}, V{1, 2, 3}) ==
        doctest::Approx(1.0 - 0.5 / 27.0).epsilon(1e-12));
  // single token exact match: penalty 0.5 -> score 0.5
  CHECK(meteor_basic(V{4}, V{4}) == doctest::Approx(0.5).epsilon(1e-12));
  // rotated: matches map to ref positions 2,0,1 -> runs (2) and (0,1), so
  // chunks=2, penalty 0.5*(2/3)^3 = 4/27, F_mean = 1
  CHECK(meteor_basic(V{3, 1, 2}, V{1, 2, 3}) ==
        doctest::Approx(1.0 - 4.0 / 27.0).epsilon(1e-12));
  // half coverage: cand "a x", ref "a b": m=1, P=R=1/2, F=10*(1/4)/(5)=0.5,
  // chunks=1 -> penalty 0.5 -> 0.25
  CHECK(meteor_basic(V{1, 9}, V{1, 2}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(meteor_basic(V{9}, V{1}) == 0.0);
  CHECK(meteor_basic(V{}, V{1}) == 0.0);
  // two chunks: cand "a b d c", ref "a b c d": matches all 4, ref positions
  // 0,1,3,2 -> runs (0,1),(3),(2) = 3 chunks; F_mean=1 -> 1 - 0.5*(3/4)^3
  CHECK(meteor_basic(V{1, 2, 4, 3}, V{1, 2, 3, 4}) ==
        doctest::Approx(1.0 - 0.5 * 27.0 / 64.0).epsilon(1e-12));
}

TEST_CASE("text metrics live in [0,1] on random pairs") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> a, b;
    const int la = 1 + static_cast<int>(rng.index(8));
    const int lb = 1 + static_cast<int>(rng.index(8));
    for (int i = 0; i < la; ++i) a.push_back(static_cast<int>(rng.index(5)));
    for (int i = 0; i < lb; ++i) b.push_back(static_cast<int>(rng.index(5)));
    for (double v : {bleu1(a, b), rouge_l(a, b), meteor_basic(a, b)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    // identity always scores at least as high as a random pairing on ROUGE
    CHECK(rouge_l(a, a) == 1.0);
  }
}

TEST_CASE("metric report serializes with pinned field names") {
  MetricReport rep;
  rep.f1_macro = 0.5;
  rep.bleu1 = 0.25;
  const std::string j = rep.to_json();
  for (const char* key :
       {"f1_macro", "recall_macro", "precision_macro", "bleu1", "rouge_l", "meteor_basic"})
    CHECK(j.find(std::string("\"") + key + "\"") != std::string::npos);
  CHECK(j.find("0.5") != std::string::npos);
  CHECK(j.find("0.25") != std::string::npos);
}
