#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "sdfas/errors.hpp"
#include "sdfas/metrics.hpp"

using namespace sdfas;

namespace {

ScoredSet make_set(std::vector<double> bona, std::vector<double> attack) {
  ScoredSet s;
  for (double v : bona) s.push_back({"b" + std::to_string(s.size()), v, Label::kBonaFide, "real", "x"});
  for (double v : attack) s.push_back({"a" + std::to_string(s.size()), v, Label::kAttack, "print", "x"});
  return s;
}

ScoredSet random_set(std::mt19937_64& rng, std::size_t n, int levels = 0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScoredSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const Label label = (i == 0 || (i != 1 && u(rng) < 0.4)) ? Label::kBonaFide : Label::kAttack;
    double score = u(rng) + (label == Label::kBonaFide ? 0.3 : 0.0);
    // quantized scores create ties
    if (levels > 0) score = std::floor(score * levels) / levels;
    s.push_back({"v" + std::to_string(i), score, label, u(rng) < 0.5 ? "print" : "replay", "1_1"});
  }
  return s;
}

// Probability that a random bona fide entry outscores a random attack, ties
// counting one half.
double pairwise_auc(const ScoredSet& s) {
  double wins = 0.0;
  double pairs = 0.0;
  for (const auto& p : s) {
    if (p.label != Label::kBonaFide) continue;
    for (const auto& n : s) {
      if (n.label != Label::kAttack) continue;
      pairs += 1.0;
      if (p.score > n.score) wins += 1.0;
      if (p.score == n.score) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Tries every score (and +inf) as a threshold directly.
double sweep_tpr_at_fpr(const ScoredSet& s, double target) {
  std::vector<double> thresholds{std::numeric_limits<double>::infinity()};
  for (const auto& e : s) thresholds.push_back(e.score);
  double best = 0.0;
  for (double t : thresholds) {
    double pos = 0, neg = 0, tp = 0, fp = 0;
    for (const auto& e : s) {
      const bool accept = e.score >= t;
      if (e.label == Label::kBonaFide) {
        pos += 1;
        tp += accept;
      } else {
        neg += 1;
        fp += accept;
      }
    }
    if (fp / neg <= target) best = std::max(best, tp / pos);
  }
  return best;
}

}  // namespace

TEST_CASE("rates_at examples") {
  auto r = rates_at(make_set({0.9, 0.8}, {0.1, 0.2}), 0.5);
  CHECK(r.apcer == 0.0);
  CHECK(r.bpcer == 0.0);
  CHECK(r.acer == 0.0);
  r = rates_at(make_set({1.0, 1.0}, {1.0, 1.0, 1.0}), 0.5);
  CHECK(r.apcer == 1.0);
  CHECK(r.bpcer == 0.0);
  CHECK(r.acer == 0.5);
  // ties at the threshold are accepted
  r = rates_at(make_set({0.5}, {0.5}), 0.5);
  CHECK(r.apcer == 1.0);
  CHECK(r.bpcer == 0.0);
  CHECK_THROWS_AS(rates_at(make_set({0.3}, {}), 0.5), DataError);
  CHECK_THROWS_AS(rates_at(make_set({std::nan("")}, {0.1}), 0.5), NumericError);
}

TEST_CASE("ACER identity and APCER modes") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_set(rng, 50);
    const double t = static_cast<double>(i % 11) / 10.0;
    const auto r = rates_at(s, t);
    CHECK(r.acer == (r.apcer + r.bpcer) / 2.0);
    const auto m = rates_at(s, t, ApcerMode::kMaxOverPai);
    CHECK(m.apcer >= r.apcer);
    CHECK(m.bpcer == r.bpcer);
  }
  auto s = make_set({0.9}, {0.1, 0.2});
  s.push_back({"r", 0.7, Label::kAttack, "replay", "x"});
  CHECK(rates_at(s, 0.5).apcer == doctest::Approx(1.0 / 3.0));
  CHECK(rates_at(s, 0.5, ApcerMode::kMaxOverPai).apcer == 1.0);
}

TEST_CASE("rates are invariant under monotone score transforms") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    auto s = random_set(rng, 40);
    auto t = s;
    for (auto& e : t) e.score = std::exp(3.0 * e.score) - 7.0;
    const double thr = 0.6;
    const auto a = rates_at(s, thr);
    const auto b = rates_at(t, std::exp(3.0 * thr) - 7.0);
    CHECK(a.apcer == b.apcer);
    CHECK(a.bpcer == b.bpcer);
  }
}

TEST_CASE("roc endpoints, monotonicity and AUC") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_set(rng, 5 + i % 60, i % 3 == 0 ? 10 : 0);
    const auto c = roc(s);
    REQUIRE(c.size() >= 2);
    CHECK(c.front().fpr == 0.0);
    CHECK(c.front().tpr == 0.0);
    CHECK(c.back().fpr == 1.0);
    CHECK(c.back().tpr == 1.0);
    for (std::size_t k = 1; k < c.size(); ++k) {
      CHECK(c[k].fpr >= c[k - 1].fpr);
      CHECK(c[k].tpr >= c[k - 1].tpr);
      CHECK(c[k].threshold < c[k - 1].threshold);
    }
  }
  for (int i = 0; i < 20; ++i) {
    const auto s = random_set(rng, 200, i % 2 ? 20 : 0);
    CHECK(std::abs(auc(roc(s)) - pairwise_auc(s)) <= 1e-9);
  }
}

TEST_CASE("roc special cases") {
  const auto sep = roc(make_set({0.9, 0.8}, {0.1, 0.2}));
  bool corner = false;
  for (const auto& p : sep) corner = corner || (p.fpr == 0.0 && p.tpr == 1.0);
  CHECK(corner);
  CHECK(tpr_at_fpr(sep, 0.01) == 1.0);
  CHECK(auc(sep) == 1.0);

  const auto flat = roc(make_set({0.5, 0.5}, {0.5, 0.5, 0.5}));
  std::vector<std::pair<double, double>> distinct;
  for (const auto& p : flat)
    if (distinct.empty() || distinct.back() != std::make_pair(p.fpr, p.tpr)) distinct.emplace_back(p.fpr, p.tpr);
  CHECK(distinct == std::vector<std::pair<double, double>>{{0.0, 0.0}, {1.0, 1.0}});
  CHECK(tpr_at_fpr(flat, 0.01) == 0.0);
  CHECK_THROWS_AS(roc(make_set({}, {0.2})), DataError);
}

TEST_CASE("tpr_at_fpr matches an exhaustive threshold sweep") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 3; ++i) {
    const auto s = random_set(rng, i == 0 ? 10000 : 300, i == 2 ? 25 : 0);
    const auto c = roc(s);
    for (double target : {1e-3, 1e-2, 0.05, 0.1, 0.3}) CHECK(tpr_at_fpr(c, target) == sweep_tpr_at_fpr(s, target));
    double prev = 0.0;
    for (double target = 0.001; target < 1.0; target += 0.01) {
      const double v = tpr_at_fpr(c, target);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("aggregate uses the sample standard deviation") {
  // Protocol 1 sub-protocol results of the reference method, in percent.
  const std::vector<Rates> p1{{0.005, 0.008, 0.006}, {0.048, 0.040, 0.044}, {0.012, 0.018, 0.015}};
  const auto a = aggregate(p1);
  CHECK(a.count == 3);
  CHECK(format_percent(a.acer) == "2.2±2.0");
  CHECK(format_percent(a.apcer) == "2.2±2.3");
  CHECK(format_percent(a.bpcer) == "2.2±1.6");
  CHECK(a.acer.mean == doctest::Approx(0.065 / 3.0));

  const std::vector<Rates> one{{0.1, 0.2, 0.15}};
  CHECK(aggregate(one).acer.std == 0.0);
  const std::vector<Rates> same(4, Rates{0.1, 0.3, 0.2});
  CHECK(aggregate(same).acer.std == 0.0);
  CHECK(aggregate(same).acer.mean == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(aggregate(std::vector<Rates>{}), DataError);
}

TEST_CASE("score files round trip") {
  std::mt19937_64 rng(5);
  const auto s = random_set(rng, 30);
  std::stringstream ss;
  write_scores(ss, s);
  const auto back = read_scores(ss);
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back[i].score == s[i].score);
    CHECK(back[i].label == s[i].label);
    CHECK(back[i].pai == s[i].pai);
    CHECK(back[i].video_id == s[i].video_id);
  }
  std::stringstream bad("video_id,score,label,pai,subprotocol\nv1,0.5,2,print,1_1\n");
  CHECK_THROWS_AS(read_scores(bad), DataError);
  std::stringstream nohdr("v1,0.5,1,real,1_1\n");
  CHECK_THROWS_AS(read_scores(nohdr), DataError);
}
