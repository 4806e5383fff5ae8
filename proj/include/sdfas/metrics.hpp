#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sdfas/netgraph.hpp"

namespace sdfas {

// One scored presentation. Scores are liveness probabilities: higher means
// more likely bona fide.
struct ScoredEntry {
  std::string video_id;
  double score = 0.0;
  Label label = Label::kAttack;
  std::string pai;  // attack instrument ("real" for bona fide)
  std::string subprotocol;
};
using ScoredSet = std::vector<ScoredEntry>;

struct Rates {
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
};

enum class ApcerMode { kPooled, kMaxOverPai };

// Scores >= threshold are classified bona fide.
Rates rates_at(const ScoredSet& set, double threshold, ApcerMode mode = ApcerMode::kPooled);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// Bona fide is the positive class. Thresholds run from +inf through every
// distinct score (descending) to -inf, so the curve starts at (0,0) and ends
// at (1,1).
std::vector<RocPoint> roc(const ScoredSet& set);
double auc(std::span<const RocPoint> curve);
// Best TPR among operating points with FPR <= target; no interpolation.
double tpr_at_fpr(std::span<const RocPoint> curve, double target);

struct MetricReport {
  std::string name;
  std::size_t bona_fide = 0, attacks = 0;
  double threshold = 0.5;
  Rates rates;
  double auc = 0.0;
  std::vector<std::pair<double, double>> tpr_at;  // (target fpr, tpr)
};

MetricReport evaluate(const ScoredSet& set, double threshold, std::span<const double> fpr_targets,
                      ApcerMode mode = ApcerMode::kPooled);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

struct Aggregate {
  std::size_t count = 0;
  MeanStd apcer, bpcer, acer;
};
Aggregate aggregate(std::span<const Rates> reports);

// "2.2±2.0" with rates given as fractions and printed as percentages.
std::string format_percent(const MeanStd& v, int decimals = 1);

// Score files: header `video_id,score,label,pai,subprotocol`, label 1 for
// bona fide and 0 for attack, scores in shortest round-trip decimal form.
void write_scores(std::ostream& os, const ScoredSet& set);
ScoredSet read_scores(std::istream& is);
void save_scores(const std::filesystem::path& path, const ScoredSet& set);
ScoredSet load_scores(const std::filesystem::path& path);

}  // namespace sdfas
