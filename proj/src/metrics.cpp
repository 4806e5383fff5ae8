#include "sdfas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

#include "sdfas/errors.hpp"
#include "sdfas/text.hpp"

namespace sdfas {
namespace {

void require_both_classes(const ScoredSet& set, const char* what) {
  bool bona = false, attack = false;
  for (const auto& e : set) {
    if (!std::isfinite(e.score)) throw NumericError(std::string(what) + ": non-finite score for " + e.video_id);
    (e.label == Label::kBonaFide ? bona : attack) = true;
  }
  if (!bona || !attack) throw DataError(std::string(what) + ": need both bona fide and attack entries");
}

}  // namespace

Rates rates_at(const ScoredSet& set, double threshold, ApcerMode mode) {
  require_both_classes(set, "rates_at");
  std::size_t bona = 0, bona_rejected = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_pai;  // (accepted, total)
  std::size_t attacks = 0, attacks_accepted = 0;
  for (const auto& e : set) {
    const bool accepted = e.score >= threshold;
    if (e.label == Label::kBonaFide) {
      ++bona;
      if (!accepted) ++bona_rejected;
    } else {
      ++attacks;
      auto& p = per_pai[e.pai];
      ++p.second;
      if (accepted) {
        ++attacks_accepted;
        ++p.first;
      }
    }
  }
  Rates r;
  if (mode == ApcerMode::kPooled) {
    r.apcer = static_cast<double>(attacks_accepted) / static_cast<double>(attacks);
  } else {
    for (const auto& [pai, c] : per_pai)
      r.apcer = std::max(r.apcer, static_cast<double>(c.first) / static_cast<double>(c.second));
  }
  r.bpcer = static_cast<double>(bona_rejected) / static_cast<double>(bona);
  r.acer = (r.apcer + r.bpcer) / 2.0;
  return r;
}

std::vector<RocPoint> roc(const ScoredSet& set) {
  require_both_classes(set, "roc");
  std::vector<std::pair<double, bool>> sorted;  // (score, bona fide)
  std::size_t pos = 0, neg = 0;
  for (const auto& e : set) {
    const bool bona = e.label == Label::kBonaFide;
    sorted.emplace_back(e.score, bona);
    (bona ? pos : neg) += 1;
  }
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<RocPoint> curve{{inf, 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double thr = sorted[i].first;
    for (; i < sorted.size() && sorted[i].first == thr; ++i) (sorted[i].second ? tp : fp) += 1;
    curve.push_back({thr, static_cast<double>(fp) / static_cast<double>(neg),
                     static_cast<double>(tp) / static_cast<double>(pos)});
  }
  curve.push_back({-inf, 1.0, 1.0});
  return curve;
}

double auc(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  return area;
}

double tpr_at_fpr(std::span<const RocPoint> curve, double target) {
  double best = 0.0;
  for (const auto& p : curve)
    if (p.fpr <= target) best = std::max(best, p.tpr);
  return best;
}

MetricReport evaluate(const ScoredSet& set, double threshold, std::span<const double> fpr_targets, ApcerMode mode) {
  MetricReport r;
  r.threshold = threshold;
  for (const auto& e : set) (e.label == Label::kBonaFide ? r.bona_fide : r.attacks) += 1;
  r.rates = rates_at(set, threshold, mode);
  const auto curve = roc(set);
  r.auc = auc(curve);
  for (double t : fpr_targets) r.tpr_at.emplace_back(t, tpr_at_fpr(curve, t));
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw DataError("mean_std: no values");
  MeanStd out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

Aggregate aggregate(std::span<const Rates> reports) {
  if (reports.empty()) throw DataError("aggregate: no reports");
  std::vector<double> a, b, c;
  for (const auto& r : reports) {
    a.push_back(r.apcer);
    b.push_back(r.bpcer);
    c.push_back(r.acer);
  }
  return Aggregate{reports.size(), mean_std(a), mean_std(b), mean_std(c)};
}

std::string format_percent(const MeanStd& v, int decimals) {
  return format_fixed(100.0 * v.mean, decimals) + "±" + format_fixed(100.0 * v.std, decimals);
}

void write_scores(std::ostream& os, const ScoredSet& set) {
  os << "video_id,score,label,pai,subprotocol\n";
  for (const auto& e : set)
    os << e.video_id << ',' << format_double(e.score) << ',' << static_cast<int>(e.label) << ',' << e.pai << ','
       << e.subprotocol << '\n';
}

ScoredSet read_scores(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != "video_id,score,label,pai,subprotocol")
    throw DataError("score file: missing header 'video_id,score,label,pai,subprotocol'");
  ScoredSet out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    const std::string where = "score file line " + std::to_string(lineno);
    if (f.size() != 5) throw DataError(where + ": expected 5 fields");
    ScoredEntry e;
    e.video_id = f[0];
    e.score = parse_double(f[1], where + " score");
    if (!std::isfinite(e.score)) throw NumericError(where + ": non-finite score");
    const auto label = parse_int(f[2], where + " label");
    if (label != 0 && label != 1) throw DataError(where + ": label must be 0 or 1");
    e.label = static_cast<Label>(label);
    e.pai = f[3];
    e.subprotocol = f[4];
    out.push_back(std::move(e));
  }
  return out;
}

void save_scores(const std::filesystem::path& path, const ScoredSet& set) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  write_scores(os, set);
  if (!os) throw DataError("write failed: " + path.string());
}

ScoredSet load_scores(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_scores(is);
}

}  // namespace sdfas
