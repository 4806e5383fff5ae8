#include "sdfas/selftest.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>

#include "sdfas/datasyn.hpp"
#include "sdfas/dynimg.hpp"
#include "sdfas/gradcheck.hpp"
#include "sdfas/metrics.hpp"
#include "sdfas/netgraph.hpp"
#include "sdfas/protocols.hpp"
#include "sdfas/text.hpp"

namespace sdfas {

namespace {

std::vector<Tensor> random_means(std::mt19937_64& rng, std::size_t k, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Tensor> frames;
  for (std::size_t i = 0; i < k; ++i) {
    Tensor t({dim});
    for (auto& v : t.data()) v = n(rng);
    frames.push_back(std::move(t));
  }
  return prefix_mean(std::span<const Tensor>(frames));
}

SelfCheck rank_pool_vs_oracle() {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  const std::vector<Tensor> hand{Tensor({1}, {0.0}), Tensor({1}, {0.5}), Tensor({1}, {1.0})};
  RankPoolConfig cfg;
  cfg.window = 3;
  const double d = rank_pool_fit(hand, cfg).d[0];
  for (int i = 0; i < 12; ++i) {
    cfg.window = 3 + 2 * (i % 3);
    const auto means = random_means(rng, cfg.window, 1 + i % 2);
    worst = std::max(worst, max_abs_diff(rank_pool_fit(means, cfg).d, rank_pool_oracle(means).d));
  }
  const bool ok = worst <= 1e-3 && std::abs(d - 2.0 / 3.0) <= 1e-3;
  return {"", ok,
          "max |d - oracle| " + format_double(worst) + ", V=[0,0.5,1] gives " + format_double(d)};
}

SelfCheck rank_pool_symmetry() {
  std::mt19937_64 rng(2);
  RankPoolConfig cfg;
  bool ok = true;
  for (int i = 0; i < 40 && ok; ++i) {
    cfg.window = 3 + i % 5;
    const auto means = random_means(rng, cfg.window, 3);
    const auto fit = rank_pool_fit(means, cfg);
    std::vector<Tensor> neg, shifted;
    for (const auto& m : means) {
      neg.push_back(-m);
      shifted.push_back(m + Tensor({3}, 5.0));
    }
    ok = max_abs_diff(rank_pool_fit(neg, cfg).d, -fit.d) <= 1e-6 &&
         max_abs_diff(rank_pool_fit(shifted, cfg).d, fit.d) <= 1e-8;
    for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
      ok = ok && fit.objective_trace[k] <= fit.objective_trace[k - 1];
    const std::vector<Tensor> flat(cfg.window, Tensor({3}, 1.5));
    ok = ok && max_abs(rank_pool_fit(flat, cfg).d) == 0.0;
  }
  return {"", ok, "negation, shift, constant window, monotone objective"};
}

void randomize(Network& net, std::uint64_t seed) {
  net.init_parameters(seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& p : net.graph().parameters())
    if (p.value.rank() < 4)
      for (auto& v : p.value.data()) v = p.value.rank() == 1 ? 0.1 + 0.1 * n(rng) : 0.5 * n(rng);
}

NetInputs random_inputs(std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  NetInputs in;
  for (auto m : kAllModalities) {
    Tensor s({modality_channels(m), size, size}), d({modality_channels(m), size, size});
    for (auto& v : s.data()) v = u(rng);
    for (auto& v : d.data()) v = u(rng);
    in[m] = {s, d};
  }
  return in;
}

SelfCheck gradients() {
  const auto spec = BackboneSpec::tiny();
  double worst = 0.0;
  for (auto variant : {FusionVariant::kSdnetOnly, FusionVariant::kPsmm}) {
    Network net = variant == FusionVariant::kSdnetOnly ? build_sdnet(spec, Modality::kColor)
                                                        : build_psmm(spec, FusionVariant::kPsmm);
    randomize(net, 3);
    net.set_inputs(random_inputs(spec.input_size, 4), Label::kBonaFide);
    worst = std::max(worst, grad_check(net.graph(), net.total_loss(), 1e-5).max_rel_error);
  }
  return {"", worst <= 1e-4, "max relative error " + format_double(worst)};
}

SelfCheck fusion_identities() {
  const auto spec = BackboneSpec::tiny();
  const auto in = random_inputs(spec.input_size, 5);
  Network psmm = build_psmm(spec, FusionVariant::kPsmm);
  psmm.forward(in, Label::kAttack);
  Network sd = build_sdnet(spec, Modality::kDepth);
  sd.forward(in, Label::kAttack);
  const double ln2 = std::numbers::ln2;
  const auto st = psmm.fusion_state();
  const bool ok = std::abs(psmm.losses().total - 13 * ln2) <= 1e-12 && std::abs(sd.losses().total - 4 * ln2) <= 1e-12 &&
                  max_abs(st.shared[1]) == 0.0;
  return {"", ok, "zero-head losses 13 ln 2 and 4 ln 2, S[1] = 0"};
}

SelfCheck protocol_counts() {
  const auto manifest = synth_manifest(SynthConfig::canonical());
  const auto split = build_split(manifest, "1_1");
  const auto report = validate_split(split);
  const bool ok = report.ok() && report.train.real == 600 && report.train.fake == 1800 && report.test_3d == 5538;
  return {"", ok,
          "train " + std::to_string(report.train.real) + " real / " + std::to_string(report.train.fake) + " fake"};
}

SelfCheck metric_aggregate() {
  const std::vector<Rates> p1{{0.005, 0.008, 0.006}, {0.048, 0.040, 0.044}, {0.012, 0.018, 0.015}};
  const auto a = aggregate(p1);
  const std::string acer = format_percent(a.acer);
  return {"", acer == "2.2±2.0", "ACER " + acer};
}

SelfCheck synthetic_print_is_static() {
  SynthConfig cfg;
  cfg.frame_size = 16;
  ManifestEntry e{1, Ethnicity::kAfrica, Modality::kColor, AttackType::kPrintIndoor, 1, "x"};
  const auto clip = render_clip(cfg, e);
  const double d = max_abs(dynamic_image_at(clip, clip.frames.size() - 1, RankPoolConfig{}).d);
  e.attack = AttackType::kReal;
  const auto real = render_clip(cfg, e);
  const double r = max_abs(dynamic_image_at(real, real.frames.size() - 1, RankPoolConfig{}).d);
  return {"", d == 0.0 && r > 0.0,
          "print " + format_double(d) + ", real " + format_double(r)};
}

}  // namespace

std::vector<SelfCheck> run_selftest(std::ostream* log) {
  const std::vector<std::pair<const char*, std::function<SelfCheck()>>> checks{
      {"rank pooling matches the grid oracle", rank_pool_vs_oracle},   {"rank pooling symmetries", rank_pool_symmetry},
      {"finite-difference gradients (SD-Net, PSMM)", gradients},                    {"fusion identities", fusion_identities},
      {"protocol 1_1 on the canonical manifest", protocol_counts},        {"metric aggregation", metric_aggregate},
      {"synthetic print clip has a zero dynamic image", synthetic_print_is_static}};
  std::vector<SelfCheck> out;
  for (const auto& check : checks) {
    SelfCheck r;
    try {
      r = check.second();
    } catch (const std::exception& e) {
      r.detail = std::string("error: ") + e.what();
    }
    r.name = check.first;
    if (log) *log << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n" << std::flush;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace sdfas
