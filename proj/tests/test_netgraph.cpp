#include <cmath>
#include <random>

#include "doctest.h"
#include "sdfas/errors.hpp"
#include "sdfas/gradcheck.hpp"
#include "sdfas/netgraph.hpp"
#include "support.hpp"

using namespace sdfas;
using namespace sdfas::testing;

namespace {

const double kLn2 = std::log(2.0);

bool all_zero(const Tensor& t) {
  for (double v : t.data())
    if (v != 0.0) return false;
  return true;
}

bool is_xf(const Network& net, std::size_t id) {
  for (auto m : net.config().modalities)
    for (int t = 1; t <= 4; ++t)
      if (net.nodes(m).xf[t].id == id) return true;
  return false;
}

}  // namespace

TEST_CASE("parsing of variants, branch sets and modality strings") {
  CHECK(parse_variant("psmm-wobf") == FusionVariant::kPsmmWobf);
  CHECK(variant_name(FusionVariant::kNhf) == "nhf");
  CHECK_THROWS_AS(parse_variant("concat"), UsageError);
  CHECK(parse_branch_set("sd") == BranchSet::kStaticDynamic);
  CHECK_THROWS_AS(parse_branch_set("x"), UsageError);
  CHECK(parse_modalities("ir") == std::vector<Modality>{Modality::kColor, Modality::kIr});
  CHECK(parse_modalities("IDR").size() == 3);
  CHECK(modalities_string(parse_modalities("dr")) == "rd");
  CHECK_THROWS_AS(parse_modalities("rr"), UsageError);
  CHECK_THROWS_AS(parse_modalities("x"), UsageError);
  CHECK_THROWS_AS(parse_modalities(""), UsageError);
}

TEST_CASE("backbone validation and level sizes") {
  auto spec = BackboneSpec::desk();
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.level_size(1) == 16);
  CHECK(spec.level_size(2) == 8);
  CHECK(spec.level_size(4) == 2);
  spec.kernel = 2;
  CHECK_THROWS_AS(spec.validate(), UsageError);
  spec = BackboneSpec::desk();
  spec.widths[2] = 0;
  CHECK_THROWS_AS(build_sdnet(spec, Modality::kColor), UsageError);
}

TEST_CASE("sdnet: structure, shapes and zero-head losses") {
  const auto spec = BackboneSpec::desk();
  auto net = build_sdnet(spec, Modality::kColor);
  const auto& g = net.graph();

  for (const auto& p : g.parameters()) {
    if (p.name.rfind("color/fused/", 0) != 0) continue;
    CHECK(p.name.find("/stem") == std::string::npos);
    CHECK(p.name.find("/l1/") == std::string::npos);
  }
  CHECK(g.find("color/fused/l2/conv1.w").valid());
  CHECK_FALSE(g.find("whole/head.w").valid());

  NetConfig cfg;
  cfg.backbone = spec;
  const auto in = random_inputs(cfg.backbone.input_size, 1);
  net.forward(in, Label::kBonaFide);
  const auto& n = net.nodes(Modality::kColor);
  for (int t = 1; t <= 4; ++t) {
    const auto s = spec.level_size(t);
    CHECK(g.value(n.xs[t]).shape() == Shape{spec.widths[t - 1], s, s});
    CHECK(g.value(n.xf[t]).shape() == g.value(n.xd[t]).shape());
  }
  CHECK(g.value(n.xf[1]) == g.value(n.xs[1]) + g.value(n.xd[1]));

  const auto l = net.losses();
  const auto& c = l.per_modality.at(Modality::kColor);
  CHECK(c.s == doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(std::abs(l.total - 4 * kLn2) <= 1e-12);
  CHECK_FALSE(l.whole.has_value());
  CHECK(net.score() == 0.5);
  CHECK(all_zero(net.aggregate_logits()));
}

TEST_CASE("sdnet: zero inputs and zero biases give zero features") {
  auto net = build_sdnet(BackboneSpec::desk(), Modality::kDepth);
  NetInputs in;
  const auto s = net.config().backbone.input_size;
  in[Modality::kDepth] = {Tensor({1, s, s}), Tensor({1, s, s})};
  net.forward(in, Label::kAttack);
  const auto st = net.fusion_state();
  for (int t = 1; t <= 4; ++t) {
    CHECK(all_zero(st.modality.at(Modality::kDepth).xs[t]));
    CHECK(all_zero(st.modality.at(Modality::kDepth).xf[t]));
  }
}

TEST_CASE("sdnet: dynamic-input perturbation leaves the static loss unchanged") {
  auto net = build_sdnet(BackboneSpec::tiny(), Modality::kColor);
  randomize(net, 3);
  NetConfig cfg;
  cfg.backbone = BackboneSpec::tiny();
  auto in = random_inputs(cfg.backbone.input_size, 4);
  net.forward(in, Label::kAttack);
  const auto before = net.losses().per_modality.at(Modality::kColor);
  in[Modality::kColor].dynamic_img = random_inputs(cfg.backbone.input_size, 5).at(Modality::kColor).dynamic_img;
  net.forward(in, Label::kAttack);
  const auto after = net.losses().per_modality.at(Modality::kColor);
  CHECK(after.s == before.s);
  CHECK(after.d != before.d);
  CHECK(after.f != before.f);
  CHECK(after.sdf != before.sdf);
}

TEST_CASE("sdnet_loss and psmm_loss arithmetic") {
  ModalityLogits zero{Tensor::vector({0, 0}), Tensor::vector({0, 0}), Tensor::vector({0, 0}),
                      Tensor::vector({0, 0})};
  const auto l = sdnet_loss(zero, Label::kAttack);
  CHECK(std::abs(l.total - 4 * kLn2) <= 1e-12);
  ModalityLogits confident{Tensor::vector({-50, 50}), Tensor::vector({-50, 50}), Tensor::vector({-50, 50}),
                           Tensor::vector({-50, 50})};
  CHECK(sdnet_loss(confident, Label::kBonaFide).total < 1e-20);

  std::map<Modality, ModalityLogits> all{{Modality::kColor, zero}, {Modality::kDepth, zero}, {Modality::kIr, zero}};
  const auto b = psmm_loss(all, Tensor::vector({0, 0}), Label::kBonaFide);
  CHECK(std::abs(b.total - 13 * kLn2) <= 1e-12);
}

TEST_CASE("psmm: loss additivity is exact and zero heads give 13 ln 2") {
  NetConfig cfg;
  cfg.backbone = BackboneSpec::desk();
  auto net = build_network(cfg);
  const auto in = random_inputs(cfg.backbone.input_size, 7);
  net.forward(in, Label::kAttack);
  auto l = net.losses();
  CHECK(std::abs(l.total - 13 * kLn2) <= 1e-12);
  CHECK(net.score() == 0.5);

  randomize(net, 8);
  net.forward(in, Label::kAttack);
  l = net.losses();
  double total = *l.whole;
  for (auto m : kAllModalities) {
    const auto& c = l.per_modality.at(m);
    CHECK(c.total == c.s + c.d + c.f + c.sdf);
    CHECK(c.s >= 0.0);
    total += c.total;
  }
  CHECK(l.total == total);
  const auto recomputed = psmm_loss(net.modality_logits(), net.whole_logits(), Label::kAttack);
  CHECK(recomputed.total == l.total);
  CHECK(recomputed.per_modality.at(Modality::kIr).total == l.per_modality.at(Modality::kIr).total);
}

TEST_CASE("psmm: S[1] is zero and S~[t] sums pre-fusion maps") {
  NetConfig cfg;
  cfg.backbone = BackboneSpec::desk();
  auto net = build_network(cfg);
  randomize(net, 9);
  net.forward(random_inputs(cfg.backbone.input_size, 10), Label::kBonaFide);
  const auto st = net.fusion_state();
  CHECK(all_zero(st.shared[1]));
  CHECK_FALSE(all_zero(st.shared_input[1]));

  for (int t = 1; t <= 3; ++t) {
    Tensor expect(st.shared_input[t].shape());
    for (auto m : kAllModalities) expect = expect + st.modality.at(m).xs[t];
    for (auto m : kAllModalities) expect = expect + st.modality.at(m).xd[t];
    if (t > 1) expect = expect + st.shared[t];
    CHECK(expect == st.shared_input[t]);
  }
  for (int t = 2; t <= 3; ++t)
    for (auto m : kAllModalities) {
      CHECK(st.modality.at(m).xs_fused[t] == st.modality.at(m).xs[t] + st.shared[t]);
      CHECK(st.modality.at(m).xd_fused[t] == st.modality.at(m).xd[t] + st.shared[t]);
    }
  int shared_levels = 0;
  for (int t = 1; t <= 4; ++t)
    if (net.graph().find("shared/l" + std::to_string(t) + "/conv1.w").valid()) ++shared_levels;
  CHECK(shared_levels == 3);
}

TEST_CASE("psmm: single modality uses one static and one dynamic map") {
  auto net = build_psmm(BackboneSpec::tiny(), FusionVariant::kPsmm, {Modality::kIr});
  randomize(net, 11);
  NetConfig cfg;
  cfg.backbone = BackboneSpec::tiny();
  net.forward(random_inputs(cfg.backbone.input_size, 12), Label::kAttack);
  const auto st = net.fusion_state();
  const auto& b = st.modality.at(Modality::kIr);
  for (int t = 2; t <= 3; ++t) CHECK(st.shared_input[t] == (b.xs[t] + b.xd[t]) + st.shared[t]);
}

TEST_CASE("psmm: static-dynamic features never reach the shared sums") {
  for (auto v : {FusionVariant::kPsmm, FusionVariant::kPsmmWobf}) {
    auto net = build_psmm(BackboneSpec::tiny(), v);
    const auto& sh = net.shared_nodes();
    std::vector<NodeRef> sinks{sh.s_tilde[1], sh.s_tilde[2], sh.s_tilde[3]};
    for (auto m : kAllModalities)
      for (int t = 2; t <= 3; ++t) {
        if (net.nodes(m).xs_fused[t].valid()) sinks.push_back(net.nodes(m).xs_fused[t]);
        if (net.nodes(m).xd_fused[t].valid()) sinks.push_back(net.nodes(m).xd_fused[t]);
      }
    if (v == FusionVariant::kPsmm) CHECK(sinks.size() == 3 + 12);
    if (v == FusionVariant::kPsmmWobf) CHECK(sinks.size() == 3);
    for (auto sink : sinks) {
      const auto mask = net.graph().ancestors(sink);
      for (std::size_t id = 0; id < mask.size(); ++id)
        if (mask[id]) CHECK_FALSE(is_xf(net, id));
    }
  }
}

TEST_CASE("psmm-wobf: no shared feature flows back into modality branches") {
  auto net = build_psmm(BackboneSpec::tiny(), FusionVariant::kPsmmWobf);
  const auto& g = net.graph();
  for (auto m : kAllModalities) {
    const auto& n = net.nodes(m);
    for (int t = 2; t <= 4; ++t) {
      CHECK_FALSE(g.depends_on(n.xs[4], net.shared_nodes().s[t]));
      CHECK_FALSE(g.depends_on(n.loss, net.shared_nodes().s[t]));
    }
  }
  auto full = build_psmm(BackboneSpec::tiny(), FusionVariant::kPsmm);
  CHECK(full.graph().depends_on(full.nodes(Modality::kColor).xs[4], full.shared_nodes().s[3]));
}

TEST_CASE("psmm: shared level 4 feeds only the whole-network head") {
  NetConfig cfg;
  cfg.backbone = BackboneSpec::tiny();
  auto net = build_network(cfg);
  randomize(net, 13);
  net.set_inputs(random_inputs(cfg.backbone.input_size, 14), Label::kBonaFide);
  net.graph().forward();
  for (auto m : kAllModalities) {
    net.graph().backward(net.nodes(m).loss);
    for (const auto& p : net.graph().parameters())
      if (p.name.rfind("shared/l4/", 0) == 0) CHECK(all_zero(p.grad));
  }
  net.graph().backward(net.total_loss());
  CHECK_FALSE(all_zero(net.graph().parameter("shared/l4/conv2.w").grad));
  CHECK_FALSE(all_zero(net.graph().parameter("shared/l2/conv1.w").grad));
}

TEST_CASE("psmm with a silent shared branch reproduces standalone SD-Nets") {
  NetConfig cfg;
  cfg.backbone = BackboneSpec::desk();
  auto psmm = build_network(cfg);
  randomize(psmm, 15);
  // A strongly negative bias on the last shared conv of levels 2 and 3 makes
  // S[2] and S[3] exactly zero after the ReLU.
  for (int t = 2; t <= 3; ++t) psmm.graph().parameter("shared/l" + std::to_string(t) + "/conv2.b").value.fill(-1e6);
  const auto in = random_inputs(cfg.backbone.input_size, 16);
  psmm.forward(in, Label::kAttack);
  const auto st = psmm.fusion_state();
  CHECK(all_zero(st.shared[2]));
  CHECK(all_zero(st.shared[3]));
  const auto logits = psmm.modality_logits();

  for (auto m : kAllModalities) {
    auto sd = build_sdnet(cfg.backbone, m);
    for (auto& p : sd.graph().parameters()) p.value = psmm.graph().parameter(p.name).value;
    NetInputs one{{m, in.at(m)}};
    sd.forward(one, Label::kAttack);
    const auto ref = sd.modality_logits().at(m);
    CHECK(*ref.s == *logits.at(m).s);
    CHECK(*ref.d == *logits.at(m).d);
    CHECK(*ref.f == *logits.at(m).f);
    CHECK(*ref.sdf == *logits.at(m).sdf);
  }
}

TEST_CASE("sdnet-only variant on one modality matches build_sdnet") {
  auto a = build_sdnet(BackboneSpec::tiny(), Modality::kIr);
  auto b = build_psmm(BackboneSpec::tiny(), FusionVariant::kSdnetOnly, {Modality::kIr});
  REQUIRE(a.graph().node_count() == b.graph().node_count());
  for (std::size_t i = 0; i < a.graph().node_count(); ++i) {
    const auto& x = a.graph().nodes()[i];
    const auto& y = b.graph().nodes()[i];
    CHECK(x.kind == y.kind);
    CHECK(x.inputs == y.inputs);
    CHECK(x.shape == y.shape);
  }
}

TEST_CASE("nhf: one fusion point after level 1 and a single head") {
  auto net = build_psmm(BackboneSpec::tiny(), FusionVariant::kNhf);
  const auto& g = net.graph();
  CHECK_FALSE(g.find("color/static/l2/conv1.w").valid());
  CHECK_FALSE(g.find("color/head_s.w").valid());
  CHECK(g.find("shared/l2/conv1.w").valid());
  NetConfig cfg;
  cfg.backbone = BackboneSpec::tiny();
  net.forward(random_inputs(cfg.backbone.input_size, 1), Label::kAttack);
  CHECK(std::abs(net.losses().total - kLn2) <= 1e-12);
  CHECK(net.losses().per_modality.empty());
}

TEST_CASE("single-branch networks") {
  NetConfig cfg;
  cfg.backbone = BackboneSpec::tiny();
  for (auto b : {BranchSet::kStatic, BranchSet::kDynamic}) {
    auto net = build_sdnet(cfg.backbone, Modality::kColor, b);
    net.forward(random_inputs(cfg.backbone.input_size, 2), Label::kBonaFide);
    CHECK(std::abs(net.losses().total - kLn2) <= 1e-12);
    CHECK(net.score() == 0.5);
    CHECK_FALSE(net.graph().find("color/fused/l2/conv1.w").valid());
  }
}

TEST_CASE("missing modality input and wrong shapes are errors") {
  NetConfig cfg;
  cfg.backbone = BackboneSpec::tiny();
  auto net = build_network(cfg);
  auto in = random_inputs(cfg.backbone.input_size, 3);
  in.erase(Modality::kDepth);
  CHECK_THROWS_AS(net.forward(in, Label::kAttack), DataError);
  in = random_inputs(cfg.backbone.input_size, 3);
  in[Modality::kColor].static_img = Tensor({1, 8, 8});
  CHECK_THROWS_AS(net.forward(in, Label::kAttack), ShapeError);
}

TEST_CASE("init is keyed on parameter names") {
  auto a = build_sdnet(BackboneSpec::desk(), Modality::kColor);
  auto b = build_psmm(BackboneSpec::desk(), FusionVariant::kPsmm);
  a.init_parameters(5);
  b.init_parameters(5);
  for (const auto& p : a.graph().parameters()) CHECK(p.value == b.graph().parameter(p.name).value);
  CHECK(all_zero(a.graph().parameter("color/head_sdf.w").value));
  CHECK_FALSE(all_zero(a.graph().parameter("color/static/l3/conv2.w").value));
  b.init_parameters(6);
  CHECK_FALSE(b.graph().parameter("color/static/stem.w").value == a.graph().parameter("color/static/stem.w").value);
}

TEST_CASE("gradient check of tiny networks") {
  NetConfig cfg;
  cfg.backbone = BackboneSpec::tiny();
  for (auto v : {FusionVariant::kSdnetOnly, FusionVariant::kNhf, FusionVariant::kPsmmWobf, FusionVariant::kPsmm}) {
    cfg.variant = v;
    cfg.modalities = v == FusionVariant::kSdnetOnly ? std::vector<Modality>{Modality::kColor}
                                                    : std::vector<Modality>{kAllModalities.begin(), kAllModalities.end()};
    auto net = build_network(cfg);
    randomize(net, 20);
    net.set_inputs(random_inputs(cfg.backbone.input_size, 21), Label::kBonaFide);
    const auto rep = grad_check(net.graph(), net.total_loss(), 1e-5);
    INFO(variant_name(v), " worst ", rep.worst_parameter);
    CHECK(rep.max_rel_error <= 1e-4);
  }
}
