#include "sdfas/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sdfas/errors.hpp"

namespace sdfas {

std::string_view variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::kSdnetOnly: return "sdnet";
    case FusionVariant::kNhf: return "nhf";
    case FusionVariant::kPsmmWobf: return "psmm-wobf";
    case FusionVariant::kPsmm: return "psmm";
  }
  throw UsageError("unknown fusion variant");
}

FusionVariant parse_variant(std::string_view text) {
  for (auto v : {FusionVariant::kSdnetOnly, FusionVariant::kNhf, FusionVariant::kPsmmWobf, FusionVariant::kPsmm})
    if (variant_name(v) == text) return v;
  throw UsageError("unknown fusion variant '" + std::string(text) + "' (expected sdnet, nhf, psmm-wobf or psmm)");
}

std::string_view branch_set_name(BranchSet b) {
  switch (b) {
    case BranchSet::kStatic: return "s";
    case BranchSet::kDynamic: return "d";
    case BranchSet::kStaticDynamic: return "sd";
  }
  throw UsageError("unknown branch set");
}

BranchSet parse_branch_set(std::string_view text) {
  for (auto b : {BranchSet::kStatic, BranchSet::kDynamic, BranchSet::kStaticDynamic})
    if (branch_set_name(b) == text) return b;
  throw UsageError("unknown branch set '" + std::string(text) + "' (expected s, d or sd)");
}

std::vector<Modality> parse_modalities(std::string_view text) {
  std::vector<Modality> out;
  for (char c : text) {
    const char tag = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    Modality m;
    try {
      m = modality_from_tag(tag);
    } catch (const DataError&) {
      throw UsageError("unknown modality '" + std::string(1, c) + "' (expected letters from r, d, i)");
    }
    if (std::find(out.begin(), out.end(), m) != out.end())
      throw UsageError("modality '" + std::string(1, c) + "' listed twice");
    out.push_back(m);
  }
  if (out.empty()) throw UsageError("empty modality list");
  std::sort(out.begin(), out.end());
  return out;
}

std::string modalities_string(const std::vector<Modality>& mods) {
  std::string s;
  for (auto m : mods) s += static_cast<char>(std::tolower(modality_tag(m)));
  return s;
}

void BackboneSpec::validate() const {
  if (kernel % 2 == 0 || kernel == 0) throw UsageError("backbone kernel must be odd");
  if (stem_width == 0) throw UsageError("backbone stem width must be positive");
  for (auto w : widths)
    if (w == 0) throw UsageError("backbone widths must be positive");
  if (input_size < 4) throw UsageError("backbone input size must be at least 4");
}

std::size_t BackboneSpec::level_size(int level) const {
  if (level < 1 || level > 4) throw UsageError("backbone level must be in 1..4");
  std::size_t s = (input_size + 1) / 2;  // stem downsample
  for (int t = 2; t <= level; ++t) s = (s + 1) / 2;
  return s;
}

BackboneSpec BackboneSpec::desk() {
  BackboneSpec s;
  s.input_size = 32;
  s.stem_width = 4;
  s.widths = {4, 8, 8, 16};
  return s;
}

BackboneSpec BackboneSpec::tiny() {
  BackboneSpec s;
  s.input_size = 16;
  s.stem_width = 2;
  s.widths = {2, 3, 3, 4};
  return s;
}

void NetConfig::validate() const {
  backbone.validate();
  if (modalities.empty()) throw UsageError("network needs at least one modality");
  for (std::size_t i = 1; i < modalities.size(); ++i)
    if (modalities[i] <= modalities[i - 1]) throw UsageError("modalities must be distinct and ordered color, depth, ir");
}

namespace {

std::string level_name(int t) { return "l" + std::to_string(t); }

class Builder {
 public:
  explicit Builder(const NetConfig& cfg, Graph& g) : cfg_(cfg), g_(g) {}

  NodeRef conv_relu(NodeRef x, const std::string& prefix, std::size_t cin, std::size_t cout, int stride,
                    std::string out_name = {}) {
    const std::size_t k = cfg_.backbone.kernel;
    auto w = g_.param(prefix + ".w", {cout, cin, k, k});
    auto b = g_.param(prefix + ".b", {cout});
    return g_.relu(g_.conv2d(x, w, b, stride, prefix), std::move(out_name));
  }

  NodeRef stem(NodeRef x, const std::string& prefix, std::size_t channels) {
    auto h = conv_relu(x, prefix + "/stem", channels, cfg_.backbone.stem_width, 1);
    return g_.downsample2x2(h, prefix + "/stem_out");
  }

  // Module M^t: level 1 keeps resolution, later levels enter with stride 2.
  NodeRef level(NodeRef x, const std::string& prefix, int t) {
    const auto& w = cfg_.backbone.widths;
    const std::size_t cin = t == 1 ? cfg_.backbone.stem_width : w[t - 2];
    const std::size_t cout = w[t - 1];
    const std::string p = prefix + "/" + level_name(t);
    auto h = conv_relu(x, p + "/conv1", cin, cout, t == 1 ? 1 : 2);
    return conv_relu(h, p + "/conv2", cout, cout, 1, prefix + "/X" + std::to_string(t));
  }

  NodeRef head(NodeRef features, const std::string& prefix, std::size_t width) {
    auto w = g_.param(prefix + ".w", {2, width});
    auto b = g_.param(prefix + ".b", {2});
    return g_.dense(features, w, b, prefix + "_logits");
  }

 private:
  const NetConfig& cfg_;
  Graph& g_;
};

}  // namespace

Network build_network(const NetConfig& cfg_in) {
  NetConfig cfg = cfg_in;
  cfg.validate();
  Network net;
  net.cfg_ = cfg;
  Graph& g = net.graph_;
  Builder b(cfg, g);
  const auto v = cfg.variant;
  const bool shared = v == FusionVariant::kPsmm || v == FusionVariant::kPsmmWobf || v == FusionVariant::kNhf;
  const bool feed_back = v == FusionVariant::kPsmm;
  const bool per_modality_heads = v != FusionVariant::kNhf;
  const std::size_t s = cfg.backbone.input_size;
  const auto& widths = cfg.backbone.widths;
  net.has_shared_ = shared;

  net.label_ = g.input("label", {});
  for (auto m : cfg.modalities) {
    auto& n = net.mods_[m];
    const std::string mod(modality_name(m));
    const std::size_t c = modality_channels(m);
    n.static_in = g.input(mod + "/static_in", {c, s, s});
    n.dynamic_in = g.input(mod + "/dynamic_in", {c, s, s});
  }

  // Inputs to module M^t of each branch; replaced by fused features under
  // backward feeding.
  std::map<Modality, NodeRef> next_s, next_d, next_f;
  for (auto m : cfg.modalities) {
    auto& n = net.mods_[m];
    const std::string mod(modality_name(m));
    const std::size_t c = modality_channels(m);
    if (cfg.has_static()) next_s[m] = b.stem(n.static_in, mod + "/static", c);
    if (cfg.has_dynamic()) next_d[m] = b.stem(n.dynamic_in, mod + "/dynamic", c);
  }

  NodeRef shared_next;
  for (int t = 1; t <= 4; ++t) {
    if (v == FusionVariant::kNhf && t >= 2) break;
    std::vector<NodeRef> fusion_terms, dynamic_terms;
    for (auto m : cfg.modalities) {
      auto& n = net.mods_[m];
      const std::string mod(modality_name(m));
      if (cfg.has_static()) {
        n.xs[t] = b.level(next_s[m], mod + "/static", t);
        next_s[m] = n.xs[t];
        fusion_terms.push_back(n.xs[t]);
      }
      if (cfg.has_dynamic()) {
        n.xd[t] = b.level(next_d[m], mod + "/dynamic", t);
        next_d[m] = n.xd[t];
        dynamic_terms.push_back(n.xd[t]);
      }
      if (cfg.has_fused() && v != FusionVariant::kNhf) {
        if (t == 1) {
          n.xf[1] = g.add(n.xs[1], n.xd[1], mod + "/fused/X1");
        } else {
          n.xf[t] = b.level(next_f[m], mod + "/fused", t);
        }
        next_f[m] = n.xf[t];
      }
    }
    if (!shared) continue;
    // Summation order: all static maps, then all dynamic maps, then S[t].
    fusion_terms.insert(fusion_terms.end(), dynamic_terms.begin(), dynamic_terms.end());
    if (v == FusionVariant::kNhf) {
      // Halfway fusion: every level-1 stream summed once, then one trunk.
      shared_next = g.sum(fusion_terms, "shared/S~1");
      net.shared_.s_tilde[1] = shared_next;
      break;
    }
    if (t >= 2) {
      net.shared_.s[t] = b.level(shared_next, "shared", t);
      if (t == 4) break;
      fusion_terms.push_back(net.shared_.s[t]);
      if (feed_back) {
        for (auto m : cfg.modalities) {
          auto& n = net.mods_[m];
          const std::string mod(modality_name(m));
          if (cfg.has_static()) {
            n.xs_fused[t] = g.add(n.xs[t], net.shared_.s[t], mod + "/static/X~" + std::to_string(t));
            next_s[m] = n.xs_fused[t];
          }
          if (cfg.has_dynamic()) {
            n.xd_fused[t] = g.add(n.xd[t], net.shared_.s[t], mod + "/dynamic/X~" + std::to_string(t));
            next_d[m] = n.xd_fused[t];
          }
        }
      }
    }
    // S[1] is zero, so S~[1] is the sum of the level-1 maps alone.
    shared_next = g.sum(fusion_terms, "shared/S~" + std::to_string(t));
    net.shared_.s_tilde[t] = shared_next;
  }
  if (v == FusionVariant::kNhf) {
    for (int t = 2; t <= 4; ++t) {
      net.shared_.s[t] = b.level(shared_next, "shared", t);
      shared_next = net.shared_.s[t];
    }
  }

  const std::size_t top = widths[3];
  std::vector<NodeRef> whole_terms;
  std::vector<NodeRef> loss_terms;
  for (auto m : cfg.modalities) {
    if (!per_modality_heads) break;
    auto& n = net.mods_[m];
    const std::string mod(modality_name(m));
    std::vector<NodeRef> gaps, losses;
    if (cfg.has_static()) {
      n.gap_s = g.global_avg_pool(n.xs[4], mod + "/static/gap");
      n.logits_s = b.head(n.gap_s, mod + "/head_s", top);
      n.loss_s = g.softmax_xent(n.logits_s, net.label_, mod + "/loss_s");
      gaps.push_back(n.gap_s);
      losses.push_back(n.loss_s);
    }
    if (cfg.has_dynamic()) {
      n.gap_d = g.global_avg_pool(n.xd[4], mod + "/dynamic/gap");
      n.logits_d = b.head(n.gap_d, mod + "/head_d", top);
      n.loss_d = g.softmax_xent(n.logits_d, net.label_, mod + "/loss_d");
      gaps.push_back(n.gap_d);
      losses.push_back(n.loss_d);
    }
    if (cfg.has_fused()) {
      n.gap_f = g.global_avg_pool(n.xf[4], mod + "/fused/gap");
      n.logits_f = b.head(n.gap_f, mod + "/head_f", top);
      n.loss_f = g.softmax_xent(n.logits_f, net.label_, mod + "/loss_f");
      gaps.push_back(n.gap_f);
      losses.push_back(n.loss_f);
      auto gap_sum = g.sum(gaps, mod + "/gap_sum");
      n.logits_sdf = b.head(gap_sum, mod + "/head_sdf", top);
      n.loss_sdf = g.softmax_xent(n.logits_sdf, net.label_, mod + "/loss_sdf");
      losses.push_back(n.loss_sdf);
    }
    n.loss = g.sum(losses, mod + "/loss");
    loss_terms.push_back(n.loss);
    whole_terms.insert(whole_terms.end(), gaps.begin(), gaps.end());
  }

  const bool whole = shared || cfg.modalities.size() > 1;
  if (whole) {
    if (shared) {
      net.shared_.gap = g.global_avg_pool(net.shared_.s[4], "shared/gap");
      whole_terms.push_back(net.shared_.gap);
    }
    auto gap_sum = g.sum(whole_terms, "whole/gap_sum");
    net.whole_logits_ = b.head(gap_sum, "whole/head", top);
    net.whole_loss_ = g.softmax_xent(net.whole_logits_, net.label_, "whole/loss");
    loss_terms.insert(loss_terms.begin(), net.whole_loss_);
    net.score_logits_ = net.whole_logits_;
  } else {
    const auto& n = net.mods_.begin()->second;
    net.score_logits_ = cfg.has_fused() ? n.logits_sdf : cfg.has_static() ? n.logits_s : n.logits_d;
  }
  net.total_loss_ = g.sum(loss_terms, "loss");
  net.init_parameters(0);
  return net;
}

Network build_sdnet(const BackboneSpec& spec, Modality modality, BranchSet branches) {
  NetConfig cfg;
  cfg.backbone = spec;
  cfg.variant = FusionVariant::kSdnetOnly;
  cfg.modalities = {modality};
  cfg.branches = branches;
  return build_network(cfg);
}

Network build_psmm(const BackboneSpec& spec, FusionVariant variant, std::vector<Modality> modalities,
                   BranchSet branches) {
  NetConfig cfg;
  cfg.backbone = spec;
  cfg.variant = variant;
  std::sort(modalities.begin(), modalities.end());
  cfg.modalities = std::move(modalities);
  cfg.branches = branches;
  return build_network(cfg);
}

const Network::ModalityNodes& Network::nodes(Modality m) const {
  auto it = mods_.find(m);
  if (it == mods_.end()) throw UsageError("network has no " + std::string(modality_name(m)) + " branch");
  return it->second;
}

void Network::set_inputs(const NetInputs& inputs, Label label) {
  for (auto m : cfg_.modalities) {
    auto it = inputs.find(m);
    if (it == inputs.end()) throw DataError("missing " + std::string(modality_name(m)) + " input");
    const auto& n = mods_.at(m);
    graph_.set_input(n.static_in, it->second.static_img);
    graph_.set_input(n.dynamic_in, it->second.dynamic_img);
  }
  graph_.set_input(label_, Tensor::scalar(static_cast<double>(label)));
}

void Network::forward(const NetInputs& inputs, Label label) {
  set_inputs(inputs, label);
  graph_.forward();
}

namespace {

std::optional<Tensor> maybe(const Graph& g, NodeRef r) {
  if (!r.valid()) return std::nullopt;
  return g.value(r);
}

double value_or_zero(const Graph& g, NodeRef r) { return r.valid() ? g.value(r).item() : 0.0; }

}  // namespace

std::map<Modality, ModalityLogits> Network::modality_logits() const {
  std::map<Modality, ModalityLogits> out;
  for (const auto& [m, n] : mods_) {
    if (!n.loss.valid()) continue;
    out[m] = ModalityLogits{maybe(graph_, n.logits_s), maybe(graph_, n.logits_d), maybe(graph_, n.logits_f),
                            maybe(graph_, n.logits_sdf)};
  }
  return out;
}

std::optional<Tensor> Network::whole_logits() const { return maybe(graph_, whole_logits_); }

const Tensor& Network::aggregate_logits() const { return graph_.value(score_logits_); }

double Network::score() const {
  return softmax_prob(aggregate_logits().data(), static_cast<std::size_t>(Label::kBonaFide));
}

LossBundle Network::losses() const {
  LossBundle out;
  for (const auto& [m, n] : mods_) {
    if (!n.loss.valid()) continue;
    ModalityLoss l;
    l.s = value_or_zero(graph_, n.loss_s);
    l.d = value_or_zero(graph_, n.loss_d);
    l.f = value_or_zero(graph_, n.loss_f);
    l.sdf = value_or_zero(graph_, n.loss_sdf);
    l.total = graph_.value(n.loss).item();
    out.per_modality[m] = l;
  }
  if (whole_loss_.valid()) out.whole = graph_.value(whole_loss_).item();
  out.total = graph_.value(total_loss_).item();
  return out;
}

FusionState Network::fusion_state() const {
  FusionState st;
  auto fill = [&](const std::array<NodeRef, 5>& refs, std::array<Tensor, 5>& dst) {
    for (int t = 1; t <= 4; ++t)
      if (refs[t].valid()) dst[t] = graph_.value(refs[t]);
  };
  for (const auto& [m, n] : mods_) {
    auto& b = st.modality[m];
    fill(n.xs, b.xs);
    fill(n.xd, b.xd);
    fill(n.xf, b.xf);
    fill(n.xs_fused, b.xs_fused);
    fill(n.xd_fused, b.xd_fused);
  }
  if (has_shared_) {
    fill(shared_.s, st.shared);
    for (int t = 1; t <= 3; ++t)
      if (shared_.s_tilde[t].valid()) st.shared_input[t] = graph_.value(shared_.s_tilde[t]);
    const auto& ref = st.shared_input[1];
    if (!ref.empty()) st.shared[1] = Tensor(ref.shape());
  }
  return st;
}

void Network::init_parameters(std::uint64_t seed) {
  for (auto& p : graph_.parameters()) {
    std::uint64_t h = 1469598103934665603ULL ^ seed;
    for (unsigned char c : p.name) h = (h ^ c) * 1099511628211ULL;
    std::mt19937_64 rng(h);
    const bool kernel = p.value.rank() == 4;
    if (!kernel) {
      p.value.fill(0.0);
      continue;
    }
    const double fan_in = static_cast<double>(p.value.dim(1) * p.value.dim(2) * p.value.dim(3));
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : p.value.data()) v = n(rng);
  }
}

ModalityLoss sdnet_loss(const ModalityLogits& logits, Label label) {
  const auto cls = static_cast<std::size_t>(label);
  ModalityLoss l;
  std::vector<double> parts;
  auto one = [&](const std::optional<Tensor>& t, double& dst) {
    if (!t) return;
    dst = softmax_xent_value(t->data(), cls);
    parts.push_back(dst);
  };
  one(logits.s, l.s);
  one(logits.d, l.d);
  one(logits.f, l.f);
  one(logits.sdf, l.sdf);
  for (double p : parts) l.total += p;
  return l;
}

LossBundle psmm_loss(const std::map<Modality, ModalityLogits>& logits, const std::optional<Tensor>& whole,
                     Label label) {
  LossBundle out;
  if (whole) {
    out.whole = softmax_xent_value(whole->data(), static_cast<std::size_t>(label));
    out.total += *out.whole;
  }
  for (const auto& [m, l] : logits) {
    out.per_modality[m] = sdnet_loss(l, label);
    out.total += out.per_modality[m].total;
  }
  return out;
}

}  // namespace sdfas
