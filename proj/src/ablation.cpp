#include "sdfas/ablation.hpp"

#include <cstdio>

#include "sdfas/errors.hpp"
#include "sdfas/text.hpp"

namespace sdfas {

AblationAxes full_axes(std::string_view names) {
  AblationAxes axes;
  for (const auto& raw : split(names, ',')) {
    const auto name = trim(raw);
    if (name == "branches") {
      axes.branches = {BranchSet::kStatic, BranchSet::kDynamic, BranchSet::kStaticDynamic};
    } else if (name == "modalities") {
      axes.modalities = {{Modality::kColor}, {Modality::kColor, Modality::kDepth}, {kAllModalities.begin(), kAllModalities.end()}};
    } else if (name == "variant") {
      axes.variants = {FusionVariant::kNhf, FusionVariant::kPsmmWobf, FusionVariant::kPsmm};
    } else {
      throw UsageError("unknown ablation axis '" + std::string(name) + "' (expected branches, modalities or variant)");
    }
  }
  return axes;
}

std::vector<NetConfig> ablation_plan(const NetConfig& base, const AblationAxes& axes) {
  const auto branches = axes.branches.empty() ? std::vector<BranchSet>{base.branches} : axes.branches;
  const auto mods = axes.modalities.empty() ? std::vector<std::vector<Modality>>{base.modalities} : axes.modalities;
  const auto variants = axes.variants.empty() ? std::vector<FusionVariant>{base.variant} : axes.variants;
  std::vector<NetConfig> plan;
  for (auto b : branches)
    for (const auto& m : mods)
      for (auto v : variants) {
        NetConfig c = base;
        c.branches = b;
        c.modalities = m;
        c.variant = v;
        plan.push_back(c);
      }
  return plan;
}

std::string run_label(const NetConfig& net) {
  return std::string(branch_set_name(net.branches)) + "-" + modalities_string(net.modalities) + "-" +
         std::string(variant_name(net.variant));
}

std::vector<AblationResult> run_ablation(const std::vector<NetConfig>& plan, const ExperimentConfig& base,
                                         const std::vector<PreparedVideo>& train_set,
                                         const std::vector<PreparedVideo>& valid_set,
                                         const std::vector<PreparedVideo>& test_set,
                                         const std::filesystem::path& out_dir,
                                         const std::function<void(const AblationResult&)>& progress) {
  std::vector<AblationResult> results;
  for (const auto& net_cfg : plan) {
    AblationResult r;
    r.net = net_cfg;
    try {
      Network net = build_network(net_cfg);
      net.init_parameters(base.train.seed);
      TrainOutput out;
      if (!out_dir.empty()) out.dir = out_dir / run_label(net_cfg);
      train(net, train_set, &valid_set, base.train, base.augment, out);
      const ScoredSet scores = score_videos(net, test_set, base.train.window, base.protocol);
      const double targets[] = {1e-2};
      const auto report = evaluate(scores, base.threshold, targets, base.apcer_mode);
      r.rates = report.rates;
      r.auc = report.auc;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    if (progress) progress(r);
    results.push_back(std::move(r));
  }
  return results;
}

namespace {

std::string branch_title(BranchSet b) {
  switch (b) {
    case BranchSet::kStatic: return "S-Net";
    case BranchSet::kDynamic: return "D-Net";
    case BranchSet::kStaticDynamic: return "SD-Net";
  }
  return "?";
}

std::string modality_title(const std::vector<Modality>& mods) {
  std::string out;
  for (auto m : mods) {
    if (!out.empty()) out += "&";
    out += m == Modality::kColor ? "RGB" : m == Modality::kDepth ? "Depth" : "IR";
  }
  return out;
}

std::string variant_title(FusionVariant v) {
  switch (v) {
    case FusionVariant::kSdnetOnly: return "none";
    case FusionVariant::kNhf: return "NHF";
    case FusionVariant::kPsmmWobf: return "PSMM-WoBF";
    case FusionVariant::kPsmm: return "PSMM";
  }
  return "?";
}

}  // namespace

std::string ablation_table(const std::vector<AblationResult>& results) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-14s %-10s %9s %9s %9s\n", "Branches", "Modalities", "Fusion", "APCER(%)",
                "BPCER(%)", "ACER(%)");
  out += line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-8s %-14s %-10s ", branch_title(r.net.branches).c_str(),
                  modality_title(r.net.modalities).c_str(), variant_title(r.net.variant).c_str());
    out += line;
    if (r.rates) {
      std::snprintf(line, sizeof line, "%9s %9s %9s\n", format_fixed(100.0 * r.rates->apcer, 1).c_str(),
                    format_fixed(100.0 * r.rates->bpcer, 1).c_str(), format_fixed(100.0 * r.rates->acer, 1).c_str());
      out += line;
    } else {
      out += "failed: " + r.error + "\n";
    }
  }
  return out;
}

}  // namespace sdfas
