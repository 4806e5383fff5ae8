#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sdfas/config.hpp"
#include "sdfas/trainer.hpp"

namespace sdfas {

// An empty axis keeps the base configuration's value.
struct AblationAxes {
  std::vector<BranchSet> branches;
  std::vector<std::vector<Modality>> modalities;
  std::vector<FusionVariant> variants;
};

// Comma-separated axis names among "branches", "modalities" and "variant",
// each expanded to its full value list: s, d, sd; r, rd, rdi; nhf,
// psmm-wobf, psmm.
AblationAxes full_axes(std::string_view names);

// Cross product in branches-major, then modalities, then variant order.
std::vector<NetConfig> ablation_plan(const NetConfig& base, const AblationAxes& axes);
std::string run_label(const NetConfig& net);  // e.g. "sd-rdi-psmm"

struct AblationResult {
  NetConfig net;
  std::optional<Rates> rates;
  double auc = 0.0;
  std::string error;  // set when the run failed
};

// Trains and tests every planned network with the base experiment settings.
// A failing run is recorded and the matrix continues. With a nonempty
// out_dir each run writes its training artifacts to out_dir/<label>.
std::vector<AblationResult> run_ablation(const std::vector<NetConfig>& plan, const ExperimentConfig& base,
                                         const std::vector<PreparedVideo>& train_set,
                                         const std::vector<PreparedVideo>& valid_set,
                                         const std::vector<PreparedVideo>& test_set,
                                         const std::filesystem::path& out_dir = {},
                                         const std::function<void(const AblationResult&)>& progress = {});

// One row per run with APCER, BPCER and ACER columns in percent.
std::string ablation_table(const std::vector<AblationResult>& results);

}  // namespace sdfas
