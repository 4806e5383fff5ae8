#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sdfas/graph.hpp"
#include "sdfas/modality.hpp"
#include "sdfas/tensor.hpp"

namespace sdfas {

enum class FusionVariant { kSdnetOnly, kNhf, kPsmmWobf, kPsmm };
// Which SD-Net branches exist: S-Net, D-Net or the full static-dynamic net.
enum class BranchSet { kStatic, kDynamic, kStaticDynamic };
enum class Label : int { kAttack = 0, kBonaFide = 1 };

std::string_view variant_name(FusionVariant v);  // sdnet, nhf, psmm-wobf, psmm
FusionVariant parse_variant(std::string_view text);
std::string_view branch_set_name(BranchSet b);  // s, d, sd
BranchSet parse_branch_set(std::string_view text);
// "rdi" style subset string -> ordered modality list (color, depth, ir order).
std::vector<Modality> parse_modalities(std::string_view text);
std::string modalities_string(const std::vector<Modality>& mods);

/// Four-level backbone shared by every branch. A stem conv (plus 2x2
/// downsample) precedes level 1; each level is conv3x3-ReLU-conv3x3-ReLU and
/// levels 2..4 enter with stride 2.
struct BackboneSpec {
  std::size_t input_size = 112;
  std::size_t stem_width = 16;
  std::array<std::size_t, 4> widths{16, 32, 64, 128};
  std::size_t kernel = 3;

  void validate() const;
  // Spatial side length of level t (1..4) features.
  std::size_t level_size(int level) const;

  // Small enough to train on a CPU in minutes.
  static BackboneSpec desk();
  // Small enough for exhaustive finite-difference checks.
  static BackboneSpec tiny();
};

struct NetConfig {
  BackboneSpec backbone = BackboneSpec::desk();
  FusionVariant variant = FusionVariant::kPsmm;
  std::vector<Modality> modalities{Modality::kColor, Modality::kDepth, Modality::kIr};
  BranchSet branches = BranchSet::kStaticDynamic;

  void validate() const;
  bool has_static() const { return branches != BranchSet::kDynamic; }
  bool has_dynamic() const { return branches != BranchSet::kStatic; }
  bool has_fused() const { return branches == BranchSet::kStaticDynamic; }
};

struct ModalityInput {
  Tensor static_img;   // {C, S, S}
  Tensor dynamic_img;  // {C, S, S}
};
using NetInputs = std::map<Modality, ModalityInput>;

struct ModalityLogits {
  std::optional<Tensor> s, d, f, sdf;
};

struct ModalityLoss {
  double s = 0.0, d = 0.0, f = 0.0, sdf = 0.0;
  double total = 0.0;  // s + d + f + sdf
};

struct LossBundle {
  std::map<Modality, ModalityLoss> per_modality;
  std::optional<double> whole;
  double total = 0.0;  // whole + sum of per-modality totals
};

/// Feature maps by level; index 0 is unused so arrays read as X[t].
struct FusionState {
  struct Branches {
    std::array<Tensor, 5> xs, xd, xf;
    std::array<Tensor, 5> xs_fused, xd_fused;  // filled for t = 2, 3 under backward feeding
  };
  std::map<Modality, Branches> modality;
  std::array<Tensor, 5> shared;        // S[t]; S[1] is all zeros
  std::array<Tensor, 4> shared_input;  // S~[t], t = 1..3
};

class Network {
 public:
  struct ModalityNodes {
    NodeRef static_in, dynamic_in;
    std::array<NodeRef, 5> xs, xd, xf, xs_fused, xd_fused;
    NodeRef gap_s, gap_d, gap_f;
    NodeRef logits_s, logits_d, logits_f, logits_sdf;
    NodeRef loss_s, loss_d, loss_f, loss_sdf, loss;
  };
  struct SharedNodes {
    std::array<NodeRef, 5> s;        // S[2..4]
    std::array<NodeRef, 4> s_tilde;  // S~[1..3]
    NodeRef gap;
  };

  const NetConfig& config() const { return cfg_; }
  Graph& graph() { return graph_; }
  const Graph& graph() const { return graph_; }

  void set_inputs(const NetInputs& inputs, Label label);
  void forward(const NetInputs& inputs, Label label);

  LossBundle losses() const;
  FusionState fusion_state() const;
  std::map<Modality, ModalityLogits> modality_logits() const;
  std::optional<Tensor> whole_logits() const;
  // Logits of the head used for scoring: the whole-network head when present,
  // otherwise the summed-branch head of the lone SD-Net (or its single branch).
  const Tensor& aggregate_logits() const;
  double score() const;

  NodeRef total_loss() const { return total_loss_; }
  NodeRef whole_loss() const { return whole_loss_; }
  NodeRef label() const { return label_; }
  bool has_shared() const { return has_shared_; }
  const ModalityNodes& nodes(Modality m) const;
  const SharedNodes& shared_nodes() const { return shared_; }

  // He-normal conv kernels, zero biases and zero heads. Each parameter draws
  // from a stream keyed on (seed, name), so equally named parameters of
  // different networks start identical.
  void init_parameters(std::uint64_t seed);

 private:
  friend Network build_network(const NetConfig& cfg);

  NetConfig cfg_;
  Graph graph_;
  std::map<Modality, ModalityNodes> mods_;
  SharedNodes shared_;
  bool has_shared_ = false;
  NodeRef whole_logits_, whole_loss_, total_loss_, label_, score_logits_;
};

Network build_network(const NetConfig& cfg);
Network build_sdnet(const BackboneSpec& spec, Modality modality, BranchSet branches = BranchSet::kStaticDynamic);
Network build_psmm(const BackboneSpec& spec, FusionVariant variant,
                   std::vector<Modality> modalities = {Modality::kColor, Modality::kDepth, Modality::kIr},
                   BranchSet branches = BranchSet::kStaticDynamic);

// Per-branch cross-entropies and their sum, from logits alone.
ModalityLoss sdnet_loss(const ModalityLogits& logits, Label label);
LossBundle psmm_loss(const std::map<Modality, ModalityLogits>& logits, const std::optional<Tensor>& whole, Label label);

}  // namespace sdfas
