#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "sdfas/datasyn.hpp"
#include "sdfas/metrics.hpp"
#include "sdfas/netgraph.hpp"
#include "sdfas/trainer.hpp"

namespace sdfas {

// Plain "key = value" text. Blank lines and lines starting with '#' are
// skipped; a key may appear once.
using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(std::istream& is);
KeyValues load_key_values(const std::filesystem::path& path);
void write_key_values(std::ostream& os, const KeyValues& kv);
std::string format_key_values(const KeyValues& kv);

/// Everything a train / eval / ablate run needs besides the data location.
struct ExperimentConfig {
  std::string protocol = "1_1";
  bool include_3d = true;
  std::string backbone = "desk";  // desk, tiny or full
  NetConfig net;
  TrainConfig train;
  AugmentConfig augment;
  std::size_t threads = 1;  // data preparation workers
  double threshold = 0.5;
  ApcerMode apcer_mode = ApcerMode::kPooled;

  void validate() const;
};

// Unknown keys and malformed values raise UsageError naming the key.
void apply_overrides(ExperimentConfig& cfg, const KeyValues& kv);
KeyValues to_key_values(const ExperimentConfig& cfg);

void apply_overrides(SynthConfig& cfg, const KeyValues& kv);
KeyValues to_key_values(const SynthConfig& cfg);

BackboneSpec backbone_by_name(std::string_view name);

}  // namespace sdfas
