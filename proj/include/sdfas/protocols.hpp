#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sdfas/modality.hpp"
#include "sdfas/netgraph.hpp"

namespace sdfas {

// 3D-subset entries carry no ethnicity ('-').
enum class Ethnicity { kAfrica, kCentralAsia, kEastAsia, kNone };
enum class AttackType { kReal, kPrintIndoor, kPrintOutdoor, kReplay, kMask3d, kSilicaGel };

inline constexpr Ethnicity kEthnicities[] = {Ethnicity::kAfrica, Ethnicity::kCentralAsia, Ethnicity::kEastAsia};
inline constexpr AttackType kAttacks2d[] = {AttackType::kReal, AttackType::kPrintIndoor, AttackType::kPrintOutdoor,
                                            AttackType::kReplay};

char ethnicity_tag(Ethnicity e);  // A, C, E, -
Ethnicity ethnicity_from_tag(std::string_view tag);
std::string_view attack_name(AttackType a);  // real, print_indoor, print_outdoor, replay, mask3d, silicagel
AttackType attack_from_name(std::string_view name);
// Instrument family used in score files: real, print, replay, mask3d, silicagel.
std::string_view pai_name(AttackType a);
bool is_3d(AttackType a);

struct ManifestEntry {
  int subject_id = 0;
  Ethnicity ethnicity = Ethnicity::kAfrica;
  Modality modality = Modality::kColor;
  AttackType attack = AttackType::kReal;
  int sample = 1;
  std::string video_path;  // relative to the manifest's directory

  Label label() const { return attack == AttackType::kReal ? Label::kBonaFide : Label::kAttack; }
  bool is_3d() const { return sdfas::is_3d(attack); }
  // Identifies the multi-modal presentation (same for its R, D and I clips),
  // e.g. "A-0001-print_indoor-1".
  std::string presentation_id() const;
};
using Manifest = std::vector<ManifestEntry>;

inline constexpr std::string_view kManifestHeader = "subject_id,ethnicity,modality,attack_type,sample,video_path";

Manifest read_manifest(std::istream& is);
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& os, const Manifest& manifest);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct SubsetFilter {
  std::vector<Ethnicity> ethnicities;
  std::vector<Modality> modalities;
  std::vector<AttackType> attacks;  // includes kReal
  int first_subject = 1, last_subject = 500;

  bool matches(const ManifestEntry& e) const;
};

struct ProtocolSplit {
  std::string id;  // e.g. "1_1"
  int protocol = 1;
  SubsetFilter train_filter, valid_filter, test_filter;
  Manifest train, valid, test;
  bool include_3d = true;
  // Distinct 2D subjects in the manifest that each subset's filter admits.
  std::size_t train_subjects = 0, valid_subjects = 0, test_subjects = 0;
};

const std::vector<std::string>& subprotocol_ids();  // 1_1 ... 4_3
// 3D-subset entries are appended to the test set when include_3d is set.
ProtocolSplit build_split(const Manifest& manifest, std::string_view id, bool include_3d = true);

struct SubsetCounts {
  std::size_t real = 0, fake = 0, total = 0;
};
SubsetCounts count_2d(const Manifest& subset);

struct SplitReport {
  SubsetCounts train, valid, test;  // 2D subset only
  std::size_t test_3d = 0;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Subject disjointness, subject ranges, filter conformity and 2D counts
// against subjects x attack types x modalities (one sample each).
SplitReport validate_split(const ProtocolSplit& split);

}  // namespace sdfas
