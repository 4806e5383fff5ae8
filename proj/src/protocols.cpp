#include "sdfas/protocols.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "sdfas/errors.hpp"
#include "sdfas/text.hpp"

namespace sdfas {

char ethnicity_tag(Ethnicity e) {
  switch (e) {
    case Ethnicity::kAfrica: return 'A';
    case Ethnicity::kCentralAsia: return 'C';
    case Ethnicity::kEastAsia: return 'E';
    case Ethnicity::kNone: return '-';
  }
  return '?';
}

Ethnicity ethnicity_from_tag(std::string_view tag) {
  if (tag == "A") return Ethnicity::kAfrica;
  if (tag == "C") return Ethnicity::kCentralAsia;
  if (tag == "E") return Ethnicity::kEastAsia;
  if (tag == "-") return Ethnicity::kNone;
  throw DataError("unknown ethnicity '" + std::string(tag) + "' (expected A, C, E or -)");
}

namespace {

constexpr AttackType kAllAttacks[] = {AttackType::kReal,   AttackType::kPrintIndoor, AttackType::kPrintOutdoor,
                                      AttackType::kReplay, AttackType::kMask3d,      AttackType::kSilicaGel};

template <typename T>
bool contains(const std::vector<T>& v, T x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

std::string_view attack_name(AttackType a) {
  switch (a) {
    case AttackType::kReal: return "real";
    case AttackType::kPrintIndoor: return "print_indoor";
    case AttackType::kPrintOutdoor: return "print_outdoor";
    case AttackType::kReplay: return "replay";
    case AttackType::kMask3d: return "mask3d";
    case AttackType::kSilicaGel: return "silicagel";
  }
  return "?";
}

AttackType attack_from_name(std::string_view name) {
  for (auto a : kAllAttacks)
    if (attack_name(a) == name) return a;
  throw DataError("unknown attack type '" + std::string(name) + "'");
}

std::string_view pai_name(AttackType a) {
  switch (a) {
    case AttackType::kPrintIndoor:
    case AttackType::kPrintOutdoor: return "print";
    default: return attack_name(a);
  }
}

bool is_3d(AttackType a) { return a == AttackType::kMask3d || a == AttackType::kSilicaGel; }

std::string ManifestEntry::presentation_id() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d", subject_id);
  return std::string(1, ethnicity_tag(ethnicity)) + "-" + buf + "-" + std::string(attack_name(attack)) + "-" +
         std::to_string(sample);
}

Manifest read_manifest(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != kManifestHeader)
    throw DataError("manifest: line 1: expected header '" + std::string(kManifestHeader) + "'");
  Manifest out;
  std::set<std::string> paths;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = "manifest: line " + std::to_string(lineno);
    const auto f = split(trim(line), ',');
    if (f.size() != 6) throw DataError(where + ": expected 6 fields, got " + std::to_string(f.size()));
    ManifestEntry e;
    try {
      e.subject_id = static_cast<int>(parse_int(f[0], "subject_id"));
      e.ethnicity = ethnicity_from_tag(f[1]);
      if (f[2].size() != 1) throw DataError("unknown modality '" + f[2] + "'");
      e.modality = modality_from_tag(f[2][0]);
      e.attack = attack_from_name(f[3]);
      e.sample = static_cast<int>(parse_int(f[4], "sample"));
    } catch (const DataError& err) {
      throw DataError(where + ": " + err.what());
    }
    e.video_path = f[5];
    if (e.subject_id <= 0) throw DataError(where + ": subject_id must be positive");
    if (e.sample <= 0) throw DataError(where + ": sample must be positive");
    if (e.video_path.empty()) throw DataError(where + ": empty video path");
    if (e.is_3d() != (e.ethnicity == Ethnicity::kNone))
      throw DataError(where + ": 3D attacks use ethnicity '-', 2D entries need A, C or E");
    if (!paths.insert(e.video_path).second) throw DataError(where + ": duplicate video path " + e.video_path);
    out.push_back(std::move(e));
  }
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open manifest " + path.string());
  return read_manifest(is);
}

void write_manifest(std::ostream& os, const Manifest& manifest) {
  os << kManifestHeader << '\n';
  for (const auto& e : manifest)
    os << e.subject_id << ',' << ethnicity_tag(e.ethnicity) << ',' << modality_tag(e.modality) << ','
       << attack_name(e.attack) << ',' << e.sample << ',' << e.video_path << '\n';
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  write_manifest(os, manifest);
  if (!os) throw DataError("write failed: " + path.string());
}

bool SubsetFilter::matches(const ManifestEntry& e) const {
  return contains(ethnicities, e.ethnicity) && contains(modalities, e.modality) && contains(attacks, e.attack) &&
         e.subject_id >= first_subject && e.subject_id <= last_subject;
}

const std::vector<std::string>& subprotocol_ids() {
  static const std::vector<std::string> ids{"1_1", "1_2", "1_3", "2_1", "2_2", "3_1",
                                            "3_2", "3_3", "4_1", "4_2", "4_3"};
  return ids;
}

namespace {

std::vector<Ethnicity> all_but(Ethnicity e) {
  std::vector<Ethnicity> out;
  for (auto x : kEthnicities)
    if (x != e) out.push_back(x);
  return out;
}

std::vector<Modality> all_but(Modality m) {
  std::vector<Modality> out;
  for (auto x : kAllModalities)
    if (x != m) out.push_back(x);
  return out;
}

std::size_t count_subjects(const Manifest& manifest, const SubsetFilter& f) {
  std::set<std::pair<Ethnicity, int>> subjects;
  for (const auto& e : manifest)
    if (!e.is_3d() && contains(f.ethnicities, e.ethnicity) && e.subject_id >= f.first_subject &&
        e.subject_id <= f.last_subject)
      subjects.emplace(e.ethnicity, e.subject_id);
  return subjects.size();
}

}  // namespace

ProtocolSplit build_split(const Manifest& manifest, std::string_view id, bool include_3d) {
  const auto& ids = subprotocol_ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end())
    throw UsageError("unknown sub-protocol '" + std::string(id) + "' (expected one of 1_1..1_3, 2_1, 2_2, 3_1..3_3, 4_1..4_3)");
  ProtocolSplit s;
  s.id = std::string(id);
  s.protocol = id[0] - '0';
  s.include_3d = include_3d;
  const int k = id[2] - '1';

  const std::vector<Ethnicity> all_eth(std::begin(kEthnicities), std::end(kEthnicities));
  const std::vector<Modality> all_mod(kAllModalities.begin(), kAllModalities.end());
  const std::vector<AttackType> all_2d(std::begin(kAttacks2d), std::end(kAttacks2d));
  const std::vector<AttackType> print{AttackType::kReal, AttackType::kPrintIndoor, AttackType::kPrintOutdoor};
  const std::vector<AttackType> replay{AttackType::kReal, AttackType::kReplay};

  SubsetFilter train{all_eth, all_mod, all_2d, 1, 200};
  SubsetFilter test{all_eth, all_mod, all_2d, 301, 500};
  switch (s.protocol) {
    case 1:
      train.ethnicities = {kEthnicities[k]};
      test.ethnicities = all_but(kEthnicities[k]);
      break;
    case 2:
      train.attacks = k == 0 ? print : replay;
      test.attacks = k == 0 ? replay : print;
      break;
    case 3:
      train.modalities = {kAllModalities[k]};
      test.modalities = all_but(kAllModalities[k]);
      break;
    case 4:
      // All modalities: the benchmark train/valid counts require them.
      train.ethnicities = {kEthnicities[k]};
      train.attacks = replay;
      test.ethnicities = all_but(kEthnicities[k]);
      test.attacks = print;
      break;
  }
  SubsetFilter valid = train;
  valid.first_subject = 201;
  valid.last_subject = 300;
  s.train_filter = train;
  s.valid_filter = valid;
  s.test_filter = test;

  for (const auto& e : manifest) {
    if (e.is_3d()) {
      if (include_3d) s.test.push_back(e);
      continue;
    }
    if (train.matches(e)) s.train.push_back(e);
    if (valid.matches(e)) s.valid.push_back(e);
    if (test.matches(e)) s.test.push_back(e);
  }
  s.train_subjects = count_subjects(manifest, train);
  s.valid_subjects = count_subjects(manifest, valid);
  s.test_subjects = count_subjects(manifest, test);
  if (s.train.empty() || s.valid.empty() || s.test.empty())
    throw DataError("sub-protocol " + s.id + ": manifest yields an empty train, valid or test subset");
  return s;
}

SubsetCounts count_2d(const Manifest& subset) {
  SubsetCounts c;
  for (const auto& e : subset) {
    if (e.is_3d()) continue;
    (e.label() == Label::kBonaFide ? c.real : c.fake) += 1;
  }
  c.total = c.real + c.fake;
  return c;
}

SplitReport validate_split(const ProtocolSplit& split) {
  SplitReport r;
  r.train = count_2d(split.train);
  r.valid = count_2d(split.valid);
  r.test = count_2d(split.test);

  struct Part {
    const char* name;
    const Manifest* entries;
    const SubsetFilter* filter;
    std::size_t subjects;
    SubsetCounts counts;
  };
  const Part parts[] = {{"train", &split.train, &split.train_filter, split.train_subjects, r.train},
                        {"valid", &split.valid, &split.valid_filter, split.valid_subjects, r.valid},
                        {"test", &split.test, &split.test_filter, split.test_subjects, r.test}};

  std::map<std::pair<Ethnicity, int>, std::string> owner;
  for (const auto& p : parts) {
    for (const auto& e : *p.entries) {
      if (e.is_3d()) {
        if (std::string(p.name) != "test") r.violations.push_back(std::string(p.name) + " contains 3D entry " + e.video_path);
        else ++r.test_3d;
        continue;
      }
      if (!p.filter->matches(e))
        r.violations.push_back(std::string(p.name) + " entry " + e.video_path + " violates the subset filter");
      const auto key = std::make_pair(e.ethnicity, e.subject_id);
      auto [it, fresh] = owner.emplace(key, p.name);
      if (!fresh && it->second != p.name) {
        r.violations.push_back("subject " + std::string(1, ethnicity_tag(e.ethnicity)) + "-" +
                               std::to_string(e.subject_id) + " appears in both " + it->second + " and " + p.name);
        it->second = p.name;
      }
    }
    std::size_t fake_types = 0;
    for (auto a : p.filter->attacks)
      if (a != AttackType::kReal) ++fake_types;
    const std::size_t mods = p.filter->modalities.size();
    const bool has_real = contains(p.filter->attacks, AttackType::kReal);
    const std::size_t want_real = has_real ? p.subjects * mods : 0;
    const std::size_t want_fake = p.subjects * fake_types * mods;
    if (p.counts.real != want_real || p.counts.fake != want_fake)
      r.violations.push_back(std::string(p.name) + " has " + std::to_string(p.counts.real) + " real / " +
                             std::to_string(p.counts.fake) + " fake 2D videos, expected " + std::to_string(want_real) +
                             " / " + std::to_string(want_fake));
  }
  return r;
}

}  // namespace sdfas
