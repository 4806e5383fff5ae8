#include "sdfas/config.hpp"

#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "sdfas/errors.hpp"
#include "sdfas/text.hpp"

namespace sdfas {

KeyValues read_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw DataError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key(trim(t.substr(0, eq)));
    const std::string value(trim(t.substr(eq + 1)));
    if (key.empty()) throw DataError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw DataError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open config " + path.string());
  try {
    return read_key_values(is);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_key_values(std::ostream& os, const KeyValues& kv) {
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

std::string format_key_values(const KeyValues& kv) {
  std::ostringstream os;
  write_key_values(os, kv);
  return os.str();
}

namespace {

// Converts a DataError from the strict number parsers into a usage error
// that names the key.
template <typename F>
auto as_usage(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError("config key '" + key + "': " + e.what());
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  return as_usage(key, [&] { return parse_double(v, key); });
}

long long to_int(const std::string& key, const std::string& v, long long lo) {
  const long long n = as_usage(key, [&] { return parse_int(v, key); });
  if (n < lo) throw UsageError("config key '" + key + "': must be at least " + std::to_string(lo));
  return n;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

void apply_table(const std::map<std::string, Setter>& table, const KeyValues& kv, const char* what) {
  for (const auto& [k, v] : kv) {
    auto it = table.find(k);
    if (it == table.end()) throw UsageError(std::string("unknown ") + what + " config key '" + k + "'");
    it->second(k, v);
  }
}

}  // namespace

BackboneSpec backbone_by_name(std::string_view name) {
  if (name == "desk") return BackboneSpec::desk();
  if (name == "tiny") return BackboneSpec::tiny();
  if (name == "full") return BackboneSpec{};
  throw UsageError("unknown backbone '" + std::string(name) + "' (expected desk, tiny or full)");
}

void ExperimentConfig::validate() const {
  const auto& ids = subprotocol_ids();
  if (std::find(ids.begin(), ids.end(), protocol) == ids.end())
    throw UsageError("unknown sub-protocol '" + protocol + "'");
  net.validate();
  train.validate();
  augment.validate();
  if (threads < 1) throw UsageError("threads must be at least 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("threshold must lie in [0, 1]");
}

void apply_overrides(ExperimentConfig& c, const KeyValues& kv) {
  const std::map<std::string, Setter> table{
      {"protocol", [&](auto&, auto& v) { c.protocol = v; }},
      {"include_3d", [&](auto& k, auto& v) { c.include_3d = parse_bool(k, v); }},
      {"backbone",
       [&](auto&, auto& v) {
         c.net.backbone = backbone_by_name(v);
         c.backbone = v;
       }},
      {"variant", [&](auto&, auto& v) { c.net.variant = parse_variant(v); }},
      {"modalities", [&](auto&, auto& v) { c.net.modalities = parse_modalities(v); }},
      {"branches", [&](auto&, auto& v) { c.net.branches = parse_branch_set(v); }},
      {"epochs", [&](auto& k, auto& v) { c.train.epochs = static_cast<int>(to_int(k, v, 1)); }},
      {"lr",
       [&](auto& k, auto& v) { c.train.lr0 = v == "full_scale" ? TrainConfig::full_scale().lr0 : to_double(k, v); }},
      {"decay_epochs",
       [&](auto& k, auto& v) {
         c.train.decay_epochs.clear();
         if (v.empty() || v == "none") return;
         for (const auto& f : split(v, ',')) c.train.decay_epochs.push_back(static_cast<int>(to_int(k, f, 0)));
       }},
      {"decay_factor", [&](auto& k, auto& v) { c.train.decay_factor = to_double(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.train.batch_size = static_cast<std::size_t>(to_int(k, v, 1)); }},
      {"window", [&](auto& k, auto& v) { c.train.window = static_cast<std::size_t>(to_int(k, v, 2)); }},
      {"seed", [&](auto& k, auto& v) { c.train.seed = static_cast<std::uint64_t>(to_int(k, v, 0)); }},
      {"deterministic", [&](auto& k, auto& v) { c.train.deterministic = parse_bool(k, v); }},
      {"samples_per_video",
       [&](auto& k, auto& v) { c.train.samples_per_video = static_cast<std::size_t>(to_int(k, v, 1)); }},
      {"balance_classes", [&](auto& k, auto& v) { c.train.balance_classes = parse_bool(k, v); }},
      {"adam_beta1", [&](auto& k, auto& v) { c.train.adam.beta1 = to_double(k, v); }},
      {"adam_beta2", [&](auto& k, auto& v) { c.train.adam.beta2 = to_double(k, v); }},
      {"adam_epsilon", [&](auto& k, auto& v) { c.train.adam.epsilon = to_double(k, v); }},
      {"aug_rotation", [&](auto& k, auto& v) { c.augment.max_rotation_deg = to_double(k, v); }},
      {"aug_flip", [&](auto& k, auto& v) { c.augment.flip_probability = to_double(k, v); }},
      {"aug_crop_min", [&](auto& k, auto& v) { c.augment.min_crop_scale = to_double(k, v); }},
      {"aug_crop_max", [&](auto& k, auto& v) { c.augment.max_crop_scale = to_double(k, v); }},
      {"aug_brightness", [&](auto& k, auto& v) { c.augment.brightness = to_double(k, v); }},
      {"aug_contrast", [&](auto& k, auto& v) { c.augment.contrast = to_double(k, v); }},
      {"threads", [&](auto& k, auto& v) { c.threads = static_cast<std::size_t>(to_int(k, v, 1)); }},
      {"threshold", [&](auto& k, auto& v) { c.threshold = to_double(k, v); }},
      {"apcer_mode",
       [&](auto& k, auto& v) {
         if (v == "pooled") c.apcer_mode = ApcerMode::kPooled;
         else if (v == "max") c.apcer_mode = ApcerMode::kMaxOverPai;
         else throw UsageError("config key '" + k + "': expected pooled or max");
       }},
  };
  apply_table(table, kv, "experiment");
}

KeyValues to_key_values(const ExperimentConfig& c) {
  const auto& a = c.augment;
  const auto& t = c.train;
  return {
      {"protocol", c.protocol},
      {"include_3d", c.include_3d ? "true" : "false"},
      {"backbone", c.backbone},
      {"variant", std::string(variant_name(c.net.variant))},
      {"modalities", modalities_string(c.net.modalities)},
      {"branches", std::string(branch_set_name(c.net.branches))},
      {"epochs", std::to_string(t.epochs)},
      {"lr", format_double(t.lr0)},
      {"decay_epochs", t.decay_epochs.empty() ? "none" : join_ints(t.decay_epochs)},
      {"decay_factor", format_double(t.decay_factor)},
      {"batch_size", std::to_string(t.batch_size)},
      {"window", std::to_string(t.window)},
      {"seed", std::to_string(t.seed)},
      {"deterministic", t.deterministic ? "true" : "false"},
      {"samples_per_video", std::to_string(t.samples_per_video)},
      {"balance_classes", t.balance_classes ? "true" : "false"},
      {"adam_beta1", format_double(t.adam.beta1)},
      {"adam_beta2", format_double(t.adam.beta2)},
      {"adam_epsilon", format_double(t.adam.epsilon)},
      {"aug_rotation", format_double(a.max_rotation_deg)},
      {"aug_flip", format_double(a.flip_probability)},
      {"aug_crop_min", format_double(a.min_crop_scale)},
      {"aug_crop_max", format_double(a.max_crop_scale)},
      {"aug_brightness", format_double(a.brightness)},
      {"aug_contrast", format_double(a.contrast)},
      {"threads", std::to_string(c.threads)},
      {"threshold", format_double(c.threshold)},
      {"apcer_mode", c.apcer_mode == ApcerMode::kPooled ? "pooled" : "max"},
  };
}

void apply_overrides(SynthConfig& c, const KeyValues& kv) {
  auto int_key = [](int& field, long long lo) {
    return [&field, lo](const std::string& k, const std::string& v) { field = static_cast<int>(to_int(k, v, lo)); };
  };
  const std::map<std::string, Setter> table{
      {"subjects_per_ethnicity", int_key(c.subjects_per_ethnicity, 1)},
      {"clip_length", int_key(c.clip_length, 1)},
      {"frame_size", int_key(c.frame_size, 1)},
      {"seed", [&](auto& k, auto& v) { c.seed = static_cast<std::uint64_t>(to_int(k, v, 0)); }},
      {"motion_amplitude", [&](auto& k, auto& v) { c.motion_amplitude = to_double(k, v); }},
      {"static_replay", [&](auto& k, auto& v) { c.static_replay = parse_bool(k, v); }},
      {"flicker_period", int_key(c.flicker_period, 1)},
      {"flicker_depth", [&](auto& k, auto& v) { c.flicker_depth = to_double(k, v); }},
      {"planar_attack_depth", [&](auto& k, auto& v) { c.planar_attack_depth = parse_bool(k, v); }},
      {"mask_subjects", int_key(c.mask_subjects, 0)},
      {"mask_samples", int_key(c.mask_samples, 1)},
      {"silica_subjects", int_key(c.silica_subjects, 0)},
      {"silica_samples", int_key(c.silica_samples, 1)},
  };
  apply_table(table, kv, "synth");
}

KeyValues to_key_values(const SynthConfig& c) {
  return {
      {"subjects_per_ethnicity", std::to_string(c.subjects_per_ethnicity)},
      {"clip_length", std::to_string(c.clip_length)},
      {"frame_size", std::to_string(c.frame_size)},
      {"seed", std::to_string(c.seed)},
      {"motion_amplitude", format_double(c.motion_amplitude)},
      {"static_replay", c.static_replay ? "true" : "false"},
      {"flicker_period", std::to_string(c.flicker_period)},
      {"flicker_depth", format_double(c.flicker_depth)},
      {"planar_attack_depth", c.planar_attack_depth ? "true" : "false"},
      {"mask_subjects", std::to_string(c.mask_subjects)},
      {"mask_samples", std::to_string(c.mask_samples)},
      {"silica_subjects", std::to_string(c.silica_subjects)},
      {"silica_samples", std::to_string(c.silica_samples)},
  };
}

}  // namespace sdfas
