#include "sdfas/runrecord.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "sdfas/errors.hpp"

namespace sdfas {

std::string git_blob_id(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error("SHA-1 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string git_blob_id_of_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return git_blob_id(ss.str());
}

void RunRecord::set_config(const KeyValues& kv) {
  config = kv;
  config_hash = git_blob_id(format_key_values(kv));
}

void RunRecord::add_input(const std::string& role, const std::filesystem::path& path) {
  inputs.push_back({role, path.generic_string(), git_blob_id_of_file(path)});
}

void RunRecord::add_output(const std::string& role, const std::filesystem::path& path) {
  outputs.push_back({role, path.generic_string(), git_blob_id_of_file(path)});
}

void RunRecord::add_timing(const std::string& name, double seconds) { timings.emplace_back(name, seconds); }

std::string RunRecord::to_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["command"] = command;
  j["argv"] = argv;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["config"] = ordered_json::object();
  for (const auto& [k, v] : config) j["config"][k] = v;
  auto artifacts = [](const std::vector<Artifact>& list) {
    ordered_json a = ordered_json::array();
    for (const auto& x : list) a.push_back({{"role", x.role}, {"path", x.path}, {"id", x.id}});
    return a;
  };
  j["inputs"] = artifacts(inputs);
  j["outputs"] = artifacts(outputs);
  j["timings"] = ordered_json::object();
  for (const auto& [k, v] : timings) j["timings"][k] = v;
  return j.dump(2) + "\n";
}

void RunRecord::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << to_json();
  if (!os) throw DataError("write failed: " + path.string());
}

std::filesystem::path record_path_for_dir(const std::filesystem::path& dir) { return dir / "run_record.json"; }

std::filesystem::path record_path_for_file(const std::filesystem::path& file) {
  auto p = file;
  p += ".run.json";
  return p;
}

}  // namespace sdfas
