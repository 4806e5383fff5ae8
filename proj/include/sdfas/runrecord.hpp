#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sdfas/config.hpp"

namespace sdfas {

// Git blob object id: hex SHA-1 of "blob <size>\0" followed by the bytes.
std::string git_blob_id(std::string_view bytes);
std::string git_blob_id_of_file(const std::filesystem::path& path);

/// Provenance of one CLI invocation: its command line, resolved config and
/// the ids of every file it read or wrote.
struct RunRecord {
  struct Artifact {
    std::string role;
    std::string path;
    std::string id;
  };

  std::string command;  // subcommand name
  std::vector<std::string> argv;
  KeyValues config;
  std::string config_hash;  // git_blob_id of the key-value text
  std::uint64_t seed = 0;
  std::vector<Artifact> inputs, outputs;
  std::vector<std::pair<std::string, double>> timings;  // seconds

  void set_config(const KeyValues& kv);
  void add_input(const std::string& role, const std::filesystem::path& path);
  void add_output(const std::string& role, const std::filesystem::path& path);
  void add_timing(const std::string& name, double seconds);

  std::string to_json() const;
  void save(const std::filesystem::path& path) const;
};

// DIR/run_record.json for directory outputs, FILE.run.json for a single file.
std::filesystem::path record_path_for_dir(const std::filesystem::path& dir);
std::filesystem::path record_path_for_file(const std::filesystem::path& file);

}  // namespace sdfas
