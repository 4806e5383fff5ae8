#include "sdfas/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "sdfas/errors.hpp"

namespace sdfas {
namespace {

constexpr std::array<char, 8> kMagic{'S', 'D', 'F', 'A', 'S', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "archive IO assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError(std::string("tensor archive truncated while reading ") + what);
  }
  return v;
}

}  // namespace

void write_tensors(std::ostream& os, const NamedTensors& tensors) {
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw DataError("failed to write tensor archive");
}

NamedTensors read_tensors(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw DataError("not a tensor archive (bad magic)");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) throw DataError("unsupported tensor archive version " + std::to_string(version));
  const auto count = get<std::uint64_t>(is, "count");
  NamedTensors out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is, "name length");
    if (len > (1u << 16)) throw DataError("tensor archive: implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError("tensor archive truncated in name");
    const auto rank = get<std::uint32_t>(is, "rank");
    if (rank > 8) throw DataError("tensor archive: implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is, "dims");
    std::vector<double> data(shape_size(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw DataError("tensor archive truncated in payload of '" + name + "'");
    }
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_tensors(os, tensors);
}

NamedTensors load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_tensors(is);
}

void save_checkpoint(const std::filesystem::path& path, const Graph& graph) {
  NamedTensors tensors;
  for (const auto& p : graph.parameters()) tensors.emplace_back(p.name, p.value);
  save_tensors(path, tensors);
}

void load_checkpoint(const std::filesystem::path& path, Graph& graph) {
  std::map<std::string, Tensor> byname;
  for (auto& [name, t] : load_tensors(path)) byname.emplace(std::move(name), std::move(t));
  for (auto& p : graph.parameters()) {
    auto it = byname.find(p.name);
    if (it == byname.end()) throw DataError("checkpoint " + path.string() + " lacks parameter '" + p.name + "'");
    if (it->second.shape() != p.value.shape()) {
      throw DataError("checkpoint parameter '" + p.name + "' has shape " + shape_str(it->second.shape()) +
                      ", graph expects " + shape_str(p.value.shape()));
    }
    p.value = it->second;
  }
}

}  // namespace sdfas
