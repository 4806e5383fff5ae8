#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "sdfas/graph.hpp"
#include "sdfas/tensor.hpp"

namespace sdfas {

// Binary tensor archive, all integers little-endian:
//   magic "SDFASCKP" (8 bytes), u32 version (=1), u64 count, then per tensor:
//   u32 name length, name bytes, u32 rank, rank x u64 dims,
//   product(dims) x f64 payload.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_tensors(std::ostream& os, const NamedTensors& tensors);
NamedTensors read_tensors(std::istream& is);

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const Graph& graph);
// Every parameter of `graph` must be present with a matching shape.
void load_checkpoint(const std::filesystem::path& path, Graph& graph);

}  // namespace sdfas
