#pragma once

#include <array>
#include <string>
#include <string_view>

namespace sdfas {

enum class Modality { kColor, kDepth, kIr };

inline constexpr std::array<Modality, 3> kAllModalities{Modality::kColor, Modality::kDepth, Modality::kIr};

// Single-letter tags used in manifests, video headers and CLI flags.
char modality_tag(Modality m);
Modality modality_from_tag(char tag);
// "color", "depth", "ir"; used as parameter-name prefixes.
std::string_view modality_name(Modality m);
std::size_t modality_channels(Modality m);

}  // namespace sdfas
