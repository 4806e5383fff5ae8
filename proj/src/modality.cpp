#include "sdfas/modality.hpp"

#include "sdfas/errors.hpp"

namespace sdfas {

char modality_tag(Modality m) {
  switch (m) {
    case Modality::kColor: return 'R';
    case Modality::kDepth: return 'D';
    case Modality::kIr: return 'I';
  }
  return '?';
}

Modality modality_from_tag(char tag) {
  switch (tag) {
    case 'R': return Modality::kColor;
    case 'D': return Modality::kDepth;
    case 'I': return Modality::kIr;
    default: throw DataError(std::string("unknown modality tag '") + tag + "'");
  }
}

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kColor: return "color";
    case Modality::kDepth: return "depth";
    case Modality::kIr: return "ir";
  }
  return "?";
}

std::size_t modality_channels(Modality m) { return m == Modality::kColor ? 3 : 1; }

}  // namespace sdfas
