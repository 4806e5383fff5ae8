#pragma once

#include <filesystem>
#include <optional>

#include "sdfas/dynimg.hpp"

namespace sdfas {

// Binary PGM (P5, one channel) and PPM (P6, three channels), maxval 255.
void save_pnm(const std::filesystem::path& path, const Image8& image);
// Frame values are 0..255 doubles in {C, H, W} layout.
Tensor load_pnm(const std::filesystem::path& path);

// Every *.pgm / *.ppm file of `dir` in file-name order. The modality defaults
// to color for three channels and depth for one.
FrameSequence load_frame_dir(const std::filesystem::path& dir, std::optional<Modality> modality = std::nullopt);

}  // namespace sdfas
