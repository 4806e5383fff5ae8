#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "sdfas/dynimg.hpp"
#include "sdfas/protocols.hpp"

namespace sdfas {

struct SynthConfig {
  int subjects_per_ethnicity = 60;
  int clip_length = 12;
  int frame_size = 40;
  std::uint64_t seed = 1;
  double motion_amplitude = 0.12;  // head displacement, fraction of half the frame
  bool static_replay = true;       // replayed clip shows a still face
  int flicker_period = 4;          // replay screen flicker, frames
  double flicker_depth = 0.2;      // relative brightness swing
  bool planar_attack_depth = true;
  // 3D subset (ethnicity '-'); zero subjects disables it.
  int mask_subjects = 0, mask_samples = 18;
  int silica_subjects = 0, silica_samples = 8;

  void validate() const;
  // 500 subjects per ethnicity plus the 99 x 18 mask and 8 x 8 silica-gel
  // subsets: 18000 2D entries and 5538 3D entries.
  static SynthConfig canonical();
};

// Per-ethnicity subject ids: the train, valid and test ranges (1-200,
// 201-300, 301-500) are filled in 2:1:2 proportion from their first id.
std::vector<int> subject_ids(int subjects_per_ethnicity);

// Manifest rows only; paths follow the layout synth_dataset writes.
Manifest synth_manifest(const SynthConfig& cfg);
// Renders every clip under out_dir/videos and writes out_dir/manifest.csv.
Manifest synth_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

// One clip with 8-bit valued frames ({C, H, W}, values 0..255).
FrameSequence render_clip(const SynthConfig& cfg, const ManifestEntry& entry);

// Raw frame container, documented in docs/formats.md.
enum class PixelType : std::uint8_t { kU8 = 1, kF64 = 2 };
void write_video(std::ostream& os, const FrameSequence& video, PixelType type);
FrameSequence read_video(std::istream& is);
void save_video(const std::filesystem::path& path, const FrameSequence& video, PixelType type = PixelType::kU8);
FrameSequence load_video(const std::filesystem::path& path);

// Bilinear resize (half-pixel centers) to size x size and scaling by 1/255.
Tensor preprocess(const Tensor& frame, std::size_t size);
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

// Separability features: mean per-pixel temporal variance of a clip, and the
// RMS residual of a least-squares plane fit to a depth frame.
double temporal_variance(const FrameSequence& clip);
double depth_planarity(const Tensor& depth);

}  // namespace sdfas
