#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sdfas/dynimg.hpp"
#include "sdfas/graph.hpp"
#include "sdfas/metrics.hpp"
#include "sdfas/netgraph.hpp"
#include "sdfas/protocols.hpp"

namespace sdfas {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m, v;  // per parameter, allocated on the first step
};

// One bias-corrected Adam update of every parameter from its .grad.
// Non-finite gradients raise NumericError naming the parameter; nothing is
// modified in that case.
void adam_step(std::vector<Parameter>& params, AdamState& state, double lr, const AdamConfig& cfg = {});

struct TrainConfig {
  int epochs = 25;
  AdamConfig adam;
  double lr0 = 1e-3;
  std::vector<int> decay_epochs{15, 20};
  double decay_factor = 10.0;
  std::size_t batch_size = 64;
  std::size_t window = 7;  // rank-pool K
  std::uint64_t seed = 1;
  bool deterministic = true;
  // Training samples drawn from every video per epoch.
  std::size_t samples_per_video = 1;
  // Repeat minority-class videos so that bona fide and attack samples are
  // drawn equally often.
  bool balance_classes = true;

  void validate() const;
  // lr0 = 0.1 for full-size networks; the default 1e-3 suits the desk backbone.
  static TrainConfig full_scale();
};

// lr0 divided by decay_factor once for every decay epoch <= epoch.
double lr_at(int epoch, const TrainConfig& cfg);

// Uniform draws built from raw generator bits, so sequences do not depend on
// the standard library's distribution implementations.
double uniform01(std::mt19937_64& rng);
double uniform(std::mt19937_64& rng, double lo, double hi);
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

struct AugmentConfig {
  double max_rotation_deg = 180.0;  // angle ~ U[-max, max]
  double flip_probability = 0.5;
  double min_crop_scale = 0.8;  // crop side as a fraction of the image side
  double max_crop_scale = 1.0;
  double brightness = 0.1;  // additive offset ~ U[-b, b], RGB static only
  double contrast = 0.1;    // gain ~ U[1-c, 1+c] about the image mean

  void validate() const;
  static AugmentConfig none();
};

/// Maps output pixel coordinates to source coordinates, pixel centers at
/// integer positions and c the image center:
///   source(p) = c + shift + F R(angle) (scale (p - c)),
/// where F negates the x component when flipping.
struct GeometricTransform {
  double angle = 0.0;  // radians
  bool flip = false;
  double scale = 1.0;  // crop side / image side
  double shift_x = 0.0, shift_y = 0.0;  // crop center offset in pixels

  std::pair<double, double> source(double x, double y, std::size_t height, std::size_t width) const;
  bool identity() const { return angle == 0.0 && !flip && scale == 1.0 && shift_x == 0.0 && shift_y == 0.0; }
};

struct ColorJitter {
  double brightness = 0.0;
  double contrast = 1.0;
};

GeometricTransform sample_geometry(std::mt19937_64& rng, const AugmentConfig& cfg, std::size_t size);
ColorJitter sample_color(std::mt19937_64& rng, const AugmentConfig& cfg);
// Bilinear resampling of a {C, H, W} image; points outside read the nearest
// edge pixel.
Tensor warp(const Tensor& image, const GeometricTransform& t);
// Values are clamped to [0, 1] afterwards.
Tensor apply_color(const Tensor& image, const ColorJitter& c);

// One geometric draw is applied to both images of every modality so the
// pairs and modalities stay aligned; one color draw applies to the RGB
// static image.
NetInputs augment(const NetInputs& inputs, std::mt19937_64& rng, const AugmentConfig& cfg);

// One modality clip resized to the network input, cached as 8-bit images.
struct PreparedClip {
  std::vector<Image8> frames;
  std::vector<Image8> dynamics;  // dynamics[i] pools the trailing window ending at frame i
};

// All modality clips of one presentation.
struct PreparedVideo {
  std::string id;  // presentation id
  Label label = Label::kAttack;
  std::string pai;
  std::map<Modality, PreparedClip> clips;

  std::size_t length() const;
};

using ClipLoader = std::function<FrameSequence(const ManifestEntry&)>;

// Groups entries by presentation, loads the requested modalities, resizes
// frames to `size` and computes every frame's dynamic image. Results do not
// depend on `threads`.
std::vector<PreparedVideo> prepare_videos(const Manifest& entries, const ClipLoader& load,
                                          const std::vector<Modality>& modalities, std::size_t size,
                                          const RankPoolConfig& pool, std::size_t threads = 1);
// Loads clips from root / entry.video_path.
std::vector<PreparedVideo> prepare_videos(const Manifest& entries, const std::filesystem::path& root,
                                          const std::vector<Modality>& modalities, std::size_t size,
                                          const RankPoolConfig& pool, std::size_t threads = 1);

Tensor to_tensor(const Image8& image);  // divided by 255
NetInputs frame_inputs(const PreparedVideo& video, std::size_t frame);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  LossBundle loss;  // epoch means
  std::optional<MetricReport> validation;
};

struct TrainOutput {
  std::filesystem::path dir;  // empty: nothing is written
  bool keep_epoch_checkpoints = true;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t steps = 0;
  std::filesystem::path checkpoint;  // last good checkpoint, empty without output dir
};

/// Mini-batch training of net.total_loss(). Each sample is a uniformly random
/// frame of a training video with the dynamic image of its trailing window,
/// augmented and fed with the video's label; gradients are averaged over the
/// batch. Per step and per epoch records go to dir/train_log.jsonl, and the
/// model is saved to dir/model.ckpt (plus dir/epoch_NN.ckpt) after every
/// epoch. A non-finite loss raises NumericError and leaves model.ckpt at the
/// last finished epoch.
TrainResult train(Network& net, const std::vector<PreparedVideo>& train_set, const std::vector<PreparedVideo>* valid,
                  const TrainConfig& cfg, const AugmentConfig& aug, const TrainOutput& out = {},
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Mean liveness score over frames K-1..L-1 (all frames of shorter clips).
double score_video(Network& net, const PreparedVideo& video, std::size_t window);
ScoredSet score_videos(Network& net, const std::vector<PreparedVideo>& videos, std::size_t window,
                       const std::string& subprotocol);

}  // namespace sdfas
