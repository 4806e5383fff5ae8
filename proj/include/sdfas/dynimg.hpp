#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdfas/modality.hpp"
#include "sdfas/tensor.hpp"

namespace sdfas {

/// Ordered frames of one modality clip. Frames are {C, H, W} tensors.
struct FrameSequence {
  std::vector<Tensor> frames;
  Modality modality = Modality::kColor;
  std::size_t origin = 0;  // index of frames[0] in the source video
};

struct RankPoolConfig {
  std::size_t window = 7;
  std::size_t max_iterations = 20000;
  // Stop once the primal-dual gap is below tolerance * max(1, objective).
  double tolerance = 1e-13;
  // Smallest backtracking step tried before an iteration is skipped.
  double min_step = 1e-12;

  double delta() const;
  void validate() const;
};

struct DynamicImage {
  Tensor d;
  std::size_t first = 0;  // source window, inclusive, in video frame indices
  std::size_t last = 0;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // objective after every iteration
};

struct Image8 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // {C, H, W} planar
};

// V_i = mean(frame_1..frame_i).
std::vector<Tensor> prefix_mean(const FrameSequence& seq);
std::vector<Tensor> prefix_mean(std::span<const Tensor> frames);

// 1/2 |d|^2 + delta * sum_{i>j} max(0, 1 - d.(V_i - V_j)), with delta = 2/(K(K-1)).
double rank_pool_objective(std::span<const Tensor> means, const Tensor& d);

/// Solves the rank-pooling problem in unconstrained hinge form.
///
/// The iterate stays in the span of the pairwise differences, so the work is
/// done on their Gram matrix. Each iteration runs one dual coordinate-ascent
/// sweep and then a backtracking line search on the primal objective toward
/// the point the dual variables induce; a step is accepted only if it lowers
/// the objective, so the recorded trace never increases. Termination is on
/// the primal-dual gap.
DynamicImage rank_pool_fit(std::span<const Tensor> means, const RankPoolConfig& cfg);

/// Grid-search minimizer for scalar or 2-vector frames (brute force, used as a
/// reference for the solver). Refines to a step of 1e-4 inside [-bound, bound].
DynamicImage rank_pool_oracle(std::span<const Tensor> means, double bound = 50.0);

// Window of `cfg.window` frames ending at `index`; frames before the start of
// the video are replaced by frame 0.
std::vector<Tensor> trailing_window(const FrameSequence& video, std::size_t index, std::size_t window);
DynamicImage dynamic_image_at(const FrameSequence& video, std::size_t index, const RankPoolConfig& cfg);

// Per-image min-max normalization to [0, 255] with round-half-up; a constant
// image maps to 128.
Image8 to_display(const Tensor& d);

}  // namespace sdfas
