#include "sdfas/dynimg.hpp"

#include <algorithm>
#include <cmath>

#include "sdfas/errors.hpp"

namespace sdfas {

double RankPoolConfig::delta() const {
  const double k = static_cast<double>(window);
  return 2.0 / (k * (k - 1.0));
}

void RankPoolConfig::validate() const {
  if (window < 2) throw UsageError("rank pooling window must be at least 2");
  if (!(tolerance > 0.0)) throw UsageError("rank pooling tolerance must be positive");
  if (max_iterations == 0) throw UsageError("rank pooling needs at least one iteration");
  if (!(min_step > 0.0 && min_step < 1.0)) throw UsageError("rank pooling min_step must lie in (0, 1)");
}

std::vector<Tensor> prefix_mean(const FrameSequence& seq) { return prefix_mean(std::span<const Tensor>(seq.frames)); }

std::vector<Tensor> prefix_mean(std::span<const Tensor> frames) {
  if (frames.empty()) throw DataError("prefix_mean: empty sequence");
  if (frames.size() < 2) throw DataError("prefix_mean: need at least 2 frames");
  const Shape& shape = frames[0].shape();
  // Running update m_i = m_{i-1} + (x_i - m_{i-1}) / i, which keeps a constant
  // sequence exactly constant.
  Tensor running(shape);
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].shape() != shape) {
      throw ShapeError("prefix_mean: frame " + std::to_string(i) + " has shape " + shape_str(frames[i].shape()) +
                       ", expected " + shape_str(shape));
    }
    if (!frames[i].all_finite()) throw NumericError("prefix_mean: frame " + std::to_string(i) + " is not finite");
    const double n = static_cast<double>(i + 1);
    for (std::size_t e = 0; e < running.size(); ++e) running[e] += (frames[i][e] - running[e]) / n;
    out.push_back(running);
  }
  return out;
}

namespace {

void check_means(std::span<const Tensor> means) {
  if (means.size() < 2) throw DataError("rank pooling needs at least 2 prefix means");
  for (const auto& v : means) {
    if (v.shape() != means[0].shape()) throw ShapeError("rank pooling: prefix means differ in shape");
    if (!v.all_finite()) throw NumericError("rank pooling: non-finite prefix mean");
  }
}

// Pairwise differences V_i - V_j for i > j, in (i, j) lexicographic order.
std::vector<Tensor> pair_differences(std::span<const Tensor> means) {
  std::vector<Tensor> diffs;
  for (std::size_t i = 1; i < means.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) diffs.push_back(means[i] - means[j]);
  return diffs;
}

struct GramProblem {
  std::size_t n = 0;
  std::vector<double> gram;  // n x n
  double delta = 0.0;

  double g(std::size_t p, std::size_t q) const { return gram[p * n + q]; }

  // Returns objective of d = sum_p beta_p a_p.
  double objective(const std::vector<double>& beta) const {
    double quad = 0.0, hinge = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      double margin = 0.0;
      for (std::size_t q = 0; q < n; ++q) margin += g(p, q) * beta[q];
      quad += beta[p] * margin;
      hinge += std::max(0.0, 1.0 - margin);
    }
    return 0.5 * quad + delta * hinge;
  }

  double dual(const std::vector<double>& lambda, const std::vector<double>& glambda) const {
    double lin = 0.0, quad = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      lin += lambda[p];
      quad += lambda[p] * glambda[p];
    }
    return lin - 0.5 * quad;
  }
};

}  // namespace

double rank_pool_objective(std::span<const Tensor> means, const Tensor& d) {
  check_means(means);
  if (d.shape() != means[0].shape()) throw ShapeError("rank_pool_objective: d shape mismatch");
  const double k = static_cast<double>(means.size());
  const double delta = 2.0 / (k * (k - 1.0));
  double hinge = 0.0;
  for (std::size_t i = 1; i < means.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      double margin = 0.0;
      for (std::size_t e = 0; e < d.size(); ++e) margin += d[e] * (means[i][e] - means[j][e]);
      hinge += std::max(0.0, 1.0 - margin);
    }
  return 0.5 * dot(d, d) + delta * hinge;
}

DynamicImage rank_pool_fit(std::span<const Tensor> means, const RankPoolConfig& cfg) {
  cfg.validate();
  check_means(means);
  if (means.size() != cfg.window) {
    throw DataError("rank_pool_fit: got " + std::to_string(means.size()) + " prefix means for window " +
                    std::to_string(cfg.window));
  }
  const auto diffs = pair_differences(means);
  GramProblem prob;
  prob.n = diffs.size();
  prob.delta = cfg.delta();
  prob.gram.assign(prob.n * prob.n, 0.0);
  for (std::size_t p = 0; p < prob.n; ++p)
    for (std::size_t q = 0; q <= p; ++q) prob.gram[p * prob.n + q] = prob.gram[q * prob.n + p] = dot(diffs[p], diffs[q]);

  std::vector<double> beta(prob.n, 0.0), lambda(prob.n, 0.0), glambda(prob.n, 0.0), trial(prob.n);
  DynamicImage out;
  double f = prob.objective(beta);
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    for (std::size_t p = 0; p < prob.n; ++p) {
      const double gpp = prob.g(p, p);
      const double next = gpp > 0.0 ? std::clamp(lambda[p] + (1.0 - glambda[p]) / gpp, 0.0, prob.delta) : prob.delta;
      const double change = next - lambda[p];
      if (change == 0.0) continue;
      lambda[p] = next;
      for (std::size_t q = 0; q < prob.n; ++q) glambda[q] += change * prob.g(q, p);
    }
    for (double t = 1.0; t >= cfg.min_step; t *= 0.5) {
      for (std::size_t p = 0; p < prob.n; ++p) trial[p] = beta[p] + t * (lambda[p] - beta[p]);
      const double ft = prob.objective(trial);
      if (ft < f) {
        beta = trial;
        f = ft;
        break;
      }
    }
    out.objective_trace.push_back(f);
    out.iterations = it + 1;
    const double gap = f - prob.dual(lambda, glambda);
    if (gap <= cfg.tolerance * std::max(1.0, std::abs(f))) {
      out.converged = true;
      break;
    }
  }

  out.d = Tensor(means[0].shape());
  for (std::size_t p = 0; p < prob.n; ++p) {
    if (beta[p] == 0.0) continue;
    for (std::size_t e = 0; e < out.d.size(); ++e) out.d[e] += beta[p] * diffs[p][e];
  }
  out.objective = rank_pool_objective(means, out.d);
  out.first = 0;
  out.last = means.size() - 1;
  return out;
}

std::vector<Tensor> trailing_window(const FrameSequence& video, std::size_t index, std::size_t window) {
  if (video.frames.empty()) throw DataError("dynamic image: empty video");
  if (index >= video.frames.size()) {
    throw DataError("dynamic image: frame index " + std::to_string(index) + " out of range for " +
                    std::to_string(video.frames.size()) + " frames");
  }
  std::vector<Tensor> out;
  out.reserve(window);
  for (std::size_t w = 0; w < window; ++w) {
    const long src = static_cast<long>(index) - static_cast<long>(window - 1 - w);
    out.push_back(video.frames[static_cast<std::size_t>(std::max(0L, src))]);
  }
  return out;
}

DynamicImage dynamic_image_at(const FrameSequence& video, std::size_t index, const RankPoolConfig& cfg) {
  cfg.validate();
  const auto window = trailing_window(video, index, cfg.window);
  DynamicImage out = rank_pool_fit(prefix_mean(std::span<const Tensor>(window)), cfg);
  out.first = video.origin + (index + 1 >= cfg.window ? index + 1 - cfg.window : 0);
  out.last = video.origin + index;
  return out;
}

Image8 to_display(const Tensor& d) {
  if (d.empty()) throw ShapeError("to_display: empty tensor");
  if (!d.all_finite()) throw NumericError("to_display: non-finite dynamic image");
  Image8 img;
  if (d.rank() == 3) {
    img.channels = d.dim(0);
    img.height = d.dim(1);
    img.width = d.dim(2);
  } else {
    img.channels = 1;
    img.height = 1;
    img.width = d.size();
  }
  img.pixels.resize(d.size());
  const auto [lo, hi] = std::minmax_element(d.data().begin(), d.data().end());
  const double mn = *lo, mx = *hi;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (mx == mn) {
      img.pixels[i] = 128;
      continue;
    }
    const double v = (d[i] - mn) / (mx - mn) * 255.0;
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  }
  return img;
}

}  // namespace sdfas
