// Brute-force reference for rank pooling on scalar or 2-vector frames. It
// evaluates the hinge objective on its own and shares no code with the solver.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "sdfas/dynimg.hpp"
#include "sdfas/errors.hpp"

namespace sdfas {
namespace {

constexpr double kFinalStep = 1e-4;
constexpr int kPoints = 41;

struct Point {
  double x = 0.0;
  double value = std::numeric_limits<double>::infinity();
};

// Coarse-to-fine grid over [lo, hi] for a convex 1-D function. The continuous
// minimizer of a convex function lies within one grid step of the grid
// argmin, so keeping a +/-2 step bracket never loses it.
Point grid_min(const std::function<double(double)>& fn, double lo, double hi, double final_step) {
  Point best;
  for (;;) {
    const double step = (hi - lo) / (kPoints - 1);
    best = Point{};
    for (int i = 0; i < kPoints; ++i) {
      const double x = lo + step * i;
      const double v = fn(x);
      if (v < best.value) best = Point{x, v};
    }
    if (step <= final_step) return best;
    lo = best.x - 2.0 * step;
    hi = best.x + 2.0 * step;
  }
}

}  // namespace

DynamicImage rank_pool_oracle(std::span<const Tensor> means, double bound) {
  if (means.size() < 2) throw DataError("rank_pool_oracle: need at least 2 prefix means");
  const std::size_t dim = means[0].size();
  if (dim == 0 || dim > 2) throw DataError("rank_pool_oracle: only scalar or 2-vector frames are supported");

  std::vector<std::array<double, 2>> diffs;
  for (std::size_t i = 1; i < means.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      std::array<double, 2> a{0.0, 0.0};
      for (std::size_t e = 0; e < dim; ++e) a[e] = means[i][e] - means[j][e];
      diffs.push_back(a);
    }
  const double k = static_cast<double>(means.size());
  const double delta = 2.0 / (k * (k - 1.0));
  auto objective = [&](double x, double y) {
    double hinge = 0.0;
    for (const auto& a : diffs) {
      const double slack = 1.0 - (a[0] * x + a[1] * y);
      if (slack > 0.0) hinge += slack;
    }
    return 0.5 * (x * x + y * y) + delta * hinge;
  };

  DynamicImage out;
  out.d = Tensor(means[0].shape());
  if (dim == 1) {
    const Point p = grid_min([&](double x) { return objective(x, 0.0); }, -bound, bound, kFinalStep);
    out.d[0] = p.x;
    out.objective = p.value;
  } else {
    // min over (x, y) = min over x of (min over y); the inner minimum is convex in x.
    auto inner = [&](double x) {
      return grid_min([&](double y) { return objective(x, y); }, -bound, bound, kFinalStep * 1e-2);
    };
    const Point px = grid_min([&](double x) { return inner(x).value; }, -bound, bound, kFinalStep);
    const Point py = inner(px.x);
    out.d[0] = px.x;
    out.d[1] = py.x;
    out.objective = py.value;
  }
  out.converged = true;
  out.last = means.size() - 1;
  return out;
}

}  // namespace sdfas
