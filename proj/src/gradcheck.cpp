#include "sdfas/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sdfas/errors.hpp"

namespace sdfas {
namespace {

std::vector<bool> relu_pattern(const Graph& g) {
  std::vector<bool> bits;
  for (const auto& n : g.nodes()) {
    if (n.kind != OpKind::kRelu) continue;
    for (double v : g.value(NodeRef{n.inputs[0]}).data()) bits.push_back(v > 0.0);
  }
  return bits;
}

}  // namespace

GradCheckReport grad_check(Graph& graph, NodeRef loss, double epsilon, std::size_t max_per_parameter) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw UsageError("grad_check: epsilon must lie in (0, 1e-2]");
  graph.forward();
  graph.backward(loss);
  const auto analytic = graph.gradients();
  const auto base_pattern = relu_pattern(graph);

  GradCheckReport report;
  auto eval_at = [&](Parameter& p, std::size_t i, double x, std::vector<bool>* pattern) {
    p.value[i] = x;
    graph.forward();
    if (pattern) *pattern = relu_pattern(graph);
    return graph.value(loss).item();
  };

  for (auto& p : graph.parameters()) {
    const Tensor& ga = analytic.at(p.name);
    const std::size_t n = p.value.size();
    const std::size_t stride =
        max_per_parameter == 0 || n <= max_per_parameter ? 1 : (n + max_per_parameter - 1) / max_per_parameter;
    for (std::size_t i = 0; i < n; i += stride) {
      const double x0 = p.value[i];
      double step = epsilon;
      double numeric = 0.0;
      for (int attempt = 0; attempt < 4; ++attempt) {
        std::vector<bool> up, down;
        const double fp = eval_at(p, i, x0 + step, &up);
        const double fm = eval_at(p, i, x0 - step, &down);
        numeric = (fp - fm) / (2.0 * step);
        if (up == base_pattern && down == base_pattern) break;
        ++report.kink_retries;
        step /= 10.0;
      }
      p.value[i] = x0;
      const double a = ga[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.coordinates;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_parameter = p.name;
        report.worst_index = i;
      }
    }
  }
  graph.forward();
  return report;
}

}  // namespace sdfas
