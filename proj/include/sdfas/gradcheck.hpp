#pragma once

#include <cstddef>
#include <string>

#include "sdfas/graph.hpp"

namespace sdfas {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  // Coordinates whose +/-epsilon probe flipped a ReLU; those were re-probed
  // with a smaller step so the central difference stays on one linear piece.
  std::size_t kink_retries = 0;
};

/// Central finite differences on every parameter coordinate versus the
/// analytic gradient of `loss`. The error per coordinate is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Graph inputs must already be set; parameter values are restored on return.
/// With `max_per_parameter` > 0 only that many evenly strided coordinates of
/// each parameter tensor are probed.
GradCheckReport grad_check(Graph& graph, NodeRef loss, double epsilon, std::size_t max_per_parameter = 0);

}  // namespace sdfas
