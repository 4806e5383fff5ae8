#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sdfas {

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Quick oracle, gradient, topology, protocol and metric checks. Each line is
// printed to `log` as it finishes when log is non-null.
std::vector<SelfCheck> run_selftest(std::ostream* log = nullptr);

}  // namespace sdfas
