#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace mscl {

struct GradcheckEntry {
  std::string op;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double seconds = 0.0;

  bool passed() const;
  std::vector<std::string> failures() const;
  // One "op max_rel_error tolerance PASS|FAIL" line per entry.
  std::string to_text() const;
  nlohmann::json to_json() const;
};

struct GradcheckOptions {
  std::uint64_t seed = 1;
  double step = 1e-5;
  double op_tolerance = 1e-4;
  double end_to_end_tolerance = 1e-3;
  std::size_t end_to_end_samples = 50;
  bool end_to_end = true;
};

// Central finite differences against the reverse-mode gradients of every
// differentiable op and, optionally, of L_total through a small model.
GradcheckReport run_gradcheck(const GradcheckOptions &options = {});

}  // namespace mscl
