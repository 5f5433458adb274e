#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lp/dsl.hpp"

namespace lp {

// A specification of N input/output pairs, plus the generating program when
// the task comes from training data.
struct Task {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<dsl::Program> program;

  std::size_t size() const { return inputs.size(); }
  friend bool operator==(const Task&, const Task&) = default;
};

}  // namespace lp
