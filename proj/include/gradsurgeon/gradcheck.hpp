#pragma once

// Central finite-difference checks of every analytic gradient the trainer
// uses. Error per check is max_i |analytic_i - numeric_i| divided by
// max(max_i |analytic_i|, max_i |numeric_i|, 1e-12), maximised over trials.

#include <cstdint>
#include <string>
#include <vector>

namespace gradsurgeon {

struct GradcheckEntry {
  std::string name;
  std::size_t trials = 0;
  double max_rel_err = 0.0;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 20;
  std::size_t max_dim = 16;
  double step = 1e-5;
};

std::vector<GradcheckEntry> run_gradcheck(const GradcheckOptions& opts = {});

}  // namespace gradsurgeon
