#pragma once

#include <string>

#include "gradsurgeon/numerics.hpp"

namespace gradsurgeon {

/// One sample. `x` is a raw input in synthetic mode or a precomputed base
/// feature in ingestion mode; `t_sem` is the frozen semantic (text-branch)
/// feature and lives in the same space as the image features.
struct FeatureRecord {
  std::string id;
  int label = 0;  // 1 = fake, 0 = real
  std::string domain;
  Vec64 x;
  Vec64 t_sem;

  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

}  // namespace gradsurgeon
