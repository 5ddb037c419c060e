#pragma once

// Text checkpoint. Whitespace-separated tokens; numbers use the shortest
// representation that reads back to the same double, so a write/read cycle
// is bit-exact.
//
//   gradsurgeon-checkpoint 1
//   config <n>                        then n lines "key = value"
//   encoder student_base <layers>     per layer: "layer <rows> <cols>",
//   encoder teacher_base <layers>     row-major weights, then the bias
//   adapter <rank> <alpha> <dropout> <d>   then A (rank x d), B (d x rank)
//   head img|text|teacher <dim> <frozen 0|1> <b>   then w
//   end

#include <filesystem>

#include "gradsurgeon/config.hpp"
#include "gradsurgeon/encoders.hpp"

namespace gradsurgeon {

struct Checkpoint {
  DetectorModel model;
  RunConfig config;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace gradsurgeon
