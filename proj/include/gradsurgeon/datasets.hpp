#pragma once

// Synthetic shortcut benchmark and feature-record file IO.
//
// A synthetic input is x = [artifact | semantic | noise]:
//   artifact ~ N(+-artifact_margin * 1, I) by label, in every domain;
//   semantic ~ N(semantic_amplitude * z * 1, I) with z = +-1 agreeing with
//              the label sign with probability corr_in (train, in-domain
//              test) or corr_out (cross-domain test);
//   noise    ~ N(0, I).
// The semantic feature t_sem lives in the same coordinates as x: the
// semantic block at the semantic positions, zero elsewhere, plus
// N(0, semantic_noise^2) on every coordinate.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gradsurgeon/record.hpp"

namespace gradsurgeon {

struct SyntheticSpec {
  std::size_t d_artifact = 4;
  std::size_t d_semantic = 16;
  std::size_t d_noise = 12;
  double corr_in = 0.6;
  double corr_out = 0.4;
  std::size_t n_train = 4096;
  std::size_t n_test_in = 2048;
  std::size_t n_test_cross = 2048;
  double artifact_margin = 1.0;
  double semantic_amplitude = 1.0;
  double semantic_noise = 0.1;
  std::uint64_t seed = 0;

  std::size_t input_dim() const noexcept { return d_artifact + d_semantic + d_noise; }
  /// Throws ValidationError naming the first offending field.
  void validate() const;
};

struct DatasetSplit {
  std::vector<FeatureRecord> train;
  std::vector<FeatureRecord> test_in_domain;
  std::vector<FeatureRecord> test_cross_domain;
};

inline constexpr const char* kInDomainTag = "in_domain";
inline constexpr const char* kCrossDomainTag = "cross_domain";

DatasetSplit generate_synthetic(const SyntheticSpec& spec);

/// Line-delimited JSON, one object per line with exactly the fields
/// id, label, domain, x, t_sem.
void write_records(const std::vector<FeatureRecord>& records, const std::filesystem::path& path);
std::vector<FeatureRecord> load_records(const std::filesystem::path& path);

/// File names used when a split is stored as a directory.
inline constexpr const char* kTrainFile = "train.jsonl";
inline constexpr const char* kTestInFile = "test_in.jsonl";
inline constexpr const char* kTestCrossFile = "test_cross.jsonl";

void write_split(const DatasetSplit& split, const std::filesystem::path& dir);
/// Reads a split directory. test_cross.jsonl is optional.
DatasetSplit load_split(const std::filesystem::path& dir);

/// Deterministic seeded partition. Partition i gets floor(n * f_i) records;
/// the remaining records go one each to the partitions with the largest
/// fractional remainders (ties to the lower index). Every partition must
/// contain both labels. With a single fraction the input order is kept.
std::vector<std::vector<FeatureRecord>> split(const std::vector<FeatureRecord>& records,
                                              const std::vector<double>& fractions,
                                              std::uint64_t seed);

/// Partition sizes used by split().
std::vector<std::size_t> partition_sizes(std::size_t n, const std::vector<double>& fractions);

/// Checks a record set for a single consistent x / t_sem dimension and
/// labels in {0, 1}.
void validate_records(const std::vector<FeatureRecord>& records, const std::string& what);

}  // namespace gradsurgeon
