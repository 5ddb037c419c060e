#pragma once

// One training run end to end, plus the JSON shapes of its outputs.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradsurgeon/config.hpp"
#include "gradsurgeon/datasets.hpp"
#include "gradsurgeon/metrics.hpp"
#include "gradsurgeon/trainer.hpp"

namespace gradsurgeon {

struct ExperimentResult {
  RunConfig config;
  DetectorModel model;
  RunHistory history;
  EvalReport in_domain;
  std::optional<EvalReport> cross_domain;
  /// Student vs teacher on the leading in-domain test records.
  DriftReport drift;
};

/// Synthetic data for `cfg` (seed already pushed into cfg.data).
DatasetSplit make_dataset(const RunConfig& cfg);

/// Builds the model from the configured base encoder, trains, evaluates.
ExperimentResult run_experiment(const RunConfig& cfg, const DatasetSplit& data);

nlohmann::json to_json(const AccuracyReport& r);
nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const DriftReport& r);
nlohmann::json to_json(const EpochRecord& r);

/// One object per epoch.
std::string history_jsonl(const RunHistory& h);
/// One object per evaluation: in-domain, cross-domain (if present), drift.
std::string metrics_jsonl(const ExperimentResult& r);
/// Summary object for report.json.
nlohmann::json report_json(const ExperimentResult& r);

/// Worker count for independent runs: GRADSURGEON_THREADS if set (must be
/// a positive integer), else the hardware concurrency; never more than `jobs`.
std::size_t worker_threads(std::size_t jobs);

/// Calls fn(i) for i in [0, n) on `threads` workers. Each index runs
/// exactly once; if any call throws, the exception of the lowest failing
/// index is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Writes `text` to `path`, replacing any existing file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gradsurgeon
