#pragma once

// Evaluation metrics. Decision rule everywhere: predict fake (label 1) iff
// logit > threshold; a logit exactly at the threshold predicts real.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradsurgeon/encoders.hpp"
#include "gradsurgeon/record.hpp"

namespace gradsurgeon {

struct AccuracyReport {
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
  std::size_t correct_real = 0;
  std::size_t correct_fake = 0;
  /// Absent when the corresponding label does not occur.
  std::optional<double> accuracy_real;
  std::optional<double> accuracy_fake;
  double accuracy_overall = 0.0;
};

AccuracyReport accuracy(std::span<const double> logits, std::span<const int> labels,
                        double threshold = 0.0);

/// Sum over ranks k of precision@k times the recall increment at k, with
/// scores sorted descending. Equal scores keep their input order, so ties
/// are resolved in favour of whichever item comes first.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// Mean of 1 - cos(student_i, teacher_i). A pair containing a zero vector
/// contributes 1.
double prior_drift(std::span<const Vec64> student, std::span<const Vec64> teacher);

/// Mean over samples of |kNN_student(i) ∩ kNN_teacher(i)| / k under Euclidean
/// distance. The sample itself is excluded; equal distances are ordered by
/// index.
double knn_overlap(std::span<const Vec64> student, std::span<const Vec64> teacher, std::size_t k);

/// Logistic head fit on t_sem alone (same routine as the teacher head),
/// evaluated on `test`.
double text_only_probe(std::span<const FeatureRecord> train, std::span<const FeatureRecord> test,
                       std::size_t steps = 500, double lr = 0.1);

struct Projection2d {
  Vec64 pc1;
  Vec64 pc2;
  double var1 = 0.0;  // eigenvalues of the sample covariance
  double var2 = 0.0;
  double total_variance = 0.0;
  Vec64 mean;
  std::vector<std::pair<double, double>> coords;
};

/// Top two principal components of the centred data by power iteration with
/// deflation (stops when successive iterates differ by < 1e-10 or after
/// 10000 iterations). Each component is signed so that its largest-magnitude
/// loading is positive. Needs at least 3 points.
Projection2d project_2d(std::span<const Vec64> feats);

/// CSV with header id,label,domain,pc1,pc2. `meta` supplies id, label and
/// domain for each row of `feats`.
Projection2d export_projection_2d(std::span<const Vec64> feats,
                                  std::span<const FeatureRecord> meta,
                                  const std::filesystem::path& path);

struct DomainReport {
  std::size_t n = 0;
  AccuracyReport acc;
  std::optional<double> average_precision;
};

struct EvalReport {
  std::string split;
  AccuracyReport acc;
  std::optional<double> average_precision;
  std::map<std::string, DomainReport> per_domain;
  /// Unweighted mean of per-domain overall accuracy.
  double mean_domain_accuracy = 0.0;
};

struct DriftReport {
  double mean_cosine_distance = 0.0;
  double knn_overlap = 1.0;
  std::size_t k = 0;
  std::size_t n = 0;
};

/// Student logits (eval mode, no dropout) through the image head.
std::vector<double> student_logits(const DetectorModel& model, std::span<const FeatureRecord> records);
std::vector<Vec64> student_features(const DetectorModel& model, std::span<const FeatureRecord> records);
std::vector<Vec64> teacher_features(const DetectorModel& model, std::span<const FeatureRecord> records);

EvalReport evaluate(const DetectorModel& model, std::span<const FeatureRecord> records,
                    const std::string& split_name);

/// Drift on at most `max_samples` leading records (0 = all).
DriftReport measure_drift(const DetectorModel& model, std::span<const FeatureRecord> records,
                          std::size_t k = 10, std::size_t max_samples = 0);

}  // namespace gradsurgeon
