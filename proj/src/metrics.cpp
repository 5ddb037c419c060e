#include "gradsurgeon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gradsurgeon/error.hpp"
#include "gradsurgeon/trainer.hpp"

namespace gradsurgeon {

namespace {

constexpr double kPowerTol = 1e-10;
constexpr int kPowerMaxIter = 10000;

void check_label(int y) {
  if (y != 0 && y != 1) throw ValidationError("label must be 0 or 1");
}

double squared_distance(const Vec64& a, const Vec64& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// Indices of the k nearest neighbours of `i`, ordered by (distance, index).
std::vector<std::size_t> nearest(std::span<const Vec64> pts, std::size_t i, std::size_t k,
                                 std::vector<std::pair<double, std::size_t>>& scratch) {
  scratch.clear();
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (j != i) scratch.emplace_back(squared_distance(pts[i], pts[j]), j);
  }
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
  std::vector<std::size_t> out(k);
  for (std::size_t m = 0; m < k; ++m) out[m] = scratch[m].second;
  std::sort(out.begin(), out.end());
  return out;
}

Vec64 power_iteration(const Mat64& c, Vec64 v, const Vec64* orth_to) {
  const std::size_t d = v.dim();
  auto orthonormalize = [&](Vec64& u) -> bool {
    if (orth_to) axpy(-dot(u, *orth_to), *orth_to, u);
    const double n = l2_norm(u);
    if (!(n > 0.0)) return false;
    for (auto& x : u.span()) x /= n;
    return true;
  };
  if (!orthonormalize(v)) throw NumericalError("power iteration: degenerate start vector");
  for (int it = 0; it < kPowerMaxIter; ++it) {
    Vec64 w = matvec(c, v);
    // No variance left in this direction: any unit vector orthogonal to the
    // previous components is a valid answer.
    if (l2_norm(w) <= 1e-300 || !orthonormalize(w)) return v;
    if (dot(w, v) < 0.0) w = scaled(w, -1.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(w[i] - v[i]));
    v = std::move(w);
    if (diff < kPowerTol) break;
  }
  return v;
}

AccuracyReport accuracy_of(std::span<const double> logits, std::span<const int> labels,
                           std::span<const std::size_t> idx) {
  std::vector<double> l;
  std::vector<int> y;
  for (auto i : idx) {
    l.push_back(logits[i]);
    y.push_back(labels[i]);
  }
  return accuracy(l, y);
}

std::optional<double> ap_of(std::span<const double> logits, std::span<const int> labels,
                            std::span<const std::size_t> idx) {
  std::vector<double> l;
  std::vector<int> y;
  bool any_pos = false;
  for (auto i : idx) {
    l.push_back(logits[i]);
    y.push_back(labels[i]);
    any_pos = any_pos || labels[i] == 1;
  }
  if (!any_pos) return std::nullopt;
  return average_precision(l, y);
}

}  // namespace

AccuracyReport accuracy(std::span<const double> logits, std::span<const int> labels,
                        double threshold) {
  require_same_dim("accuracy", logits.size(), labels.size());
  if (logits.empty()) throw ValidationError("accuracy: empty input");
  AccuracyReport r;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    check_label(labels[i]);
    const bool fake = logits[i] > threshold;
    if (labels[i] == 1) {
      ++r.n_fake;
      r.correct_fake += fake ? 1 : 0;
    } else {
      ++r.n_real;
      r.correct_real += fake ? 0 : 1;
    }
  }
  if (r.n_real > 0) r.accuracy_real = static_cast<double>(r.correct_real) / static_cast<double>(r.n_real);
  if (r.n_fake > 0) r.accuracy_fake = static_cast<double>(r.correct_fake) / static_cast<double>(r.n_fake);
  r.accuracy_overall = static_cast<double>(r.correct_real + r.correct_fake) /
                       static_cast<double>(logits.size());
  return r;
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  require_same_dim("average_precision", scores.size(), labels.size());
  std::size_t positives = 0;
  for (int y : labels) {
    check_label(y);
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0) throw ValidationError("average_precision: no positive labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 1) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(positives);
}

double prior_drift(std::span<const Vec64> student, std::span<const Vec64> teacher) {
  require_same_dim("prior_drift", student.size(), teacher.size());
  if (student.empty()) throw ValidationError("prior_drift: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double ns = l2_norm(student[i]);
    const double nt = l2_norm(teacher[i]);
    if (ns == 0.0 || nt == 0.0) {
      require_same_dim("prior_drift", student[i].dim(), teacher[i].dim());
      acc += 1.0;
      continue;
    }
    // 1 - cos(a, b) == |a/|a| - b/|b||^2 / 2; exact zero for equal vectors.
    require_same_dim("prior_drift", student[i].dim(), teacher[i].dim());
    double sq = 0.0;
    for (std::size_t j = 0; j < student[i].dim(); ++j) {
      const double diff = student[i][j] / ns - teacher[i][j] / nt;
      sq += diff * diff;
    }
    acc += 0.5 * sq;
  }
  return acc / static_cast<double>(student.size());
}

double knn_overlap(std::span<const Vec64> student, std::span<const Vec64> teacher, std::size_t k) {
  require_same_dim("knn_overlap", student.size(), teacher.size());
  if (k == 0) throw ValidationError("knn_overlap: k must be >= 1");
  if (student.size() <= k) throw ValidationError("knn_overlap: need more than k samples");
  std::vector<std::pair<double, std::size_t>> scratch;
  scratch.reserve(student.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const auto a = nearest(student, i, k, scratch);
    const auto b = nearest(teacher, i, k, scratch);
    std::vector<std::size_t> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    acc += static_cast<double>(common.size()) / static_cast<double>(k);
  }
  return acc / static_cast<double>(student.size());
}

double text_only_probe(std::span<const FeatureRecord> train, std::span<const FeatureRecord> test,
                       std::size_t steps, double lr) {
  if (test.empty()) throw ValidationError("text_only_probe: empty test set");
  std::vector<Vec64> feats;
  std::vector<int> labels;
  for (const auto& r : train) {
    if (r.t_sem.empty()) throw ValidationError("text_only_probe: record '" + r.id + "' has no t_sem");
    feats.push_back(r.t_sem);
    labels.push_back(r.label);
  }
  const LinearHead head = fit_logistic_head(feats, labels, steps, lr);
  std::vector<double> logits;
  std::vector<int> test_labels;
  for (const auto& r : test) {
    logits.push_back(head_forward(head, r.t_sem));
    test_labels.push_back(r.label);
  }
  return accuracy(logits, test_labels).accuracy_overall;
}

Projection2d project_2d(std::span<const Vec64> feats) {
  if (feats.size() < 3) throw ValidationError("projection needs at least 3 points");
  const std::size_t d = feats.front().dim();
  if (d < 2) throw ValidationError("projection needs at least 2 dimensions");
  const double n = static_cast<double>(feats.size());

  Projection2d p;
  p.mean = Vec64(d);
  for (const auto& f : feats) axpy(1.0 / n, f, p.mean);
  Mat64 cov(d, d);
  for (const auto& f : feats) {
    const Vec64 c = sub(f, p.mean);
    add_outer(cov, 1.0 / n, c, c);
  }
  for (std::size_t i = 0; i < d; ++i) p.total_variance += cov(i, i);

  Rng rng(0x5eedULL);
  p.pc1 = power_iteration(cov, gaussian_vec(rng, d, 0.0, 1.0), nullptr);
  p.var1 = dot(p.pc1, matvec(cov, p.pc1));
  Mat64 deflated = cov;
  add_outer(deflated, -p.var1, p.pc1, p.pc1);
  p.pc2 = power_iteration(deflated, gaussian_vec(rng, d, 0.0, 1.0), &p.pc1);
  p.var2 = dot(p.pc2, matvec(cov, p.pc2));
  // Eigenvectors are defined up to sign; make the largest loading positive.
  for (Vec64* pc : {&p.pc1, &p.pc2}) {
    std::size_t big = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs((*pc)[i]) > std::abs((*pc)[big])) big = i;
    if ((*pc)[big] < 0.0) *pc = scaled(*pc, -1.0);
  }

  p.coords.reserve(feats.size());
  for (const auto& f : feats) {
    const Vec64 c = sub(f, p.mean);
    p.coords.emplace_back(dot(c, p.pc1), dot(c, p.pc2));
  }
  return p;
}

Projection2d export_projection_2d(std::span<const Vec64> feats, std::span<const FeatureRecord> meta,
                                  const std::filesystem::path& path) {
  require_same_dim("export_projection_2d", feats.size(), meta.size());
  Projection2d p = project_2d(feats);
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << "id,label,domain,pc1,pc2\n";
  out.precision(17);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    out << meta[i].id << ',' << meta[i].label << ',' << meta[i].domain << ','
        << p.coords[i].first << ',' << p.coords[i].second << '\n';
  }
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
  return p;
}

std::vector<Vec64> student_features(const DetectorModel& model, std::span<const FeatureRecord> records) {
  std::vector<Vec64> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back(forward_student_with_mask(model.student, r.x, std::nullopt).feature);
  }
  return out;
}

std::vector<Vec64> teacher_features(const DetectorModel& model, std::span<const FeatureRecord> records) {
  std::vector<Vec64> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(forward_teacher(model.teacher, r.x));
  return out;
}

std::vector<double> student_logits(const DetectorModel& model, std::span<const FeatureRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& f : student_features(model, records)) out.push_back(head_forward(model.head_img, f));
  return out;
}

EvalReport evaluate(const DetectorModel& model, std::span<const FeatureRecord> records,
                    const std::string& split_name) {
  if (records.empty()) throw ValidationError("evaluate: empty split '" + split_name + "'");
  const std::vector<double> logits = student_logits(model, records);
  std::vector<int> labels;
  std::map<std::string, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < records.size(); ++i) {
    labels.push_back(records[i].label);
    by_domain[records[i].domain].push_back(i);
  }
  EvalReport rep;
  rep.split = split_name;
  rep.acc = accuracy(logits, labels);
  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), 0);
  rep.average_precision = ap_of(logits, labels, all);
  for (const auto& [domain, idx] : by_domain) {
    DomainReport d;
    d.n = idx.size();
    d.acc = accuracy_of(logits, labels, idx);
    d.average_precision = ap_of(logits, labels, idx);
    rep.mean_domain_accuracy += d.acc.accuracy_overall;
    rep.per_domain.emplace(domain, d);
  }
  rep.mean_domain_accuracy /= static_cast<double>(by_domain.size());
  return rep;
}

DriftReport measure_drift(const DetectorModel& model, std::span<const FeatureRecord> records,
                          std::size_t k, std::size_t max_samples) {
  if (max_samples > 0 && records.size() > max_samples) records = records.first(max_samples);
  DriftReport rep;
  rep.k = k;
  rep.n = records.size();
  const auto s = student_features(model, records);
  const auto t = teacher_features(model, records);
  rep.mean_cosine_distance = prior_drift(s, t);
  rep.knn_overlap = knn_overlap(s, t, k);
  return rep;
}

}  // namespace gradsurgeon
