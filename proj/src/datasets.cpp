#include "gradsurgeon/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gradsurgeon/error.hpp"

namespace gradsurgeon {

namespace {

using json = nlohmann::json;

enum SplitStream : std::uint64_t { kTrainStream = 1, kInStream = 2, kCrossStream = 3 };

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, i);
  return buf;
}

std::vector<FeatureRecord> generate_part(const SyntheticSpec& spec, std::uint64_t stream,
                                         std::size_t n, double corr, const char* prefix,
                                         const char* domain) {
  const Rng part_rng = Rng(spec.seed).derive(stream);

  // Balanced labels in a seeded order.
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  Rng shuffle_rng = part_rng.derive(0);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(labels[i - 1], labels[shuffle_rng.uniform_index(i)]);
  }

  const std::size_t dim = spec.input_dim();
  const std::size_t sem_begin = spec.d_artifact;
  const std::size_t sem_end = sem_begin + spec.d_semantic;

  std::vector<FeatureRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = part_rng.derive(i + 1);
    const int label = labels[i];
    const double sign = label == 1 ? 1.0 : -1.0;
    const double z = rng.uniform() < corr ? sign : -sign;

    std::vector<double> x(dim);
    for (std::size_t j = 0; j < sem_begin; ++j) x[j] = spec.artifact_margin * sign + rng.normal();
    for (std::size_t j = sem_begin; j < sem_end; ++j)
      x[j] = spec.semantic_amplitude * z + rng.normal();
    for (std::size_t j = sem_end; j < dim; ++j) x[j] = rng.normal();

    std::vector<double> t(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      const double base = (j >= sem_begin && j < sem_end) ? x[j] : 0.0;
      t[j] = base + spec.semantic_noise * rng.normal();
    }
    out.push_back(FeatureRecord{make_id(prefix, i), label, domain, Vec64(std::move(x)),
                                Vec64(std::move(t))});
  }
  return out;
}

void require_count(const char* field, std::size_t n) {
  if (n < 2) throw ValidationError(std::string("SyntheticSpec.") + field + " must be >= 2");
}

void require_unit(const char* field, double v) {
  if (!(v >= 0.0 && v <= 1.0))
    throw ValidationError(std::string("SyntheticSpec.") + field + " must be in [0, 1]");
}

FeatureRecord parse_record(const std::string& line, std::size_t line_no,
                           const std::filesystem::path& path) {
  auto fail = [&](const std::string& msg) -> ValidationError {
    return ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw fail(std::string("malformed JSON (") + e.what() + ")");
  }
  if (!obj.is_object()) throw fail("expected a JSON object");
  static const std::set<std::string> kFields{"id", "label", "domain", "x", "t_sem"};
  for (const auto& name : kFields) {
    if (!obj.contains(name)) throw fail("missing field '" + name + "'");
  }
  for (const auto& [key, _] : obj.items()) {
    if (!kFields.contains(key)) throw fail("unknown field '" + key + "'");
  }
  if (!obj["id"].is_string()) throw fail("'id' must be a string");
  if (!obj["domain"].is_string()) throw fail("'domain' must be a string");
  if (!obj["label"].is_number_integer()) throw fail("'label' must be an integer");
  const auto label = obj["label"].get<long long>();
  if (label != 0 && label != 1) throw fail("unknown label value " + std::to_string(label));

  auto read_vec = [&](const char* name) {
    const auto& arr = obj[name];
    if (!arr.is_array() || arr.empty()) throw fail(std::string("'") + name + "' must be a non-empty array");
    std::vector<double> values;
    values.reserve(arr.size());
    for (const auto& v : arr) {
      if (!v.is_number()) throw fail(std::string("'") + name + "' must contain numbers");
      values.push_back(v.get<double>());
    }
    try {
      return Vec64(std::move(values));
    } catch (const ValidationError& e) {
      throw fail(std::string("'") + name + "': " + e.what());
    }
  };

  return FeatureRecord{obj["id"].get<std::string>(), static_cast<int>(label),
                       obj["domain"].get<std::string>(), read_vec("x"), read_vec("t_sem")};
}

}  // namespace

void SyntheticSpec::validate() const {
  if (d_artifact < 1) throw ValidationError("SyntheticSpec.d_artifact must be >= 1");
  if (d_semantic < 1) throw ValidationError("SyntheticSpec.d_semantic must be >= 1");
  if (d_noise < 1) throw ValidationError("SyntheticSpec.d_noise must be >= 1");
  require_unit("corr_in", corr_in);
  require_unit("corr_out", corr_out);
  require_count("n_train", n_train);
  require_count("n_test_in", n_test_in);
  require_count("n_test_cross", n_test_cross);
  if (!std::isfinite(artifact_margin))
    throw ValidationError("SyntheticSpec.artifact_margin must be finite");
  if (!std::isfinite(semantic_amplitude))
    throw ValidationError("SyntheticSpec.semantic_amplitude must be finite");
  if (!(semantic_noise >= 0.0) || !std::isfinite(semantic_noise))
    throw ValidationError("SyntheticSpec.semantic_noise must be >= 0");
}

DatasetSplit generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  DatasetSplit out;
  out.train = generate_part(spec, kTrainStream, spec.n_train, spec.corr_in, "train", kInDomainTag);
  out.test_in_domain =
      generate_part(spec, kInStream, spec.n_test_in, spec.corr_in, "in", kInDomainTag);
  out.test_cross_domain = generate_part(spec, kCrossStream, spec.n_test_cross, spec.corr_out,
                                        "cross", kCrossDomainTag);
  return out;
}

void write_records(const std::vector<FeatureRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) {
    json obj = json::object();
    obj["id"] = r.id;
    obj["label"] = r.label;
    obj["domain"] = r.domain;
    obj["x"] = r.x.values();
    obj["t_sem"] = r.t_sem.values();
    out << obj.dump() << '\n';
  }
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

std::vector<FeatureRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::vector<FeatureRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    records.push_back(parse_record(line, line_no, path));
    const auto& first = records.front();
    const auto& last = records.back();
    if (last.x.dim() != first.x.dim() || last.t_sem.dim() != first.t_sem.dim()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": dimension inconsistent with line 1");
    }
  }
  if (records.empty()) throw ValidationError("'" + path.string() + "': no records");
  return records;
}

void write_split(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_records(split.train, dir / kTrainFile);
  write_records(split.test_in_domain, dir / kTestInFile);
  if (!split.test_cross_domain.empty()) write_records(split.test_cross_domain, dir / kTestCrossFile);
}

DatasetSplit load_split(const std::filesystem::path& dir) {
  DatasetSplit out;
  out.train = load_records(dir / kTrainFile);
  out.test_in_domain = load_records(dir / kTestInFile);
  if (std::filesystem::exists(dir / kTestCrossFile)) {
    out.test_cross_domain = load_records(dir / kTestCrossFile);
  }
  auto check = [&](const std::vector<FeatureRecord>& part, const char* name) {
    if (part.empty()) return;
    require_same_dim((std::string(name) + " x dim").c_str(), part.front().x.dim(),
                     out.train.front().x.dim());
    require_same_dim((std::string(name) + " t_sem dim").c_str(), part.front().t_sem.dim(),
                     out.train.front().t_sem.dim());
  };
  check(out.test_in_domain, kTestInFile);
  check(out.test_cross_domain, kTestCrossFile);
  return out;
}

std::vector<std::size_t> partition_sizes(std::size_t n, const std::vector<double>& fractions) {
  if (fractions.empty()) throw ValidationError("split: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ValidationError("split: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split: fractions must sum to 1");

  std::vector<std::size_t> sizes(fractions.size());
  std::vector<double> remainder(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = static_cast<double>(n) * fractions[i];
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - std::floor(exact);
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % order.size()]];
  return sizes;
}

std::vector<std::vector<FeatureRecord>> split(const std::vector<FeatureRecord>& records,
                                              const std::vector<double>& fractions,
                                              std::uint64_t seed) {
  const auto sizes = partition_sizes(records.size(), fractions);
  std::vector<std::size_t> perm(records.size());
  std::iota(perm.begin(), perm.end(), 0);
  // A single partition keeps the input order.
  if (sizes.size() > 1) {
    Rng rng(seed);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  }

  std::vector<std::vector<FeatureRecord>> parts(sizes.size());
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    bool has[2] = {false, false};
    for (std::size_t k = 0; k < sizes[p]; ++k, ++cursor) {
      const auto& r = records[perm[cursor]];
      has[r.label] = true;
      parts[p].push_back(r);
    }
    if (!has[0] || !has[1]) {
      throw ValidationError("split: partition " + std::to_string(p) +
                            " does not contain both labels");
    }
  }
  return parts;
}

void validate_records(const std::vector<FeatureRecord>& records, const std::string& what) {
  if (records.empty()) throw ValidationError(what + ": no records");
  const auto dx = records.front().x.dim();
  const auto dt = records.front().t_sem.dim();
  for (const auto& r : records) {
    if (r.label != 0 && r.label != 1)
      throw ValidationError(what + ": record '" + r.id + "' has label " + std::to_string(r.label));
    require_same_dim((what + ": x of '" + r.id + "'").c_str(), r.x.dim(), dx);
    require_same_dim((what + ": t_sem of '" + r.id + "'").c_str(), r.t_sem.dim(), dt);
  }
}

}  // namespace gradsurgeon
