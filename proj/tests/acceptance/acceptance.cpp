// Acceptance checks P1-P11. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Behavioural checks use the default config.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gradsurgeon/config.hpp"
#include "gradsurgeon/experiment.hpp"
#include "gradsurgeon/gradcheck.hpp"
#include "gradsurgeon/grad_core.hpp"
#include "gradsurgeon/metrics.hpp"
#include "gradsurgeon/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gradsurgeon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool bits_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// P1
Outcome half_space_identities() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  std::size_t bad_sum = 0, bad_prod = 0, count = 0;
  for (int t = 0; t < 10000; ++t) {
    const Vec64 g = testing::random_vec(rng, 1 + rng.uniform_index(64), std::exp(4.0 * rng.normal()));
    const auto h = decompose(g);
    ++count;
    for (std::size_t i = 0; i < g.dim(); ++i) {
      if (h.positive[i] + h.negative[i] != g[i]) ++bad_sum;
      if (h.positive[i] * h.negative[i] != 0.0) ++bad_prod;
    }
  }
  const double secs = seconds_since(t0);
  return {bad_sum == 0 && bad_prod == 0 && secs < 1.0,
          fmt("%zu vectors, sum mismatches %zu, nonzero products %zu, %.3f s", count, bad_sum, bad_prod, secs)};
}

// P2
Outcome projection_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(102);
  double worst_orth = 0, worst_idem = 0, worst_growth = -1e300, worst_oracle = 0;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t d = 2 + rng.uniform_index(63);
    const Vec64 g = testing::random_vec(rng, d);
    const Vec64 harm = harmful_direction(testing::random_vec(rng, d));
    const auto p = orthogonal_suppress(g, harm);
    if (p.skipped) continue;
    const double scale = testing::plain_norm(g.span()) * testing::plain_norm(harm.span());
    worst_orth = std::max(worst_orth, std::abs(testing::plain_dot(p.value.span(), harm.span())) / scale);
    const auto twice = orthogonal_suppress(p.value, harm);
    worst_idem = std::max(worst_idem, testing::max_abs_diff(twice.value.span(), p.value.span()));
    worst_growth =
        std::max(worst_growth, testing::plain_norm(p.value.span()) - testing::plain_norm(g.span()));
  }
  std::size_t oracle_cases = 0;
  while (oracle_cases < 100) {
    const Vec64 g = testing::random_vec(rng, 5);
    const Vec64 harm = harmful_direction(testing::random_vec(rng, 5));
    if (testing::plain_norm(harm.span()) <= kDefaultHarmEps) continue;
    const auto expect = testing::constrained_ls(g, harm);
    worst_oracle = std::max(worst_oracle, testing::max_abs_diff(orthogonal_suppress(g, harm).value.span(), expect));
    ++oracle_cases;
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_orth <= 1e-9 && worst_idem <= 1e-12 && worst_growth <= 1e-12 && worst_oracle <= 1e-9 &&
                  secs < 1.0;
  return {ok, fmt("orth %.2e, idempotence %.2e, norm growth %.2e, oracle %.2e over %zu, %.3f s", worst_orth,
                  worst_idem, std::max(worst_growth, 0.0), worst_oracle, oracle_cases, secs)};
}

// P3
Outcome directional_semantics() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(103);
  std::size_t checked = 0, mismatched = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 2 + rng.uniform_index(15);
    const LinearHead head{testing::random_vec(rng, d), rng.normal(), false};
    const Vec64 f = testing::random_vec(rng, d, 2.0);
    const int y = static_cast<int>(rng.uniform_index(2));
    const ScalarFn loss = [&](const Vec64& u) { return bce_with_logits(head_forward(head, u), y); };
    const Vec64 g = feature_grad(head, f, y);
    const double eps = default_probe_epsilon(f);
    for (std::size_t j = 0; j < d; ++j) {
      if (std::abs(g[j]) <= 1e-3) continue;
      ++checked;
      const int expect = g[j] > 0 ? 1 : -1;
      if (directional_probe(loss, f, j, eps) != expect) ++mismatched;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatched == 0 && checked > 0 && secs < 5.0,
          fmt("%zu coordinates probed, %zu sign mismatches, %.3f s", checked, mismatched, secs)};
}

// P4
Outcome gradient_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckOptions opts;
  opts.seed = 104;
  opts.max_dim = 16;
  const auto entries = run_gradcheck(opts);
  double worst = 0;
  std::string names;
  for (const auto& e : entries) {
    worst = std::max(worst, e.max_rel_err);
    names += (names.empty() ? "" : ",") + e.name;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && entries.size() == 5 && secs < 10.0,
          fmt("max rel err %.2e over %s, %.3f s", worst, names.c_str(), secs)};
}

DetectorModel toy_model(std::size_t d, std::size_t r, double dropout, Rng& rng) {
  DetectorModel m;
  m.student.base = MlpEncoder::random_tanh({d, d}, 1.0, rng);
  m.student.adapter = LowRankAdapter::init(d, r, 2.0 * r, dropout, rng);
  m.student.adapter.b = Mat64(d, r, testing::random_vec(rng, d * r, 0.3).values());
  m.teacher.base = m.student.base;
  m.head_img = LinearHead{testing::random_vec(rng, d, 0.5), 0.1, false};
  m.head_text = LinearHead{testing::random_vec(rng, d, 0.5), -0.1, false};
  m.head_teacher = LinearHead{testing::random_vec(rng, d, 0.5), 0.0, true};
  return m;
}

std::vector<FeatureRecord> toy_records(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<FeatureRecord> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(FeatureRecord{"s" + std::to_string(i), static_cast<int>(i % 2), "toy", testing::random_vec(rng, d),
                                testing::random_vec(rng, d)});
  return out;
}

std::vector<const FeatureRecord*> pointers(const std::vector<FeatureRecord>& rs) {
  std::vector<const FeatureRecord*> out;
  for (const auto& r : rs) out.push_back(&r);
  return out;
}

double grads_gap(const ParameterGrads& a, const ParameterGrads& b) {
  double m = 0;
  m = std::max(m, testing::max_abs_diff(a.adapter.a.span(), b.adapter.a.span()));
  m = std::max(m, testing::max_abs_diff(a.adapter.b.span(), b.adapter.b.span()));
  m = std::max(m, testing::max_abs_diff(a.head_img.w.span(), b.head_img.w.span()));
  m = std::max(m, testing::max_abs_diff(a.head_text.w.span(), b.head_text.w.span()));
  return m;
}

// P5
Outcome mode_reductions() {
  Rng rng(105);
  double step_gap = 0, suppress_gap = 0, align_gap = 0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t d = 4 + rng.uniform_index(8), r = 1 + rng.uniform_index(4);
    DetectorModel m = toy_model(d, r, 0.5, rng);
    auto batch = toy_records(rng, 3 + rng.uniform_index(8), d);

    // One baseline step against backprop of the image loss plus a hand-written Adam step.
    SurgeryConfig cfg;
    cfg.mode = SurgeryMode::kBaseline;
    cfg.lr = 1e-2;
    Rng mask_rng(1000 + t);
    std::vector<std::optional<DropoutMask>> masks;
    for (std::size_t i = 0; i < batch.size(); ++i) masks.push_back(draw_dropout_mask(d, 0.5, mask_rng));
    const auto [ga, gb] = testing::backprop_image_loss(m, batch, masks);
    std::vector<double> a_expect(m.student.adapter.a.values()), b_expect(m.student.adapter.b.values());
    for (auto [p, g] : {std::pair{&a_expect, &ga}, std::pair{&b_expect, &gb}}) {
      for (std::size_t i = 0; i < p->size(); ++i) {
        const double mh = (1.0 - cfg.adam_beta1) * (*g)[i] / (1.0 - cfg.adam_beta1);
        const double vh = (1.0 - cfg.adam_beta2) * (*g)[i] * (*g)[i] / (1.0 - cfg.adam_beta2);
        (*p)[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.adam_eps);
      }
    }
    DetectorModel stepped = m;
    OptimizerState st;
    Rng step_rng(1000 + t);
    (void)train_step(stepped, pointers(batch), cfg, st, step_rng);
    step_gap = std::max(step_gap, testing::max_abs_diff(stepped.student.adapter.a.span(), a_expect));
    step_gap = std::max(step_gap, testing::max_abs_diff(stepped.student.adapter.b.span(), b_expect));

    const std::vector<std::optional<DropoutMask>> none(batch.size());
    auto grads = [&](SurgeryMode mode, double lambda) {
      SurgeryConfig c;
      c.mode = mode;
      c.lambda = lambda;
      StepMetrics sm;
      return batch_gradients(m, pointers(batch), none, c, sm);
    };
    align_gap = std::max(align_gap, grads_gap(grads(SurgeryMode::kAlignOnly, 0.0), grads(SurgeryMode::kBaseline, 0.0)));

    // Label 1 and a positive text head make every text gradient negative.
    for (auto& rec : batch) rec.label = 1;
    m.head_text.w = Vec64(d, 0.3);
    m.head_text.b = 0.0;
    suppress_gap =
        std::max(suppress_gap, grads_gap(grads(SurgeryMode::kSuppressOnly, 0.2), grads(SurgeryMode::kBaseline, 0.2)));
  }
  return {step_gap <= 1e-12 && suppress_gap <= 1e-12 && align_gap <= 1e-12,
          fmt("baseline step vs oracle %.2e, suppress_only vs baseline %.2e, align_only(0) vs baseline %.2e",
              step_gap, suppress_gap, align_gap)};
}

// P6
Outcome frozen_conservation() {
  RunConfig cfg;
  cfg.finalize();
  const DatasetSplit data = make_dataset(cfg);
  const DetectorModel init = build_model(make_base_encoder(cfg, cfg.data.input_dim()), data.train, cfg.surgery);
  const DriftReport at_init = measure_drift(init, data.test_in_domain, cfg.drift_k, cfg.drift_samples);
  const DetectorModel done = train(cfg.surgery, data.train, init).model;
  bool same = true;
  auto same_encoder = [](const MlpEncoder& a, const MlpEncoder& b) {
    if (a.layers().size() != b.layers().size()) return false;
    bool eq = true;
    for (std::size_t l = 0; l < a.layers().size(); ++l) {
      eq &= bits_equal(a.layers()[l].weight.span(), b.layers()[l].weight.span());
      eq &= bits_equal(a.layers()[l].bias.span(), b.layers()[l].bias.span());
    }
    return eq;
  };
  same &= same_encoder(init.teacher.base, done.teacher.base);
  same &= same_encoder(init.student.base, done.student.base);
  same &= bits_equal(init.head_teacher.w.span(), done.head_teacher.w.span());
  same &= std::memcmp(&init.head_teacher.b, &done.head_teacher.b, sizeof(double)) == 0;
  same &= fingerprint(init.teacher.base) == fingerprint(done.teacher.base);
  same &= fingerprint(init.student.base) == fingerprint(done.student.base);
  same &= fingerprint(init.head_teacher) == fingerprint(done.head_teacher);
  const bool adapter_moved = !(init.student.adapter == done.student.adapter);
  return {same && adapter_moved && at_init.mean_cosine_distance == 0.0 && at_init.knn_overlap == 1.0,
          fmt("frozen parts identical: %s, adapter trained: %s, drift at init %.3g, knn at init %.6f",
              same ? "yes" : "no", adapter_moved ? "yes" : "no", at_init.mean_cosine_distance,
              at_init.knn_overlap)};
}

struct AblationRow {
  double cross = 0, drift = 0, knn = 0;
};

// [mode][seed]
using Ablation = std::map<SurgeryMode, std::vector<AblationRow>>;

constexpr SurgeryMode kModes[] = {SurgeryMode::kBaseline,     SurgeryMode::kSuppressOnly,
                                  SurgeryMode::kAlignOnly,    SurgeryMode::kFull,
                                  SurgeryMode::kFullTextGrad, SurgeryMode::kFullImgGrad};
constexpr std::size_t kSeeds = 5;

Ablation run_ablation(double& secs) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<RunConfig> jobs;
  for (std::size_t s = 0; s < kSeeds; ++s)
    for (SurgeryMode m : kModes) {
      RunConfig c;
      c.seed = s;
      c.surgery.mode = m;
      c.finalize();
      jobs.push_back(c);
    }
  std::vector<DatasetSplit> data(kSeeds);
  parallel_for(kSeeds, worker_threads(kSeeds), [&](std::size_t s) { data[s] = make_dataset(jobs[s * 6]); });
  std::vector<AblationRow> rows(jobs.size());
  parallel_for(jobs.size(), worker_threads(jobs.size()), [&](std::size_t i) {
    const auto r = run_experiment(jobs[i], data[i / 6]);
    rows[i] = {r.cross_domain->acc.accuracy_overall, r.drift.mean_cosine_distance, r.drift.knn_overlap};
  });
  Ablation out;
  for (std::size_t i = 0; i < jobs.size(); ++i) out[jobs[i].surgery.mode].push_back(rows[i]);
  secs = seconds_since(t0);
  return out;
}

double mean_of(const std::vector<AblationRow>& rows, double AblationRow::*field) {
  double s = 0;
  for (const auto& r : rows) s += r.*field;
  return s / static_cast<double>(rows.size());
}

// P7
Outcome cross_domain_ordering(const Ablation& ab, double secs) {
  std::size_t ordered = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const double b = ab.at(SurgeryMode::kBaseline)[s].cross, so = ab.at(SurgeryMode::kSuppressOnly)[s].cross,
                 ao = ab.at(SurgeryMode::kAlignOnly)[s].cross, f = ab.at(SurgeryMode::kFull)[s].cross;
    if (b < so && b < ao && so < f && ao < f) ++ordered;
  }
  const double gain = mean_of(ab.at(SurgeryMode::kFull), &AblationRow::cross) -
                      mean_of(ab.at(SurgeryMode::kBaseline), &AblationRow::cross);
  std::string means;
  for (SurgeryMode m : {SurgeryMode::kBaseline, SurgeryMode::kSuppressOnly, SurgeryMode::kAlignOnly, SurgeryMode::kFull})
    means += fmt("%s %.4f ", std::string(to_string(m)).c_str(), mean_of(ab.at(m), &AblationRow::cross));
  return {ordered >= 4 && gain >= 0.10 && secs < 120.0,
          fmt("ordering holds in %zu/5 seeds, full - baseline = %+.4f, mean cross acc: %s(%.1f s)", ordered, gain,
              means.c_str(), secs)};
}

// P8
Outcome drift_reduction(const Ablation& ab) {
  const double df = mean_of(ab.at(SurgeryMode::kFull), &AblationRow::drift);
  const double db = mean_of(ab.at(SurgeryMode::kBaseline), &AblationRow::drift);
  const double kf = mean_of(ab.at(SurgeryMode::kFull), &AblationRow::knn);
  const double kb = mean_of(ab.at(SurgeryMode::kBaseline), &AblationRow::knn);
  return {df < db && kf > kb,
          fmt("prior drift full %.3e vs baseline %.3e, knn overlap full %.4f vs baseline %.4f", df, db, kf, kb)};
}

// P9
Outcome half_space_vs_full_gradient(const Ablation& ab) {
  std::size_t wins = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const double f = ab.at(SurgeryMode::kFull)[s].cross;
    if (f > ab.at(SurgeryMode::kFullTextGrad)[s].cross && f > ab.at(SurgeryMode::kFullImgGrad)[s].cross) ++wins;
  }
  return {wins >= 4, fmt("full beats both full-gradient variants in %zu/5 seeds (means: full %.4f, full_text_grad "
                         "%.4f, full_img_grad %.4f)",
                         wins, mean_of(ab.at(SurgeryMode::kFull), &AblationRow::cross),
                         mean_of(ab.at(SurgeryMode::kFullTextGrad), &AblationRow::cross),
                         mean_of(ab.at(SurgeryMode::kFullImgGrad), &AblationRow::cross))};
}

// P10
Outcome text_probe() {
  RunConfig cfg;
  cfg.finalize();
  const DatasetSplit data = make_dataset(cfg);
  const double acc = text_only_probe(data.train, data.test_in_domain, cfg.probe_steps, cfg.probe_lr);
  return {acc >= 0.55 && acc <= 0.68, fmt("in-domain text-only accuracy %.4f (corr_in %.2f)", acc, cfg.data.corr_in)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// P11
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "gradsurgeon_acceptance_determinism";
  fs::remove_all(root);
  std::vector<fs::path> runs;
  for (int i = 0; i < 3; ++i) {
    runs.push_back(root / ("run" + std::to_string(i)));
    if (cli::run({"train", "--seed", "7", "--out", runs.back().string()}) != 0)
      return {false, "train subcommand failed"};
  }
  // Two independent comparisons against the first run.
  std::size_t compared = 0, differing = 0;
  for (int rep = 1; rep <= 2; ++rep) {
    for (const char* f : {"history.jsonl", "metrics.jsonl", "report.json", "checkpoint.txt", "manifest.json"}) {
      ++compared;
      if (slurp(runs[0] / f) != slurp(runs[rep] / f) || slurp(runs[0] / f).empty()) ++differing;
    }
  }
  // The manifest's recorded hashes match the files on disk.
  const auto manifest = nlohmann::json::parse(slurp(runs[0] / "manifest.json"));
  std::size_t hash_mismatch = 0;
  for (const auto& [name, hash] : manifest["files"].items())
    if (hash["fnv1a64"].get<std::string>() != hex64(fnv1a(slurp(runs[0] / name)))) ++hash_mismatch;
  fs::remove_all(root);
  return {differing == 0 && hash_mismatch == 0 && !manifest["files"].empty(),
          fmt("%zu file comparisons over 2 repeats, %zu differ; %zu manifest hash mismatches", compared, differing,
              hash_mismatch)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %s %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report("P1", "half-space identities", half_space_identities);
  report("P2", "projection correctness", projection_correctness);
  report("P3", "directional semantics", directional_semantics);
  report("P4", "gradient exactness", gradient_exactness);
  report("P5", "mode reductions", mode_reductions);
  report("P6", "frozen conservation", frozen_conservation);

  double secs = 0;
  Ablation ab;
  std::string ablation_error;
  try {
    ab = run_ablation(secs);
  } catch (const std::exception& e) {
    ablation_error = e.what();
  }
  auto behavioural = [&](const char* id, const char* name, const std::function<Outcome()>& fn) {
    report(id, name, [&]() -> Outcome {
      if (!ablation_error.empty()) return {false, "ablation failed: " + ablation_error};
      return fn();
    });
  };
  behavioural("P7", "cross-domain ordering", [&] { return cross_domain_ordering(ab, secs); });
  behavioural("P8", "prior drift reduction", [&] { return drift_reduction(ab); });
  behavioural("P9", "half-space vs full-gradient variants", [&] { return half_space_vs_full_gradient(ab); });

  report("P10", "text-only probe", text_probe);
  report("P11", "determinism", determinism);

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
