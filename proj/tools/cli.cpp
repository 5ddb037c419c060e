#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "gradsurgeon/checkpoint.hpp"
#include "gradsurgeon/error.hpp"
#include "gradsurgeon/experiment.hpp"
#include "gradsurgeon/gradcheck.hpp"

namespace gradsurgeon::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kGradcheckTolerance = 1e-5;
constexpr std::size_t kAblationSeeds = 5;
const std::vector<double> kSweepLambdas = {0.0, 0.05, 0.1, 0.2, 0.5};
const std::vector<SurgeryMode> kAllModes = {SurgeryMode::kBaseline,     SurgeryMode::kSuppressOnly,
                                            SurgeryMode::kAlignOnly,    SurgeryMode::kFull,
                                            SurgeryMode::kFullTextGrad, SurgeryMode::kFullImgGrad};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::size_t seeds = kAblationSeeds;
  std::size_t trials = 20;
};

// Defaults, then the config file, then flags.
RunConfig effective_config(const Options& o, RunConfig cfg = {}) {
  if (!o.config.empty()) {
    for (const auto& [k, v] : read_config_file(o.config)) set_config_value(cfg, k, v);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.mode) cfg.surgery.mode = parse_surgery_mode(*o.mode);
  if (o.lambda) cfg.surgery.lambda = *o.lambda;
  if (o.epochs) cfg.surgery.epochs = *o.epochs;
  cfg.finalize();
  return cfg;
}

// Synthetic data when no path is given; a directory is a stored split; a
// single record file is split 80/20 into train and in-domain test.
DatasetSplit obtain_data(const RunConfig& cfg, const std::string& path) {
  if (path.empty()) return make_dataset(cfg);
  if (fs::is_directory(path)) return load_split(path);
  auto parts = split(load_records(path), {0.8, 0.2}, cfg.seed);
  return DatasetSplit{std::move(parts[0]), std::move(parts[1]), {}};
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw ValidationError("--out is required for this subcommand");
  fs::create_directories(o.out);
  return o.out;
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return hex64(fnv1a(buf.str()));
}

class OutputSet {
 public:
  explicit OutputSet(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& rel, const std::string& text) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    write_text_file(p, text);
    files_[rel] = hex64(fnv1a(text));
  }

  void record(const std::string& rel) { files_[rel] = file_digest(root_ / rel); }

  const fs::path& root() const { return root_; }

  void write_manifest(const std::string& subcommand, const RunConfig& cfg, const Options& o) {
    nlohmann::ordered_json m;
    m["tool"] = "gradsurgeon";
    m["version"] = kVersion;
    m["subcommand"] = subcommand;
    m["seed"] = cfg.seed;
    m["config_hash"] = config_hash(cfg);
    nlohmann::ordered_json echo = nlohmann::ordered_json::object();
    for (const auto& [k, v] : echo_config(cfg)) echo[k] = v;
    m["config"] = echo;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
    auto add_input = [&](const std::string& p) {
      if (p.empty()) return;
      if (fs::is_directory(p)) {
        for (const char* name : {kTrainFile, kTestInFile, kTestCrossFile}) {
          if (fs::exists(fs::path(p) / name)) inputs[(fs::path(p) / name).string()] = file_digest(fs::path(p) / name);
        }
      } else {
        inputs[p] = file_digest(p);
      }
    };
    add_input(o.data);
    add_input(o.checkpoint);
    m["inputs"] = inputs;
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    for (const auto& [name, digest] : files_) files[name] = {{"fnv1a64", digest}};
    m["files"] = files;
    write_text_file(root_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  fs::path root_;
  std::map<std::string, std::string> files_;
};

void write_run(OutputSet& out, const std::string& prefix, const ExperimentResult& r) {
  out.write(prefix + "history.jsonl", history_jsonl(r.history));
  out.write(prefix + "metrics.jsonl", metrics_jsonl(r));
  out.write(prefix + "report.json", report_json(r).dump(2) + "\n");
}

double cross_accuracy(const ExperimentResult& r) {
  return r.cross_domain ? r.cross_domain->acc.accuracy_overall : std::nan("");
}

std::string fmt(double v) { return std::isnan(v) ? std::string() : format_double(v); }

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int cmd_gen_data(const Options& o) {
  const RunConfig cfg = effective_config(o);
  OutputSet out(require_out(o));
  const DatasetSplit data = make_dataset(cfg);
  write_split(data, out.root());
  for (const char* name : {kTrainFile, kTestInFile, kTestCrossFile}) out.record(name);
  out.write("config.conf", config_text(cfg));
  out.write_manifest("gen-data", cfg, o);
  std::cout << "wrote " << data.train.size() << " train, " << data.test_in_domain.size()
            << " in-domain and " << data.test_cross_domain.size() << " cross-domain records to "
            << out.root().string() << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  const RunConfig cfg = effective_config(o);
  OutputSet out(require_out(o));
  const DatasetSplit data = obtain_data(cfg, o.data);
  const ExperimentResult r = run_experiment(cfg, data);
  write_run(out, "", r);
  write_checkpoint(Checkpoint{r.model, cfg}, out.root() / "checkpoint.txt");
  out.record("checkpoint.txt");
  out.write("config.conf", config_text(cfg));
  out.write_manifest("train", cfg, o);
  std::cout << "mode " << to_string(cfg.surgery.mode) << " seed " << cfg.seed << ": in-domain acc "
            << fixed(r.in_domain.acc.accuracy_overall);
  if (r.cross_domain) std::cout << ", cross-domain acc " << fixed(cross_accuracy(r));
  std::cout << ", prior drift " << fixed(r.drift.mean_cosine_distance, 6) << ", knn overlap "
            << fixed(r.drift.knn_overlap) << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw ValidationError("--checkpoint is required for eval");
  const Checkpoint ckpt = read_checkpoint(o.checkpoint);
  const RunConfig cfg = effective_config(o, ckpt.config);
  OutputSet out(require_out(o));
  const DatasetSplit data = obtain_data(cfg, o.data);

  ExperimentResult r;
  r.config = cfg;
  r.model = ckpt.model;
  r.in_domain = evaluate(r.model, data.test_in_domain, kInDomainTag);
  if (!data.test_cross_domain.empty()) r.cross_domain = evaluate(r.model, data.test_cross_domain, kCrossDomainTag);
  r.drift = measure_drift(r.model, data.test_in_domain, cfg.drift_k, cfg.drift_samples);
  out.write("metrics.jsonl", metrics_jsonl(r));
  out.write("report.json", report_json(r).dump(2) + "\n");
  out.write_manifest("eval", cfg, o);
  std::cout << "in-domain acc " << fixed(r.in_domain.acc.accuracy_overall);
  if (r.cross_domain) std::cout << ", cross-domain acc " << fixed(cross_accuracy(r));
  std::cout << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  GradcheckOptions g;
  g.seed = o.seed.value_or(0);
  g.trials = o.trials;
  bool ok = true;
  nlohmann::ordered_json report = nlohmann::ordered_json::array();
  for (const auto& e : run_gradcheck(g)) {
    const bool pass = e.max_rel_err <= kGradcheckTolerance;
    ok = ok && pass;
    char line[160];
    std::snprintf(line, sizeof line, "%-22s trials %3zu  max rel err %.3e  %s\n", e.name.c_str(),
                  e.trials, e.max_rel_err, pass ? "ok" : "FAIL");
    std::cout << line;
    report.push_back({{"name", e.name}, {"trials", e.trials}, {"max_rel_err", e.max_rel_err}});
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_text_file(fs::path(o.out) / "gradcheck.json", report.dump(2) + "\n");
  }
  return ok ? kExitOk : kExitNumerical;
}

int cmd_ablate(const Options& o) {
  const RunConfig base = effective_config(o);
  OutputSet out(require_out(o));
  if (o.seeds == 0) throw ValidationError("--seeds must be >= 1");

  std::vector<RunConfig> jobs;
  for (std::size_t s = 0; s < o.seeds; ++s) {
    for (SurgeryMode m : kAllModes) {
      RunConfig c = base;
      c.seed = base.seed + s;
      c.surgery.mode = m;
      c.finalize();
      jobs.push_back(c);
    }
  }
  std::vector<DatasetSplit> data(o.seeds);
  parallel_for(o.seeds, worker_threads(o.seeds), [&](std::size_t s) {
    data[s] = obtain_data(jobs[s * kAllModes.size()], o.data);
  });
  std::vector<ExperimentResult> results(jobs.size());
  parallel_for(jobs.size(), worker_threads(jobs.size()), [&](std::size_t i) {
    results[i] = run_experiment(jobs[i], data[i / kAllModes.size()]);
  });

  std::string csv = "mode,seed,in_accuracy,cross_accuracy,cross_average_precision,prior_drift,knn_overlap\n";
  std::map<SurgeryMode, std::vector<const ExperimentResult*>> by_mode;
  for (const auto& r : results) {
    const std::string mode(to_string(r.config.surgery.mode));
    write_run(out, "runs/" + mode + "/seed-" + std::to_string(r.config.seed) + "/", r);
    csv += mode + "," + std::to_string(r.config.seed) + "," + fmt(r.in_domain.acc.accuracy_overall) +
           "," + fmt(cross_accuracy(r)) + "," +
           fmt(r.cross_domain && r.cross_domain->average_precision ? *r.cross_domain->average_precision
                                                                   : std::nan("")) +
           "," + fmt(r.drift.mean_cosine_distance) + "," + fmt(r.drift.knn_overlap) + "\n";
    by_mode[r.config.surgery.mode].push_back(&r);
  }
  out.write("ablation.csv", csv);

  std::string summary = "mode,runs,mean_in_accuracy,mean_cross_accuracy,mean_prior_drift,mean_knn_overlap\n";
  std::cout << "mode             in_acc   cross_acc  drift      knn\n";
  for (SurgeryMode m : kAllModes) {
    double in = 0, cross = 0, drift = 0, knn = 0;
    const auto& rs = by_mode[m];
    for (const auto* r : rs) {
      in += r->in_domain.acc.accuracy_overall;
      cross += cross_accuracy(*r);
      drift += r->drift.mean_cosine_distance;
      knn += r->drift.knn_overlap;
    }
    const double n = static_cast<double>(rs.size());
    const std::string name(to_string(m));
    summary += name + "," + std::to_string(rs.size()) + "," + fmt(in / n) + "," + fmt(cross / n) + "," +
               fmt(drift / n) + "," + fmt(knn / n) + "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %.4f   %.4f     %.6f   %.4f\n", name.c_str(), in / n,
                  cross / n, drift / n, knn / n);
    std::cout << line;
  }
  out.write("summary.csv", summary);
  out.write("config.conf", config_text(base));
  out.write_manifest("ablate", base, o);
  return kExitOk;
}

int cmd_sweep(const Options& o) {
  const RunConfig base = effective_config(o);
  OutputSet out(require_out(o));
  const DatasetSplit data = obtain_data(base, o.data);
  std::vector<RunConfig> jobs;
  for (double lambda : kSweepLambdas) {
    RunConfig c = base;
    c.surgery.lambda = lambda;
    c.finalize();
    jobs.push_back(c);
  }
  std::vector<ExperimentResult> results(jobs.size());
  parallel_for(jobs.size(), worker_threads(jobs.size()),
               [&](std::size_t i) { results[i] = run_experiment(jobs[i], data); });

  std::string csv = "lambda,mode,seed,in_accuracy,cross_accuracy,prior_drift,knn_overlap\n";
  std::cout << "lambda  in_acc   cross_acc  drift      knn\n";
  for (const auto& r : results) {
    const double lambda = r.config.surgery.lambda;
    write_run(out, "runs/lambda-" + format_double(lambda) + "/", r);
    csv += format_double(lambda) + "," + std::string(to_string(r.config.surgery.mode)) + "," +
           std::to_string(r.config.seed) + "," + fmt(r.in_domain.acc.accuracy_overall) + "," +
           fmt(cross_accuracy(r)) + "," + fmt(r.drift.mean_cosine_distance) + "," +
           fmt(r.drift.knn_overlap) + "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-7s %.4f   %.4f     %.6f   %.4f\n", format_double(lambda).c_str(),
                  r.in_domain.acc.accuracy_overall, cross_accuracy(r), r.drift.mean_cosine_distance,
                  r.drift.knn_overlap);
    std::cout << line;
  }
  out.write("sweep.csv", csv);
  out.write("config.conf", config_text(base));
  out.write_manifest("sweep", base, o);
  return kExitOk;
}

int cmd_export_plots(const Options& o) {
  if (o.checkpoint.empty()) throw ValidationError("--checkpoint is required for export-plots");
  const Checkpoint ckpt = read_checkpoint(o.checkpoint);
  const RunConfig cfg = effective_config(o, ckpt.config);
  OutputSet out(require_out(o));
  const DatasetSplit data = obtain_data(cfg, o.data);

  auto export_split = [&](const std::vector<FeatureRecord>& records, const std::string& tag) {
    if (records.empty()) return;
    const std::string student = "projection_student_" + tag + ".csv";
    const std::string teacher = "projection_teacher_" + tag + ".csv";
    export_projection_2d(student_features(ckpt.model, records), records, out.root() / student);
    export_projection_2d(teacher_features(ckpt.model, records), records, out.root() / teacher);
    out.record(student);
    out.record(teacher);
  };
  export_split(data.test_in_domain, kInDomainTag);
  export_split(data.test_cross_domain, kCrossDomainTag);
  out.write_manifest("export-plots", cfg, o);
  std::cout << "wrote projections to " << out.root().string() << "\n";
  return kExitOk;
}

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "run seed");
  app->add_option("--mode", o.mode, "surgery mode");
  app->add_option("--lambda", o.lambda, "teacher-term weight");
  app->add_option("--epochs", o.epochs, "training epochs");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--data", o.data, "record file or split directory (default: synthetic)");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Distillation-guided gradient surgery experiments", "gradsurgeon"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const std::vector<Sub> subs = {
      {"gen-data", "write a synthetic split", cmd_gen_data},
      {"train", "train one model and evaluate it", cmd_train},
      {"eval", "evaluate a checkpoint", cmd_eval},
      {"gradcheck", "finite-difference checks of every analytic gradient", cmd_gradcheck},
      {"ablate", "every surgery mode over several seeds", cmd_ablate},
      {"sweep", "lambda sweep", cmd_sweep},
      {"export-plots", "2D principal-component projections of student and teacher features",
       cmd_export_plots},
  };
  std::map<std::string, CLI::App*> apps;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, o);
    apps[s.name] = sub;
  }
  apps["eval"]->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  apps["export-plots"]->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  apps["ablate"]->add_option("--seeds", o.seeds, "number of consecutive seeds");
  apps["gradcheck"]->add_option("--trials", o.trials, "random instances per check");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    for (const auto& s : subs) {
      if (apps[s.name]->parsed()) return s.fn(o);
    }
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace gradsurgeon::cli
