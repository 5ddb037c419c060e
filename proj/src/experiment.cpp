#include "gradsurgeon/experiment.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <thread>

#include "gradsurgeon/error.hpp"

namespace gradsurgeon {

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

DatasetSplit make_dataset(const RunConfig& cfg) { return generate_synthetic(cfg.data); }

ExperimentResult run_experiment(const RunConfig& cfg, const DatasetSplit& data) {
  validate_records(data.train, "train");
  validate_records(data.test_in_domain, "in-domain test");
  const std::size_t dim = data.train.front().x.dim();

  ExperimentResult out;
  out.config = cfg;
  DetectorModel model = build_model(make_base_encoder(cfg, dim), data.train, cfg.surgery);
  TrainResult trained = train(cfg.surgery, data.train, std::move(model));
  out.model = std::move(trained.model);
  out.history = std::move(trained.history);
  out.in_domain = evaluate(out.model, data.test_in_domain, kInDomainTag);
  if (!data.test_cross_domain.empty()) {
    out.cross_domain = evaluate(out.model, data.test_cross_domain, kCrossDomainTag);
  }
  out.drift = measure_drift(out.model, data.test_in_domain, cfg.drift_k, cfg.drift_samples);
  return out;
}

nlohmann::json to_json(const AccuracyReport& r) {
  return {{"accuracy_real", optional_number(r.accuracy_real)},
          {"accuracy_fake", optional_number(r.accuracy_fake)},
          {"accuracy", r.accuracy_overall},
          {"n_real", r.n_real},
          {"n_fake", r.n_fake}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json domains = nlohmann::json::object();
  for (const auto& [name, d] : r.per_domain) {
    nlohmann::json j = to_json(d.acc);
    j["average_precision"] = optional_number(d.average_precision);
    domains[name] = j;
  }
  nlohmann::json j = to_json(r.acc);
  j["kind"] = "eval";
  j["split"] = r.split;
  j["average_precision"] = optional_number(r.average_precision);
  j["mean_domain_accuracy"] = r.mean_domain_accuracy;
  j["per_domain"] = domains;
  return j;
}

nlohmann::json to_json(const DriftReport& r) {
  return {{"kind", "drift"},
          {"mean_cosine_distance", r.mean_cosine_distance},
          {"knn_overlap", r.knn_overlap},
          {"k", r.k},
          {"n", r.n}};
}

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"steps", r.steps},
          {"loss_img", r.loss_img},
          {"loss_text", r.loss_text},
          {"loss_teacher", r.loss_teacher},
          {"loss_align", r.loss_align},
          {"train_accuracy", r.train_accuracy},
          {"projection_skip_rate", r.projection_skip_rate},
          {"mean_update_norm", r.mean_update_norm},
          {"max_scaled_residual", r.max_scaled_residual},
          {"loss_img_first_quarter", r.loss_img_first_quarter},
          {"loss_img_last_quarter", r.loss_img_last_quarter}};
}

std::string history_jsonl(const RunHistory& h) {
  std::string out;
  for (const auto& e : h.epochs) out += to_json(e).dump() + "\n";
  return out;
}

std::string metrics_jsonl(const ExperimentResult& r) {
  std::string out = to_json(r.in_domain).dump() + "\n";
  if (r.cross_domain) out += to_json(*r.cross_domain).dump() + "\n";
  out += to_json(r.drift).dump() + "\n";
  return out;
}

nlohmann::json report_json(const ExperimentResult& r) {
  nlohmann::json j;
  j["mode"] = std::string(to_string(r.config.surgery.mode));
  j["seed"] = r.config.seed;
  j["lambda"] = r.config.surgery.lambda;
  j["config_hash"] = config_hash(r.config);
  j["in_domain"] = to_json(r.in_domain);
  j["cross_domain"] = r.cross_domain ? to_json(*r.cross_domain) : nlohmann::json(nullptr);
  j["drift"] = to_json(r.drift);
  j["epochs"] = r.history.epochs.size();
  j["final_epoch"] = r.history.epochs.empty() ? nlohmann::json(nullptr)
                                              : to_json(r.history.epochs.back());
  return j;
}

std::size_t worker_threads(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GRADSURGEON_THREADS"); env && *env) {
    n = static_cast<std::size_t>(parse_uint(env, "GRADSURGEON_THREADS"));
    if (n == 0) throw ValidationError("GRADSURGEON_THREADS must be >= 1");
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

}  // namespace gradsurgeon
