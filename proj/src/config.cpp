#include "gradsurgeon/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "gradsurgeon/error.hpp"

namespace gradsurgeon {

namespace {

constexpr std::uint64_t kEncoderStream = 21;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string key_error(std::string_view key, std::string_view msg) {
  return "config key '" + std::string(key) + "': " + std::string(msg);
}

std::size_t parse_size(std::string_view text, std::string_view key) {
  return static_cast<std::size_t>(parse_uint(text, key));
}

struct Field {
  ConfigKey key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GS_DOUBLE(name, member, help)                                                       \
  Field{{name, help},                                                                       \
        [](RunConfig& c, std::string_view v) { c.member = parse_double(v, name); },        \
        [](const RunConfig& c) { return format_double(c.member); }}
#define GS_SIZE(name, member, help)                                                         \
  Field{{name, help},                                                                       \
        [](RunConfig& c, std::string_view v) { c.member = parse_size(v, name); },          \
        [](const RunConfig& c) { return std::to_string(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{{"seed", "run seed; drives data generation and training"},
            [](RunConfig& c, std::string_view v) { c.seed = parse_uint(v, "seed"); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Field{{"mode", "baseline | suppress_only | align_only | full | full_text_grad | full_img_grad"},
            [](RunConfig& c, std::string_view v) { c.surgery.mode = parse_surgery_mode(v); },
            [](const RunConfig& c) { return std::string(to_string(c.surgery.mode)); }},
      GS_DOUBLE("lambda", surgery.lambda, "weight of the teacher term, >= 0"),
      GS_DOUBLE("lr", surgery.lr, "learning rate"),
      GS_SIZE("batch_size", surgery.batch_size, "samples per step"),
      GS_SIZE("epochs", surgery.epochs, "passes over the training set"),
      GS_DOUBLE("eps_norm", surgery.eps_norm, "projection is skipped when |g_harm| <= eps_norm"),
      Field{{"optimizer", "adam | sgd"},
            [](RunConfig& c, std::string_view v) { c.surgery.optimizer = parse_optimizer(v); },
            [](const RunConfig& c) { return std::string(to_string(c.surgery.optimizer)); }},
      GS_DOUBLE("adam_beta1", surgery.adam_beta1, "Adam first-moment decay"),
      GS_DOUBLE("adam_beta2", surgery.adam_beta2, "Adam second-moment decay"),
      GS_DOUBLE("adam_eps", surgery.adam_eps, "Adam denominator epsilon"),
      GS_SIZE("lora_rank", surgery.lora_rank, "adapter rank r"),
      GS_DOUBLE("lora_alpha", surgery.lora_alpha, "adapter scale numerator (scale = alpha / r)"),
      GS_DOUBLE("lora_dropout", surgery.lora_dropout, "dropout on the adapter input, in [0, 1)"),
      GS_SIZE("teacher_head_steps", surgery.teacher_head_steps, "full-batch steps for the teacher head"),
      GS_DOUBLE("teacher_head_lr", surgery.teacher_head_lr, "step size for the teacher head"),
      Field{{"encoder", "identity | tanh"},
            [](RunConfig& c, std::string_view v) {
              if (v == "identity") c.encoder = BaseEncoderKind::kIdentity;
              else if (v == "tanh") c.encoder = BaseEncoderKind::kTanh;
              else throw ValidationError(key_error("encoder", "expected identity or tanh"));
            },
            [](const RunConfig& c) {
              return std::string(c.encoder == BaseEncoderKind::kIdentity ? "identity" : "tanh");
            }},
      GS_SIZE("encoder_depth", encoder_depth, "number of d x d layers in the tanh encoder"),
      GS_DOUBLE("encoder_gain", encoder_gain, "tanh encoder init: N(0, gain^2 / fan_in)"),
      GS_SIZE("data.d_artifact", data.d_artifact, "artifact block width"),
      GS_SIZE("data.d_semantic", data.d_semantic, "semantic block width"),
      GS_SIZE("data.d_noise", data.d_noise, "noise block width"),
      GS_DOUBLE("data.corr_in", data.corr_in, "semantic/label agreement, train and in-domain test"),
      GS_DOUBLE("data.corr_out", data.corr_out, "semantic/label agreement, cross-domain test"),
      GS_SIZE("data.n_train", data.n_train, "training records"),
      GS_SIZE("data.n_test_in", data.n_test_in, "in-domain test records"),
      GS_SIZE("data.n_test_cross", data.n_test_cross, "cross-domain test records"),
      GS_DOUBLE("data.artifact_margin", data.artifact_margin, "artifact block mean is +-margin"),
      GS_DOUBLE("data.semantic_amplitude", data.semantic_amplitude, "semantic block mean is +-amplitude"),
      GS_DOUBLE("data.semantic_noise", data.semantic_noise, "std of the noise added to t_sem"),
      GS_SIZE("drift_k", drift_k, "neighbours for the kNN overlap"),
      GS_SIZE("drift_samples", drift_samples, "in-domain test records used for drift metrics (0 = all)"),
      GS_SIZE("probe_steps", probe_steps, "steps for the text-only probe"),
      GS_DOUBLE("probe_lr", probe_lr, "step size for the text-only probe"),
  };
  return table;
}

#undef GS_DOUBLE
#undef GS_SIZE

}  // namespace

void RunConfig::finalize() {
  data.seed = seed;
  surgery.seed = seed;
  data.validate();
  surgery.validate();
  if (encoder == BaseEncoderKind::kTanh && encoder_depth == 0)
    throw ValidationError(key_error("encoder_depth", "must be >= 1"));
  if (!(encoder_gain > 0.0)) throw ValidationError(key_error("encoder_gain", "must be > 0"));
  if (drift_k == 0) throw ValidationError(key_error("drift_k", "must be >= 1"));
  if (!(probe_lr > 0.0)) throw ValidationError(key_error("probe_lr", "must be > 0"));
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key.name == key) {
      try {
        f.set(cfg, trim(value));
      } catch (const ValidationError& e) {
        const std::string msg = e.what();
        if (msg.rfind("config key", 0) == 0) throw;
        throw ValidationError(key_error(key, msg));
      }
      return;
    }
  }
  throw ValidationError(key_error(key, "unknown key"));
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (eq == std::string_view::npos) throw ValidationError(where + ": expected 'key = value'");
    const std::string key(trim(view.substr(0, eq)));
    const std::string value(trim(view.substr(eq + 1)));
    if (key.empty()) throw ValidationError(where + ": empty key");
    if (!seen.insert(key).second) throw ValidationError(where + ": " + key_error(key, "repeated"));
    out.emplace_back(key, value);
  }
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  for (const auto& [k, v] : read_config_file(path)) set_config_value(cfg, k, v);
  return cfg;
}

std::vector<std::pair<std::string, std::string>> echo_config(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(std::string(f.key.name), f.get(cfg));
  return out;
}

std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : echo_config(cfg)) out += k + " = " + v + "\n";
  return out;
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(config_text(cfg))); }

MlpEncoder make_base_encoder(const RunConfig& cfg, std::size_t dim) {
  if (cfg.encoder == BaseEncoderKind::kIdentity) return MlpEncoder::identity(dim);
  Rng rng = Rng(cfg.seed).derive(kEncoderStream);
  std::vector<std::size_t> dims(cfg.encoder_depth + 1, dim);
  return MlpEncoder::random_tanh(dims, cfg.encoder_gain, rng);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ValidationError(key_error(what, "expected a finite number, got '" + std::string(text) + "'"));
  }
  return v;
}

std::uint64_t parse_uint(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ValidationError(
        key_error(what, "expected a non-negative integer, got '" + std::string(text) + "'"));
  }
  return v;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[v & 0xF];
    v >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace gradsurgeon
