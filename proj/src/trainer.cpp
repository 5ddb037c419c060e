#include "gradsurgeon/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gradsurgeon/error.hpp"

namespace gradsurgeon {

namespace {

enum Stream : std::uint64_t { kAdapterInit = 11, kShuffle = 12, kDropout = 13 };

void check_finite(double v, const char* what, const FeatureRecord& r) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string("non-finite ") + what + " on sample '" + r.id + "'");
  }
}

double squared_delta(std::span<const double> before, std::span<const double> after) {
  double acc = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double d = after[i] - before[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ValidationError("unknown optimizer '" + std::string(name) + "'");
}

void SurgeryConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(eps_norm > 0.0)) throw ValidationError("eps_norm must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ValidationError("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ValidationError("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be > 0");
  if (lora_rank < 1) throw ValidationError("lora_rank must be >= 1");
  if (!std::isfinite(lora_alpha)) throw ValidationError("lora_alpha must be finite");
  if (!(lora_dropout >= 0.0 && lora_dropout < 1.0))
    throw ValidationError("lora_dropout must be in [0, 1)");
  if (!(teacher_head_lr > 0.0)) throw ValidationError("teacher_head_lr must be > 0");
}

void adam_update(std::span<double> param, std::span<const double> grad, AdamState& state,
                 double lr, double beta1, double beta2, double eps) {
  require_same_dim("adam_update", param.size(), grad.size());
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  require_same_dim("adam_update state", state.m.size(), param.size());
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(beta1, t);
  const double correction2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

void sgd_update(std::span<double> param, std::span<const double> grad, double lr) {
  require_same_dim("sgd_update", param.size(), grad.size());
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

LinearHead fit_logistic_head(std::span<const Vec64> features, std::span<const int> labels,
                             std::size_t steps, double lr, std::vector<double>* loss_trace) {
  require_same_dim("fit_logistic_head", features.size(), labels.size());
  if (features.empty()) throw ValidationError("fit_logistic_head: empty training set");
  bool seen[2] = {false, false};
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("fit_logistic_head: label must be 0 or 1");
    seen[y] = true;
  }
  if (!seen[0] || !seen[1]) throw ValidationError("fit_logistic_head: single-label dataset");

  const std::size_t n = features.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  LinearHead head = LinearHead::zeros(features.front().dim());
  auto mean_loss = [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += bce_with_logits(head_forward(head, features[i]), labels[i]);
    return acc * inv_n;
  };
  if (loss_trace) loss_trace->push_back(mean_loss());
  for (std::size_t step = 0; step < steps; ++step) {
    Vec64 gw(head.dim());
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = head_grad(head, features[i], labels[i]);
      axpy(1.0, g.w, gw);
      gb += g.b;
    }
    axpy(-lr * inv_n, gw, head.w);
    head.b -= lr * gb * inv_n;
    if (loss_trace) loss_trace->push_back(mean_loss());
  }
  return head;
}

LinearHead pretrain_teacher_head(const TeacherEncoder& teacher,
                                 std::span<const FeatureRecord> train_set, std::size_t steps,
                                 double lr, std::vector<double>* loss_trace) {
  std::vector<Vec64> feats;
  std::vector<int> labels;
  feats.reserve(train_set.size());
  labels.reserve(train_set.size());
  for (const auto& r : train_set) {
    feats.push_back(forward_teacher(teacher, r.x));
    labels.push_back(r.label);
  }
  auto head = fit_logistic_head(feats, labels, steps, lr, loss_trace);
  head.frozen = true;
  return head;
}

DetectorModel build_model(const MlpEncoder& base, std::span<const FeatureRecord> train_set,
                          const SurgeryConfig& config) {
  config.validate();
  if (train_set.empty()) throw ValidationError("build_model: empty training set");
  const std::size_t d = base.output_dim();
  Rng init_rng = Rng(config.seed).derive(kAdapterInit);

  DetectorModel model;
  model.student.base = base;
  model.student.adapter =
      LowRankAdapter::init(d, config.lora_rank, config.lora_alpha, config.lora_dropout, init_rng);
  model.teacher.base = base;
  model.head_img = LinearHead::zeros(d);
  model.head_text = LinearHead::zeros(train_set.front().t_sem.dim());
  require_same_dim("build_model semantic dim", model.head_text.dim(), d);
  model.head_teacher = pretrain_teacher_head(model.teacher, train_set, config.teacher_head_steps,
                                             config.teacher_head_lr);
  return model;
}

ParameterGrads batch_gradients(const DetectorModel& model,
                               std::span<const FeatureRecord* const> batch,
                               std::span<const std::optional<DropoutMask>> masks,
                               const SurgeryConfig& config, StepMetrics& metrics) {
  if (batch.empty()) throw ValidationError("train_step: empty batch");
  require_same_dim("batch_gradients masks", masks.size(), batch.size());
  if (!model.head_teacher.frozen) throw ValidationError("train_step: teacher head is not frozen");

  const auto& adapter = model.student.adapter;
  const SemanticBranch semantic(model.head_text.dim());
  ParameterGrads grads{AdapterGrad{Mat64(adapter.a.rows(), adapter.a.cols()),
                                   Mat64(adapter.b.rows(), adapter.b.cols())},
                       HeadGrad{Vec64(model.head_img.dim()), 0.0},
                       HeadGrad{Vec64(model.head_text.dim()), 0.0}};

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const FeatureRecord& r = *batch[i];
    const StudentForward cache = forward_student_with_mask(model.student, r.x, masks[i]);
    const Vec64& f = cache.feature;
    const Vec64& t = semantic.forward_text(r);
    const Vec64 f_teacher = forward_teacher(model.teacher, r.x);

    const double z_img = head_forward(model.head_img, f);
    const double z_text = head_forward(model.head_text, t);
    const double z_teacher = head_forward(model.head_teacher, f_teacher);
    const double l_img = bce_with_logits(z_img, r.label);
    const double l_text = bce_with_logits(z_text, r.label);
    const double l_teacher = bce_with_logits(z_teacher, r.label);
    check_finite(l_img, "image loss", r);
    check_finite(l_text, "text loss", r);
    check_finite(l_teacher, "teacher loss", r);

    const GradientTriple triple{feature_grad(model.head_img, f, r.label),
                                feature_grad(model.head_text, t, r.label),
                                feature_grad(model.head_teacher, f_teacher, r.label)};
    const SurgeryOutput surgery = apply_surgery(triple, config.mode, config.lambda, config.eps_norm);
    if (!surgery.g_final.all_finite()) throw NumericalError("non-finite feature gradient on sample '" + r.id + "'");

    if (mode_projects(config.mode) && surgery.projection_skipped) {
      ++metrics.projections_skipped;
    } else if (mode_projects(config.mode)) {
      ++metrics.projections_applied;
      const double denom = l2_norm(triple.task) * l2_norm(surgery.g_harm);
      if (denom > 0.0) {
        metrics.max_scaled_residual =
            std::max(metrics.max_scaled_residual, std::abs(dot(surgery.g_tilde, surgery.g_harm)) / denom);
      }
    }

    const AdapterGrad sample_grad = vjp_adapter(model.student, cache, surgery.g_final);
    for (std::size_t k = 0; k < sample_grad.a.size(); ++k) grads.adapter.a.span()[k] += sample_grad.a.span()[k];
    for (std::size_t k = 0; k < sample_grad.b.size(); ++k) grads.adapter.b.span()[k] += sample_grad.b.span()[k];

    const HeadGrad g_img = head_grad(model.head_img, f, r.label);
    axpy(1.0, g_img.w, grads.head_img.w);
    grads.head_img.b += g_img.b;
    const HeadGrad g_text = head_grad(model.head_text, t, r.label);
    axpy(1.0, g_text.w, grads.head_text.w);
    grads.head_text.b += g_text.b;

    metrics.loss_img += l_img;
    metrics.loss_text += l_text;
    metrics.loss_teacher += l_teacher;
    metrics.loss_align += align_loss(f, surgery.g_help);
    metrics.correct += static_cast<std::size_t>((z_img > 0.0) == (r.label == 1));
    ++metrics.samples;
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto& v : grads.adapter.a.span()) v *= inv_n;
  for (auto& v : grads.adapter.b.span()) v *= inv_n;
  grads.head_img.w = scaled(grads.head_img.w, inv_n);
  grads.head_img.b *= inv_n;
  grads.head_text.w = scaled(grads.head_text.w, inv_n);
  grads.head_text.b *= inv_n;
  metrics.loss_img *= inv_n;
  metrics.loss_text *= inv_n;
  metrics.loss_teacher *= inv_n;
  metrics.loss_align *= inv_n;
  return grads;
}

double apply_update(DetectorModel& model, const ParameterGrads& grads, const SurgeryConfig& config,
                    OptimizerState& state) {
  double delta_sq = 0.0;
  auto step = [&](std::span<double> param, std::span<const double> grad, AdamState& adam) {
    const std::vector<double> before(param.begin(), param.end());
    if (config.optimizer == OptimizerKind::kAdam) {
      adam_update(param, grad, adam, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps);
    } else {
      sgd_update(param, grad, config.lr);
    }
    delta_sq += squared_delta(before, param);
  };

  auto& adapter = model.student.adapter;
  step(adapter.a.span(), grads.adapter.a.span(), state.adapter_a);
  step(adapter.b.span(), grads.adapter.b.span(), state.adapter_b);
  if (!model.head_img.frozen) {
    step(model.head_img.w.span(), grads.head_img.w.span(), state.img_w);
    step(std::span<double>(&model.head_img.b, 1), std::span<const double>(&grads.head_img.b, 1),
         state.img_b);
  }
  if (!model.head_text.frozen) {
    step(model.head_text.w.span(), grads.head_text.w.span(), state.text_w);
    step(std::span<double>(&model.head_text.b, 1), std::span<const double>(&grads.head_text.b, 1),
         state.text_b);
  }
  ++state.steps;
  return std::sqrt(delta_sq);
}

StepMetrics train_step(DetectorModel& model, std::span<const FeatureRecord* const> batch,
                       const SurgeryConfig& config, OptimizerState& state, Rng& dropout_rng) {
  const auto& adapter = model.student.adapter;
  std::vector<std::optional<DropoutMask>> masks(batch.size());
  if (adapter.dropout_rate > 0.0) {
    for (auto& m : masks) m = draw_dropout_mask(adapter.a.cols(), adapter.dropout_rate, dropout_rng);
  }
  StepMetrics metrics;
  const ParameterGrads grads = batch_gradients(model, batch, masks, config, metrics);
  metrics.update_norm = apply_update(model, grads, config, state);
  return metrics;
}

TrainResult train(const SurgeryConfig& config, std::span<const FeatureRecord> train_set,
                  DetectorModel model) {
  config.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");

  const Rng root(config.seed);
  Rng dropout_rng = root.derive(kDropout);
  OptimizerState state;
  RunHistory history;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = root.derive(kShuffle).derive(epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    }

    const std::size_t first_step = history.steps.size();
    std::vector<const FeatureRecord*> batch;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) batch.push_back(&train_set[order[k]]);
      history.steps.push_back(train_step(model, batch, config, state, dropout_rng));
    }

    const std::span<const StepMetrics> steps(history.steps.data() + first_step,
                                             history.steps.size() - first_step);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = steps.size();
    std::size_t samples = 0, correct = 0, applied = 0, skipped = 0;
    for (const auto& s : steps) {
      const double w = static_cast<double>(s.samples);
      rec.loss_img += s.loss_img * w;
      rec.loss_text += s.loss_text * w;
      rec.loss_teacher += s.loss_teacher * w;
      rec.loss_align += s.loss_align * w;
      rec.mean_update_norm += s.update_norm;
      rec.max_scaled_residual = std::max(rec.max_scaled_residual, s.max_scaled_residual);
      samples += s.samples;
      correct += s.correct;
      applied += s.projections_applied;
      skipped += s.projections_skipped;
    }
    const double inv = 1.0 / static_cast<double>(samples);
    rec.loss_img *= inv;
    rec.loss_text *= inv;
    rec.loss_teacher *= inv;
    rec.loss_align *= inv;
    rec.train_accuracy = static_cast<double>(correct) * inv;
    rec.projection_skip_rate =
        applied + skipped == 0 ? 0.0 : static_cast<double>(skipped) / static_cast<double>(applied + skipped);
    rec.mean_update_norm /= static_cast<double>(steps.size());
    const std::size_t quarter = std::max<std::size_t>(1, steps.size() / 4);
    for (std::size_t k = 0; k < quarter; ++k) {
      rec.loss_img_first_quarter += steps[k].loss_img;
      rec.loss_img_last_quarter += steps[steps.size() - quarter + k].loss_img;
    }
    rec.loss_img_first_quarter /= static_cast<double>(quarter);
    rec.loss_img_last_quarter /= static_cast<double>(quarter);
    history.epochs.push_back(rec);
  }
  return TrainResult{std::move(model), std::move(history)};
}

}  // namespace gradsurgeon
