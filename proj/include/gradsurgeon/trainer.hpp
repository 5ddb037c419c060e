#pragma once

// Training loop. Each step computes student, semantic and teacher features
// per sample, the three branch feature gradients, runs gradient surgery and
// pulls the replacement feature gradient back to the adapter through its
// vector-Jacobian product. Heads are trained on their own unmodified losses.
// The teacher encoder, the student base and the teacher head never change.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "gradsurgeon/encoders.hpp"
#include "gradsurgeon/grad_core.hpp"
#include "gradsurgeon/record.hpp"

namespace gradsurgeon {

enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view name);

struct SurgeryConfig {
  double lambda = 0.2;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  double eps_norm = kDefaultHarmEps;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  SurgeryMode mode = SurgeryMode::kFull;
  std::uint64_t seed = 0;

  std::size_t lora_rank = 6;
  double lora_alpha = 6.0;
  double lora_dropout = 0.8;

  std::size_t teacher_head_steps = 500;
  double teacher_head_lr = 0.1;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// One Adam step in place. Moments are sized on the first call.
void adam_update(std::span<double> param, std::span<const double> grad, AdamState& state,
                 double lr, double beta1, double beta2, double eps);
void sgd_update(std::span<double> param, std::span<const double> grad, double lr);

/// Adam moments for every trainable block.
struct OptimizerState {
  AdamState adapter_a;
  AdamState adapter_b;
  AdamState img_w;
  AdamState img_b;
  AdamState text_w;
  AdamState text_b;
  std::uint64_t steps = 0;
};

/// Averaged gradients for every trainable block.
struct ParameterGrads {
  AdapterGrad adapter;
  HeadGrad head_img;
  HeadGrad head_text;
};

struct StepMetrics {
  double loss_img = 0.0;
  double loss_text = 0.0;
  double loss_teacher = 0.0;
  double loss_align = 0.0;
  std::size_t correct = 0;
  std::size_t samples = 0;
  std::size_t projections_applied = 0;
  std::size_t projections_skipped = 0;
  /// max over samples of |<g_tilde, g_harm>| / (|g_task| |g_harm|), over
  /// samples where the projection ran.
  double max_scaled_residual = 0.0;
  double update_norm = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double loss_img = 0.0;
  double loss_text = 0.0;
  double loss_teacher = 0.0;
  double loss_align = 0.0;
  double train_accuracy = 0.0;
  double projection_skip_rate = 0.0;
  double mean_update_norm = 0.0;
  double max_scaled_residual = 0.0;
  double loss_img_first_quarter = 0.0;
  double loss_img_last_quarter = 0.0;
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  std::vector<StepMetrics> steps;
};

/// Full-batch gradient descent on the logistic loss starting from a zero
/// head. Used for the frozen teacher head and for linear probes.
LinearHead fit_logistic_head(std::span<const Vec64> features, std::span<const int> labels,
                             std::size_t steps, double lr,
                             std::vector<double>* loss_trace = nullptr);

/// Fits h^T_img on frozen teacher features and marks it frozen.
LinearHead pretrain_teacher_head(const TeacherEncoder& teacher,
                                 std::span<const FeatureRecord> train_set, std::size_t steps,
                                 double lr, std::vector<double>* loss_trace = nullptr);

/// Student == teacher (shared base), A ~ N(0, 1/d), B = 0, zero image and
/// text heads, teacher head pretrained on `train_set`.
DetectorModel build_model(const MlpEncoder& base, std::span<const FeatureRecord> train_set,
                          const SurgeryConfig& config);

/// Parameter gradients for one batch: per-sample surgery, then the
/// arithmetic mean in sample order. `masks` holds one entry per sample
/// (nullopt = no dropout). Metrics other than update_norm are filled in.
ParameterGrads batch_gradients(const DetectorModel& model,
                               std::span<const FeatureRecord* const> batch,
                               std::span<const std::optional<DropoutMask>> masks,
                               const SurgeryConfig& config, StepMetrics& metrics);

/// Applies averaged gradients with the configured optimizer; returns the
/// L2 norm of the parameter change.
double apply_update(DetectorModel& model, const ParameterGrads& grads, const SurgeryConfig& config,
                    OptimizerState& state);

/// One optimizer step. Dropout masks come from `dropout_rng`, one draw per
/// sample in batch order.
StepMetrics train_step(DetectorModel& model, std::span<const FeatureRecord* const> batch,
                       const SurgeryConfig& config, OptimizerState& state, Rng& dropout_rng);

struct TrainResult {
  DetectorModel model;
  RunHistory history;
};

/// Runs config.epochs epochs of seeded shuffled minibatches.
TrainResult train(const SurgeryConfig& config, std::span<const FeatureRecord> train_set,
                  DetectorModel model);

}  // namespace gradsurgeon
