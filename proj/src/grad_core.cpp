#include "gradsurgeon/grad_core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "gradsurgeon/error.hpp"

namespace gradsurgeon {

namespace {

constexpr std::array<std::pair<SurgeryMode, std::string_view>, 6> kModeNames{{
    {SurgeryMode::kBaseline, "baseline"},
    {SurgeryMode::kSuppressOnly, "suppress_only"},
    {SurgeryMode::kAlignOnly, "align_only"},
    {SurgeryMode::kFull, "full"},
    {SurgeryMode::kFullTextGrad, "full_text_grad"},
    {SurgeryMode::kFullImgGrad, "full_img_grad"},
}};

void check_label(int label) {
  if (label != 0 && label != 1) {
    throw ValidationError("label must be 0 or 1, got " + std::to_string(label));
  }
}

}  // namespace

std::string_view to_string(SurgeryMode mode) noexcept {
  for (const auto& [m, name] : kModeNames) {
    if (m == mode) return name;
  }
  return "unknown";
}

SurgeryMode parse_surgery_mode(std::string_view name) {
  for (const auto& [m, n] : kModeNames) {
    if (n == name) return m;
  }
  throw ValidationError("unknown mode '" + std::string(name) + "'");
}

double bce_with_logits(double logit, int label) {
  check_label(label);
  // softplus(z) - y z == softplus(z) for y=0 and softplus(-z) for y=1; the
  // latter form keeps full relative precision when the loss is tiny.
  return label == 1 ? softplus(-logit) : softplus(logit);
}

double bce_with_logits_grad(double logit, int label) {
  check_label(label);
  return stable_sigmoid(logit) - static_cast<double>(label);
}

Vec64 feature_grad(const LinearHead& head, const Vec64& f, int label) {
  return scaled(head.w, bce_with_logits_grad(head_forward(head, f), label));
}

Vec64 positive_part(const Vec64& g) {
  Vec64 out = g;
  for (auto& v : out) v = std::max(v, 0.0);
  return out;
}

Vec64 negative_part(const Vec64& g) {
  Vec64 out = g;
  for (auto& v : out) v = std::min(v, 0.0);
  return out;
}

HalfSpaceDecomposition decompose(const Vec64& g) { return {positive_part(g), negative_part(g)}; }

Vec64 harmful_direction(const Vec64& g_text) { return positive_part(g_text); }

Vec64 beneficial_direction(const Vec64& g_img) { return negative_part(g_img); }

Projection orthogonal_suppress(const Vec64& g_task, const Vec64& g_harm, double eps) {
  require_same_dim("orthogonal_suppress", g_task.dim(), g_harm.dim());
  if (!(eps > 0.0)) throw ValidationError("orthogonal_suppress: eps must be positive");
  const double norm = l2_norm(g_harm);
  if (norm <= eps) return Projection{g_task, true};
  const Vec64 unit = scaled(g_harm, 1.0 / norm);
  Vec64 out = g_task;
  axpy(-dot(g_task, unit), unit, out);
  return Projection{std::move(out), false};
}

double align_loss(const Vec64& f, const Vec64& g_help) {
  require_same_dim("align_loss", f.dim(), g_help.dim());
  return dot(f, g_help);
}

Vec64 align_loss_grad(const Vec64& f, const Vec64& g_help) {
  require_same_dim("align_loss_grad", f.dim(), g_help.dim());
  return g_help;
}

Vec64 assemble_final_grad(const Vec64& g_tilde, const Vec64& g_help, double lambda) {
  require_same_dim("assemble_final_grad", g_tilde.dim(), g_help.dim());
  if (!(lambda >= 0.0)) throw ValidationError("assemble_final_grad: lambda must be >= 0");
  Vec64 out = g_tilde;
  axpy(lambda, g_help, out);
  return out;
}

bool mode_projects(SurgeryMode mode) noexcept {
  return mode == SurgeryMode::kSuppressOnly || mode == SurgeryMode::kFull ||
         mode == SurgeryMode::kFullTextGrad || mode == SurgeryMode::kFullImgGrad;
}

bool mode_aligns(SurgeryMode mode) noexcept {
  return mode == SurgeryMode::kAlignOnly || mode == SurgeryMode::kFull ||
         mode == SurgeryMode::kFullTextGrad || mode == SurgeryMode::kFullImgGrad;
}

SurgeryOutput apply_surgery(const GradientTriple& grads, SurgeryMode mode, double lambda,
                            double eps) {
  require_same_dim("apply_surgery text", grads.task.dim(), grads.text.dim());
  require_same_dim("apply_surgery img", grads.task.dim(), grads.img.dim());

  SurgeryOutput out;
  out.g_harm = mode == SurgeryMode::kFullTextGrad ? grads.text : harmful_direction(grads.text);
  out.g_help = mode == SurgeryMode::kFullImgGrad ? grads.img : beneficial_direction(grads.img);

  if (mode_projects(mode)) {
    auto projection = orthogonal_suppress(grads.task, out.g_harm, eps);
    out.g_tilde = std::move(projection.value);
    out.projection_skipped = projection.skipped;
  } else {
    out.g_tilde = grads.task;
    out.projection_skipped = true;
  }
  out.g_final = mode_aligns(mode) ? assemble_final_grad(out.g_tilde, out.g_help, lambda) : out.g_tilde;
  return out;
}

int directional_probe(const ScalarFn& loss, const Vec64& u, std::size_t j, double epsilon) {
  if (j >= u.dim()) throw DimensionError("directional_probe coordinate", j, u.dim());
  if (!(epsilon > 0.0)) throw ValidationError("directional_probe: epsilon must be positive");
  Vec64 moved = u;
  moved[j] += epsilon;
  const double delta = loss(moved) - loss(u);
  return (delta > 0.0) - (delta < 0.0);
}

double default_probe_epsilon(const Vec64& u) { return 1e-4 * (1.0 + l2_norm(u)); }

}  // namespace gradsurgeon
