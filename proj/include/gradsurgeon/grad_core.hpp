#pragma once

// Feature-space gradient surgery: branch losses and their feature gradients,
// half-space decomposition, orthogonal suppression of the harmful direction,
// prior alignment and assembly of the replacement feature gradient.

#include <functional>
#include <string_view>

#include "gradsurgeon/encoders.hpp"
#include "gradsurgeon/numerics.hpp"

namespace gradsurgeon {

/// Default threshold on the harmful-direction norm below which the
/// projection is skipped.
inline constexpr double kDefaultHarmEps = 1e-12;

/// Which gradient-surgery terms are active.
enum class SurgeryMode {
  kBaseline,       // g_final = g_task
  kSuppressOnly,   // projection, no alignment
  kAlignOnly,      // alignment, no projection
  kFull,           // projection + alignment
  kFullTextGrad,   // harmful direction = whole text gradient
  kFullImgGrad,    // beneficial direction = whole teacher gradient
};

std::string_view to_string(SurgeryMode mode) noexcept;
/// Parses the names used by the CLI and config files ("baseline",
/// "suppress_only", ...). Throws ValidationError on anything else.
SurgeryMode parse_surgery_mode(std::string_view name);
/// Whether the mode runs the orthogonal projection / adds the teacher term.
bool mode_projects(SurgeryMode mode) noexcept;
bool mode_aligns(SurgeryMode mode) noexcept;

/// Per-sample feature gradients of the three branch losses.
struct GradientTriple {
  Vec64 task;  // d L_img / d f
  Vec64 text;  // d L_text / d t
  Vec64 img;   // d L_img^T / d f^T
};

struct HalfSpaceDecomposition {
  Vec64 positive;
  Vec64 negative;
};

struct SurgeryOutput {
  Vec64 g_tilde;
  Vec64 g_harm;
  Vec64 g_help;
  Vec64 g_final;
  bool projection_skipped = true;
};

struct Projection {
  Vec64 value;
  bool skipped = false;
};

/// softplus(logit) - label * logit. Throws ValidationError if label is not 0/1.
double bce_with_logits(double logit, int label);
/// sigmoid(logit) - label.
double bce_with_logits_grad(double logit, int label);

/// Gradient of bce(head(f), label) with respect to f.
Vec64 feature_grad(const LinearHead& head, const Vec64& f, int label);

Vec64 positive_part(const Vec64& g);
Vec64 negative_part(const Vec64& g);
HalfSpaceDecomposition decompose(const Vec64& g);

/// Coordinates of the text gradient whose increase raises the loss.
Vec64 harmful_direction(const Vec64& g_text);
/// Coordinates of the teacher gradient whose increase lowers the loss.
Vec64 beneficial_direction(const Vec64& g_img);

/// Removes from g_task its component along g_harm / |g_harm|. The d x d
/// projector is never formed. If |g_harm| <= eps the input is returned
/// unchanged and `skipped` is set.
Projection orthogonal_suppress(const Vec64& g_task, const Vec64& g_harm,
                               double eps = kDefaultHarmEps);

/// <f, g_help>. g_help is a constant, so the gradient in f is g_help itself.
double align_loss(const Vec64& f, const Vec64& g_help);
Vec64 align_loss_grad(const Vec64& f, const Vec64& g_help);

/// g_tilde + lambda * g_help.
Vec64 assemble_final_grad(const Vec64& g_tilde, const Vec64& g_help, double lambda);

/// Runs the full per-sample surgery for one mode. `lambda` is ignored by the
/// baseline and suppress-only modes.
SurgeryOutput apply_surgery(const GradientTriple& grads, SurgeryMode mode, double lambda,
                            double eps = kDefaultHarmEps);

using ScalarFn = std::function<double(const Vec64&)>;

/// sign(loss(u + epsilon * e_j) - loss(u)) as -1, 0 or +1.
int directional_probe(const ScalarFn& loss, const Vec64& u, std::size_t j, double epsilon);
/// The default probe step 1e-4 * (1 + |u|).
double default_probe_epsilon(const Vec64& u);

}  // namespace gradsurgeon
