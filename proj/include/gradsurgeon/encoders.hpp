#pragma once

// Frozen base encoder, low-rank adapter student, frozen teacher, frozen
// semantic branch and linear heads. Every trainable piece exposes a
// vector-Jacobian product so the trainer can push an arbitrary feature-space
// vector back to parameters.

#include <cstdint>
#include <optional>
#include <vector>

#include "gradsurgeon/numerics.hpp"
#include "gradsurgeon/record.hpp"

namespace gradsurgeon {

struct LinearHead {
  Vec64 w;
  double b = 0.0;
  bool frozen = false;

  static LinearHead zeros(std::size_t dim) { return LinearHead{Vec64(dim), 0.0, false}; }
  std::size_t dim() const noexcept { return w.dim(); }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

struct HeadGrad {
  Vec64 w;
  double b = 0.0;
};

/// w . f + b
double head_forward(const LinearHead& head, const Vec64& f);
/// Gradient of bce(head(f), label) with respect to (w, b).
HeadGrad head_grad(const LinearHead& head, const Vec64& f, int label);

struct DenseLayer {
  Mat64 weight;  // out x in
  Vec64 bias;    // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Stack of dense layers with tanh between them; the last layer is linear.
class MlpEncoder {
 public:
  MlpEncoder() = default;
  explicit MlpEncoder(std::vector<DenseLayer> layers);

  /// Single linear layer computing x.
  static MlpEncoder identity(std::size_t dim);
  /// Single linear layer computing scales (elementwise) x.
  static MlpEncoder diagonal(const Vec64& scales);
  /// Random tanh MLP with the given layer widths (dims.front() = input).
  /// Weights ~ N(0, gain^2 / fan_in), biases zero.
  static MlpEncoder random_tanh(const std::vector<std::size_t>& dims, double gain, Rng& rng);

  std::size_t input_dim() const noexcept;
  std::size_t output_dim() const noexcept;
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  Vec64 forward(const Vec64& x) const;

  friend bool operator==(const MlpEncoder&, const MlpEncoder&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Residual (alpha / rank) * B * A applied to the base feature. A is
/// rank x d, B is d x rank.
struct LowRankAdapter {
  Mat64 a;
  Mat64 b;
  std::size_t rank = 0;
  double alpha = 0.0;
  double dropout_rate = 0.0;

  /// A ~ N(0, 1/d), B = 0.
  static LowRankAdapter init(std::size_t dim, std::size_t rank, double alpha, double dropout_rate,
                             Rng& rng);

  double scale() const noexcept { return alpha / static_cast<double>(rank); }
  std::size_t dim() const noexcept { return b.rows(); }

  friend bool operator==(const LowRankAdapter&, const LowRankAdapter&) = default;
};

/// Inverted-dropout multipliers: each entry is 0 or 1 / (1 - p).
struct DropoutMask {
  std::vector<double> multipliers;
};

DropoutMask draw_dropout_mask(std::size_t dim, double rate, Rng& rng);

struct StudentEncoder {
  MlpEncoder base;  // frozen
  LowRankAdapter adapter;
};

struct TeacherEncoder {
  MlpEncoder base;
};

/// Everything the adapter VJP needs from a forward pass.
struct StudentForward {
  Vec64 base;       // base(x)
  Vec64 masked;     // dropout(base(x)) or base(x) in eval
  Vec64 projected;  // A * masked
  Vec64 feature;    // base + scale * B * projected
  std::optional<DropoutMask> mask;
};

struct AdapterGrad {
  Mat64 a;
  Mat64 b;
};

enum class ForwardMode { kEval, kTrain };

Vec64 forward_teacher(const TeacherEncoder& enc, const Vec64& x);

/// Student feature. In train mode with a positive dropout rate a fresh mask is
/// drawn from `rng`; eval mode never touches `rng`.
Vec64 forward_student(const StudentEncoder& enc, const Vec64& x, ForwardMode mode, Rng& rng);
StudentForward forward_student_cached(const StudentEncoder& enc, const Vec64& x, ForwardMode mode,
                                      Rng& rng);
/// Forward pass with a caller-supplied mask (nullopt = no dropout).
StudentForward forward_student_with_mask(const StudentEncoder& enc, const Vec64& x,
                                         const std::optional<DropoutMask>& mask);

/// d<f(x; A, B), v>/d(A, B). `mask` must be the one used by the paired
/// forward pass; it may only be omitted in eval mode or when dropout is off.
AdapterGrad vjp_adapter(const StudentEncoder& enc, const Vec64& x, const Vec64& v,
                        const std::optional<DropoutMask>& mask, ForwardMode mode);
AdapterGrad vjp_adapter(const StudentEncoder& enc, const StudentForward& cache, const Vec64& v);

/// Frozen semantic map. In both synthetic and ingestion mode the semantic
/// feature is precomputed and stored on the record; the branch only validates
/// and returns it.
class SemanticBranch {
 public:
  explicit SemanticBranch(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const noexcept { return dim_; }
  const Vec64& forward_text(const FeatureRecord& record) const;

 private:
  std::size_t dim_;
};

/// Student, teacher and the three heads.
struct DetectorModel {
  StudentEncoder student;
  TeacherEncoder teacher;
  LinearHead head_img;
  LinearHead head_text;
  LinearHead head_teacher;
};

/// FNV-1a over the raw bytes of every value, in layer order.
std::uint64_t fingerprint(const MlpEncoder& enc);
std::uint64_t fingerprint(const LinearHead& head);
std::uint64_t fingerprint(const LowRankAdapter& adapter);

}  // namespace gradsurgeon
