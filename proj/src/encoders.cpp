#include "gradsurgeon/encoders.hpp"

#include <bit>
#include <cmath>
#include <utility>

#include "gradsurgeon/error.hpp"
#include "gradsurgeon/grad_core.hpp"

namespace gradsurgeon {

double head_forward(const LinearHead& head, const Vec64& f) {
  require_same_dim("head_forward", head.dim(), f.dim());
  return dot(head.w, f) + head.b;
}

HeadGrad head_grad(const LinearHead& head, const Vec64& f, int label) {
  const double c = bce_with_logits_grad(head_forward(head, f), label);
  return HeadGrad{scaled(f, c), c};
}

MlpEncoder::MlpEncoder(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ValidationError("MlpEncoder: needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    require_same_dim("MlpEncoder bias", layer.weight.rows(), layer.bias.dim());
    if (i > 0) require_same_dim("MlpEncoder layer chain", layers_[i - 1].weight.rows(),
                                layer.weight.cols());
  }
}

MlpEncoder MlpEncoder::identity(std::size_t dim) {
  return MlpEncoder({DenseLayer{Mat64::identity(dim), Vec64(dim)}});
}

MlpEncoder MlpEncoder::diagonal(const Vec64& scales) {
  Mat64 w(scales.dim(), scales.dim());
  for (std::size_t i = 0; i < scales.dim(); ++i) w(i, i) = scales[i];
  return MlpEncoder({DenseLayer{std::move(w), Vec64(scales.dim())}});
}

MlpEncoder MlpEncoder::random_tanh(const std::vector<std::size_t>& dims, double gain, Rng& rng) {
  if (dims.size() < 2) throw ValidationError("MlpEncoder::random_tanh: need >= 2 widths");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double stddev = gain / std::sqrt(static_cast<double>(dims[i]));
    Mat64 w(dims[i + 1], dims[i]);
    for (auto& v : w.span()) v = stddev * rng.normal();
    layers.push_back(DenseLayer{std::move(w), Vec64(dims[i + 1])});
  }
  return MlpEncoder(std::move(layers));
}

std::size_t MlpEncoder::input_dim() const noexcept {
  return layers_.empty() ? 0 : layers_.front().weight.cols();
}

std::size_t MlpEncoder::output_dim() const noexcept {
  return layers_.empty() ? 0 : layers_.back().weight.rows();
}

Vec64 MlpEncoder::forward(const Vec64& x) const {
  require_same_dim("MlpEncoder::forward input", input_dim(), x.dim());
  Vec64 h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Vec64 z = add(matvec(layers_[i].weight, h), layers_[i].bias);
    if (i + 1 < layers_.size()) {
      for (auto& v : z) v = std::tanh(v);
    }
    h = std::move(z);
  }
  return h;
}

LowRankAdapter LowRankAdapter::init(std::size_t dim, std::size_t rank, double alpha,
                                    double dropout_rate, Rng& rng) {
  if (rank == 0) throw ValidationError("LowRankAdapter: rank must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ValidationError("LowRankAdapter: dropout_rate must be in [0, 1)");
  Mat64 a(rank, dim);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& v : a.span()) v = stddev * rng.normal();
  return LowRankAdapter{std::move(a), Mat64(dim, rank), rank, alpha, dropout_rate};
}

DropoutMask draw_dropout_mask(std::size_t dim, double rate, Rng& rng) {
  DropoutMask mask;
  mask.multipliers.resize(dim);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask.multipliers) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

Vec64 forward_teacher(const TeacherEncoder& enc, const Vec64& x) { return enc.base.forward(x); }

StudentForward forward_student_with_mask(const StudentEncoder& enc, const Vec64& x,
                                         const std::optional<DropoutMask>& mask) {
  const auto& adapter = enc.adapter;
  StudentForward out;
  out.base = enc.base.forward(x);
  require_same_dim("forward_student adapter", adapter.a.cols(), out.base.dim());
  out.masked = out.base;
  if (mask) {
    require_same_dim("forward_student mask", mask->multipliers.size(), out.base.dim());
    for (std::size_t i = 0; i < out.masked.dim(); ++i) out.masked[i] *= mask->multipliers[i];
  }
  out.projected = matvec(adapter.a, out.masked);
  out.feature = out.base;
  axpy(adapter.scale(), matvec(adapter.b, out.projected), out.feature);
  out.mask = mask;
  return out;
}

StudentForward forward_student_cached(const StudentEncoder& enc, const Vec64& x, ForwardMode mode,
                                      Rng& rng) {
  std::optional<DropoutMask> mask;
  if (mode == ForwardMode::kTrain && enc.adapter.dropout_rate > 0.0) {
    mask = draw_dropout_mask(enc.adapter.a.cols(), enc.adapter.dropout_rate, rng);
  }
  return forward_student_with_mask(enc, x, mask);
}

Vec64 forward_student(const StudentEncoder& enc, const Vec64& x, ForwardMode mode, Rng& rng) {
  return forward_student_cached(enc, x, mode, rng).feature;
}

AdapterGrad vjp_adapter(const StudentEncoder& enc, const StudentForward& cache, const Vec64& v) {
  const auto& adapter = enc.adapter;
  require_same_dim("vjp_adapter", adapter.dim(), v.dim());
  const double s = adapter.scale();
  AdapterGrad grad{Mat64(adapter.a.rows(), adapter.a.cols()),
                   Mat64(adapter.b.rows(), adapter.b.cols())};
  // f = h + s * B * (A * h_drop)
  add_outer(grad.b, s, v, cache.projected);
  add_outer(grad.a, s, matvec_transposed(adapter.b, v), cache.masked);
  return grad;
}

AdapterGrad vjp_adapter(const StudentEncoder& enc, const Vec64& x, const Vec64& v,
                        const std::optional<DropoutMask>& mask, ForwardMode mode) {
  if (mode == ForwardMode::kTrain && enc.adapter.dropout_rate > 0.0 && !mask) {
    throw ValidationError("vjp_adapter: train mode requires the forward pass dropout mask");
  }
  const auto cache =
      forward_student_with_mask(enc, x, mode == ForwardMode::kTrain ? mask : std::nullopt);
  return vjp_adapter(enc, cache, v);
}

const Vec64& SemanticBranch::forward_text(const FeatureRecord& record) const {
  if (record.t_sem.empty()) {
    throw ValidationError("record '" + record.id + "' has no semantic feature");
  }
  require_same_dim("forward_text", dim_, record.t_sem.dim());
  return record.t_sem;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::span<const double> values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= kFnvPrime;
    }
  }
}

}  // namespace

std::uint64_t fingerprint(const MlpEncoder& enc) {
  std::uint64_t h = kFnvOffset;
  for (const auto& layer : enc.layers()) {
    fnv_mix(h, layer.weight.span());
    fnv_mix(h, layer.bias.span());
  }
  return h;
}

std::uint64_t fingerprint(const LinearHead& head) {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, head.w.span());
  const double b = head.b;
  fnv_mix(h, std::span<const double>(&b, 1));
  return h;
}

std::uint64_t fingerprint(const LowRankAdapter& adapter) {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, adapter.a.span());
  fnv_mix(h, adapter.b.span());
  return h;
}

}  // namespace gradsurgeon
