#include "gradsurgeon/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "gradsurgeon/encoders.hpp"
#include "gradsurgeon/grad_core.hpp"

namespace gradsurgeon {

namespace {

double rel_err(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

// Central differences of `fn` with respect to every entry of `params`.
std::vector<double> numeric_grad(std::span<double> params, const std::function<double()>& fn,
                                 double h) {
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = fn();
    params[i] = saved - h;
    const double down = fn();
    params[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

LinearHead random_head(Rng& rng, std::size_t d) {
  return LinearHead{gaussian_vec(rng, d, 0.0, 1.0 / std::sqrt(static_cast<double>(d))),
                    rng.normal() * 0.5, false};
}

}  // namespace

std::vector<GradcheckEntry> run_gradcheck(const GradcheckOptions& opts) {
  GradcheckEntry bce{"bce_with_logits_grad", 0, 0.0};
  GradcheckEntry feat{"feature_grad", 0, 0.0};
  GradcheckEntry head{"head_grad", 0, 0.0};
  GradcheckEntry vjp_a{"vjp_adapter.A", 0, 0.0};
  GradcheckEntry vjp_b{"vjp_adapter.B", 0, 0.0};
  const double h = opts.step;

  Rng rng = Rng(opts.seed).derive(31);
  for (std::size_t t = 0; t < opts.trials; ++t) {
    const std::size_t d = 1 + rng.uniform_index(opts.max_dim);
    const int label = static_cast<int>(rng.uniform_index(2));

    double z = 4.0 * rng.normal();
    const double analytic_bce = bce_with_logits_grad(z, label);
    const double numeric_bce = numeric_grad(std::span<double>(&z, 1),
                                            [&] { return bce_with_logits(z, label); }, h)[0];
    bce.max_rel_err = std::max(bce.max_rel_err, rel_err(std::span<const double>(&analytic_bce, 1),
                                                        std::span<const double>(&numeric_bce, 1)));
    ++bce.trials;

    LinearHead hd = random_head(rng, d);
    Vec64 f = gaussian_vec(rng, d, 0.0, 1.0);
    const Vec64 analytic_f = feature_grad(hd, f, label);
    const auto numeric_f =
        numeric_grad(f.span(), [&] { return bce_with_logits(head_forward(hd, f), label); }, h);
    feat.max_rel_err = std::max(feat.max_rel_err, rel_err(analytic_f.span(), numeric_f));
    ++feat.trials;

    const HeadGrad analytic_h = head_grad(hd, f, label);
    const auto loss = [&] { return bce_with_logits(head_forward(hd, f), label); };
    auto numeric_w = numeric_grad(hd.w.span(), loss, h);
    numeric_w.push_back(numeric_grad(std::span<double>(&hd.b, 1), loss, h)[0]);
    std::vector<double> analytic_wb(analytic_h.w.begin(), analytic_h.w.end());
    analytic_wb.push_back(analytic_h.b);
    head.max_rel_err = std::max(head.max_rel_err, rel_err(analytic_wb, numeric_w));
    ++head.trials;

    // Adapter VJP through a random tanh base with a fixed dropout mask.
    const std::size_t rank = 1 + rng.uniform_index(std::min<std::size_t>(d, 6));
    StudentEncoder enc;
    enc.base = MlpEncoder::random_tanh({d, d, d}, 1.0, rng);
    enc.adapter = LowRankAdapter::init(d, rank, 1.0 + 4.0 * rng.uniform(), 0.5, rng);
    enc.adapter.b = Mat64(d, rank, gaussian_vec(rng, d * rank, 0.0, 0.3).values());
    const Vec64 x = gaussian_vec(rng, d, 0.0, 1.0);
    const Vec64 v = gaussian_vec(rng, d, 0.0, 1.0);
    const DropoutMask mask = draw_dropout_mask(d, enc.adapter.dropout_rate, rng);
    const AdapterGrad g = vjp_adapter(enc, x, v, mask, ForwardMode::kTrain);
    const auto inner = [&] { return dot(forward_student_with_mask(enc, x, mask).feature, v); };
    vjp_a.max_rel_err =
        std::max(vjp_a.max_rel_err, rel_err(g.a.span(), numeric_grad(enc.adapter.a.span(), inner, h)));
    vjp_b.max_rel_err =
        std::max(vjp_b.max_rel_err, rel_err(g.b.span(), numeric_grad(enc.adapter.b.span(), inner, h)));
    ++vjp_a.trials;
    ++vjp_b.trials;
  }
  return {bce, feat, head, vjp_a, vjp_b};
}

}  // namespace gradsurgeon
