#include "blockcs/gradcheck.hpp"

#include <cmath>
#include <cstdint>

#include "blockcs/kernels.hpp"
#include "blockcs/model.hpp"
#include "blockcs/rng.hpp"

namespace blockcs {

namespace {

constexpr double kStep = 1e-5;
constexpr double kKernelTol = 1e-6;
constexpr double kModelTol = 1e-5;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double worst_rel_err(const Tensor<double>& analytic, const Tensor<double>& numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.data.size(); ++i) {
    worst = std::max(worst, rel_err(analytic.data[i], numeric.data[i]));
  }
  return worst;
}

void fill(Tensor<double>& t, Xoshiro256& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data) v = rng.uniform(lo, hi);
}

// Values bounded away from zero, so finite differences never step across the
// PReLU kink.
void fill_off_kink(Tensor<double>& t, Xoshiro256& rng) {
  for (auto& v : t.data) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.next() & 1 ? mag : -mag;
  }
}

int64_t draw(Xoshiro256& rng, int64_t lo, int64_t hi) {
  return lo + static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(hi - lo + 1)));
}

// Worst error of d/dx sum(co_weights * f(x)) over every differentiable input
// of a convolution, across random geometries.
double conv2d_cases(Xoshiro256& rng, int cases) {
  double worst = 0.0;
  for (int it = 0; it < cases; ++it) {
    ConvSpec s;
    s.in_channels = draw(rng, 1, 3);
    s.out_channels = draw(rng, 1, 3);
    s.kernel_h = draw(rng, 1, 3);
    s.kernel_w = draw(rng, 1, 3);
    s.stride_h = draw(rng, 1, 2);
    s.stride_w = draw(rng, 1, 2);
    s.pad_h = draw(rng, 0, 1);
    s.pad_w = draw(rng, 0, 1);
    s.has_bias = (it % 2) == 0;
    const int64_t n = draw(rng, 1, 2);
    const int64_t min_h = std::max<int64_t>(1, s.kernel_h - 2 * s.pad_h);
    const int64_t min_w = std::max<int64_t>(1, s.kernel_w - 2 * s.pad_w);
    const int64_t in_h = draw(rng, min_h, min_h + 3);
    const int64_t in_w = draw(rng, min_w, min_w + 3);

    Tensor<double> input(n, s.in_channels, in_h, in_w);
    Tensor<double> weights(s.out_channels, s.in_channels, s.kernel_h, s.kernel_w);
    Tensor<double> bias(1, s.out_channels, 1, 1);
    fill(input, rng);
    fill(weights, rng);
    fill(bias, rng);
    Tensor<double> co(n, s.out_channels, s.conv_out_h(in_h), s.conv_out_w(in_w));
    fill(co, rng);

    auto objective = [&](const Tensor<double>& in, const Tensor<double>& w,
                         const Tensor<double>& b) {
      const Tensor<double> out = conv2d_forward(in, w, s.has_bias ? &b : nullptr, s);
      double acc = 0.0;
      for (size_t i = 0; i < out.data.size(); ++i) acc += co.data[i] * out.data[i];
      return acc;
    };

    const ConvGrads<double> g = conv2d_backward(input, weights, s, co);
    worst = std::max(worst, worst_rel_err(g.input, finite_difference_grad<double>(
                                                       [&](const Tensor<double>& x) {
                                                         return objective(x, weights, bias);
                                                       },
                                                       input, kStep)));
    worst = std::max(worst, worst_rel_err(g.weights, finite_difference_grad<double>(
                                                         [&](const Tensor<double>& x) {
                                                           return objective(input, x, bias);
                                                         },
                                                         weights, kStep)));
    if (s.has_bias) {
      worst = std::max(worst, worst_rel_err(g.bias, finite_difference_grad<double>(
                                                        [&](const Tensor<double>& x) {
                                                          return objective(input, weights, x);
                                                        },
                                                        bias, kStep)));
    }
  }
  return worst;
}

double convtranspose2d_cases(Xoshiro256& rng, int cases) {
  double worst = 0.0;
  for (int it = 0; it < cases; ++it) {
    ConvSpec s;
    s.in_channels = draw(rng, 1, 3);
    s.out_channels = draw(rng, 1, 3);
    s.kernel_h = draw(rng, 1, 3);
    s.kernel_w = draw(rng, 1, 3);
    s.stride_h = draw(rng, 1, 3);
    s.stride_w = draw(rng, 1, 3);
    s.has_bias = (it % 2) == 0;
    const int64_t n = draw(rng, 1, 2);
    const int64_t in_h = draw(rng, 1, 4);
    const int64_t in_w = draw(rng, 1, 4);

    Tensor<double> input(n, s.in_channels, in_h, in_w);
    Tensor<double> weights(s.in_channels, s.out_channels, s.kernel_h, s.kernel_w);
    Tensor<double> bias(1, s.out_channels, 1, 1);
    fill(input, rng);
    fill(weights, rng);
    fill(bias, rng);
    Tensor<double> co(n, s.out_channels, s.tconv_out_h(in_h), s.tconv_out_w(in_w));
    fill(co, rng);

    auto objective = [&](const Tensor<double>& in, const Tensor<double>& w,
                         const Tensor<double>& b) {
      const Tensor<double> out = convtranspose2d_forward(in, w, s.has_bias ? &b : nullptr, s);
      double acc = 0.0;
      for (size_t i = 0; i < out.data.size(); ++i) acc += co.data[i] * out.data[i];
      return acc;
    };

    const ConvGrads<double> g = convtranspose2d_backward(input, weights, s, co);
    worst = std::max(worst, worst_rel_err(g.input, finite_difference_grad<double>(
                                                       [&](const Tensor<double>& x) {
                                                         return objective(x, weights, bias);
                                                       },
                                                       input, kStep)));
    worst = std::max(worst, worst_rel_err(g.weights, finite_difference_grad<double>(
                                                         [&](const Tensor<double>& x) {
                                                           return objective(input, x, bias);
                                                         },
                                                         weights, kStep)));
    if (s.has_bias) {
      worst = std::max(worst, worst_rel_err(g.bias, finite_difference_grad<double>(
                                                        [&](const Tensor<double>& x) {
                                                          return objective(input, weights, x);
                                                        },
                                                        bias, kStep)));
    }
  }
  return worst;
}

double prelu_cases(Xoshiro256& rng, int cases) {
  double worst = 0.0;
  for (int it = 0; it < cases; ++it) {
    const int64_t n = draw(rng, 1, 2);
    const int64_t c = draw(rng, 1, 4);
    const int64_t h = draw(rng, 1, 5);
    const int64_t w = draw(rng, 1, 5);
    Tensor<double> input(n, c, h, w);
    fill_off_kink(input, rng);
    std::vector<double> slope(static_cast<size_t>(c));
    for (auto& v : slope) v = rng.uniform(-0.5, 0.5);
    Tensor<double> co(n, c, h, w);
    fill(co, rng);

    auto objective_input = [&](const Tensor<double>& x) {
      const Tensor<double> out = prelu_forward(x, std::span<const double>(slope));
      double acc = 0.0;
      for (size_t i = 0; i < out.data.size(); ++i) acc += co.data[i] * out.data[i];
      return acc;
    };
    // Slopes ride through a tensor so the shared finite-difference driver
    // applies; only the first c entries are meaningful.
    auto objective_slope = [&](const Tensor<double>& sl) {
      std::vector<double> sv(sl.data.begin(), sl.data.end());
      const Tensor<double> out = prelu_forward(input, std::span<const double>(sv));
      double acc = 0.0;
      for (size_t i = 0; i < out.data.size(); ++i) acc += co.data[i] * out.data[i];
      return acc;
    };

    const PreluGrads<double> g = prelu_backward(input, std::span<const double>(slope), co);
    worst = std::max(worst, worst_rel_err(g.input, finite_difference_grad<double>(
                                                       objective_input, input, kStep)));
    Tensor<double> slope_t(1, c, 1, 1);
    std::copy(slope.begin(), slope.end(), slope_t.data.begin());
    const Tensor<double> fd_slope =
        finite_difference_grad<double>(objective_slope, slope_t, kStep);
    for (int64_t i = 0; i < c; ++i) {
      worst = std::max(worst, rel_err(g.slope[static_cast<size_t>(i)],
                                      fd_slope.data[static_cast<size_t>(i)]));
    }
  }
  return worst;
}

double mse_cases(Xoshiro256& rng, int cases) {
  double worst = 0.0;
  for (int it = 0; it < cases; ++it) {
    const int64_t n = draw(rng, 1, 3);
    const int64_t c = draw(rng, 1, 2);
    const int64_t h = draw(rng, 1, 5);
    const int64_t w = draw(rng, 1, 5);
    Tensor<double> pred(n, c, h, w);
    Tensor<double> target(n, c, h, w);
    fill(pred, rng);
    fill(target, rng);
    const MseResult<double> r = mse_loss(pred, target);
    const Tensor<double> fd = finite_difference_grad<double>(
        [&](const Tensor<double>& x) { return mse_loss(x, target).loss; }, pred, kStep);
    worst = std::max(worst, worst_rel_err(r.grad_pred, fd));
  }
  return worst;
}

// End to end on the tiny config: loss(model(batch), batch) differentiated
// with respect to every parameter tensor.
template <typename Model, typename BackwardFn, typename LossFn>
double model_case(Model& model, const Tensor<double>& batch, BackwardFn backward, LossFn loss_of) {
  const ModelGrads<double> g = backward(model, batch);
  auto params = model.params();
  double worst = 0.0;
  for (size_t j = 0; j < params.size(); ++j) {
    Tensor<double>* p = params[j].second;
    const Tensor<double> saved = *p;
    const Tensor<double> fd = finite_difference_grad<double>(
        [&](const Tensor<double>& x) {
          *p = x;
          const double l = loss_of(model);
          return l;
        },
        saved, kStep);
    *p = saved;
    worst = std::max(worst, worst_rel_err(g.grads[j], fd));
  }
  return worst;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.block = 4;
  cfg.rate = 0.125;  // M = round(0.125 * 16) = 2
  cfg.channels = 4;
  cfg.res_blocks = 1;
  return cfg;
}

double full_model_case(Xoshiro256& rng) {
  FullModel<double> model = init_full_model<double>(tiny_config(), 7);
  Tensor<double> batch(1, 1, 8, 8);
  fill(batch, rng);
  return model_case(model, batch, full_model_backward<double>, [&](const FullModel<double>& m) {
    return mse_loss(m.reconstruct(batch), batch).loss;
  });
}

double baseline_model_case(Xoshiro256& rng) {
  BaselineModel<double> model = init_baseline_model<double>(tiny_config(), 7);
  Tensor<double> batch(1, 1, 8, 8);
  fill(batch, rng);
  return model_case(model, batch, baseline_model_backward<double>,
                    [&](const BaselineModel<double>& m) {
                      return mse_loss(m.reconstruct(batch), batch).loss;
                    });
}

}  // namespace

bool GradcheckSummary::all_passed() const {
  for (const GradcheckResult& r : results) {
    if (!r.passed) return false;
  }
  return !results.empty();
}

GradcheckSummary run_gradcheck_suite(double tolerance_override) {
  Xoshiro256 rng(20240501);
  GradcheckSummary summary;
  auto record = [&](const std::string& op, double err, double default_tol) {
    const double tol = tolerance_override < 0 ? default_tol : tolerance_override;
    summary.results.push_back(GradcheckResult{op, err, tol, err <= tol});
  };
  record("conv2d", conv2d_cases(rng, 50), kKernelTol);
  record("convtranspose2d", convtranspose2d_cases(rng, 50), kKernelTol);
  record("prelu", prelu_cases(rng, 50), kKernelTol);
  record("mse", mse_cases(rng, 50), kKernelTol);
  record("model.full", full_model_case(rng), kModelTol);
  record("model.baseline", baseline_model_case(rng), kModelTol);
  return summary;
}

}  // namespace blockcs
