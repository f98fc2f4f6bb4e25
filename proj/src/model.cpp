#include "blockcs/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "blockcs/rng.hpp"

namespace blockcs {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

ConvSpec conv3x3(int64_t in, int64_t out) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = 3;
  s.pad_h = s.pad_w = 1;
  s.has_bias = true;
  return s;
}

// kernel == stride == block, no padding, no bias: the blockwise operators.
ConvSpec blockwise(int64_t in, int64_t out, int64_t block) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = block;
  s.stride_h = s.stride_w = block;
  s.has_bias = false;
  return s;
}

double he_bound(int64_t fan_in) {
  return std::sqrt(3.0) * std::sqrt(2.0 / static_cast<double>(fan_in));
}

template <typename T>
void fill_uniform(Tensor<T>& w, double bound, Xoshiro256& rng) {
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
std::span<const T> slope_span(const Tensor<T>& slope) {
  return std::span<const T>(slope.data.data(), slope.data.size());
}

template <typename T>
Tensor<T> slope_grad_tensor(const std::vector<T>& g) {
  Tensor<T> t(1, static_cast<int64_t>(g.size()), 1, 1);
  std::copy(g.begin(), g.end(), t.data.begin());
  return t;
}

// out = x + bias tile repeated over every B x B block.
template <typename T>
Tensor<T> add_block_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const int64_t B = bias.height();
  const int64_t H = x.height();
  const int64_t W = x.width();
  Tensor<T> out = x;
  const T* tile = bias.plane(0, 0);
  for (int64_t n = 0; n < x.batch(); ++n) {
    T* p = out.plane(n, 0);
    for (int64_t y = 0; y < H; ++y) {
      const T* brow = tile + (y % B) * B;
      T* row = p + y * W;
      for (int64_t xx = 0; xx < W; ++xx) row[xx] += brow[xx % B];
    }
  }
  return out;
}

template <typename T>
Tensor<T> block_bias_grad(const Tensor<T>& grad_output, int64_t B) {
  Tensor<T> g(1, 1, B, B);
  T* tile = g.plane(0, 0);
  const int64_t H = grad_output.height();
  const int64_t W = grad_output.width();
  for (int64_t n = 0; n < grad_output.batch(); ++n) {
    const T* p = grad_output.plane(n, 0);
    for (int64_t y = 0; y < H; ++y) {
      T* brow = tile + (y % B) * B;
      const T* row = p + y * W;
      for (int64_t xx = 0; xx < W; ++xx) brow[xx % B] += row[xx];
    }
  }
  return g;
}

template <typename T>
void check_measurement_channels(const char* op, const Tensor<T>& measurements, int64_t m) {
  if (measurements.channels() != m) {
    std::ostringstream os;
    os << op << ": measurements have " << measurements.channels() << " channels, model expects "
       << m;
    fail(os.str());
  }
}

}  // namespace

int64_t ModelConfig::measurements() const {
  return std::max<int64_t>(1, std::llround(rate * static_cast<double>(block * block)));
}

void ModelConfig::validate() const {
  std::ostringstream os;
  if (block < 2) {
    os << "model config: block size " << block << " must be at least 2";
    fail(os.str());
  }
  if (channels < 1) {
    os << "model config: lift channels " << channels << " must be at least 1";
    fail(os.str());
  }
  if (res_blocks < 1) {
    os << "model config: residual block count " << res_blocks << " must be at least 1";
    fail(os.str());
  }
  if (!(rate > 0.0) || rate > 1.0) {
    os << "model config: measurement rate " << rate << " must be in (0, 1]";
    fail(os.str());
  }
}

template <typename T>
ConvSpec MeasurementOp<T>::spec() const {
  return blockwise(1, weight.batch(), block);
}

template <typename T>
Tensor<T> MeasurementOp<T>::apply(const Tensor<T>& image) const {
  std::ostringstream os;
  if (image.channels() != 1) {
    os << "measure: image has " << image.channels() << " channels, expected 1";
    fail(os.str());
  }
  if (image.height() % block != 0) {
    os << "measure: image height " << image.height() << " is not divisible by block size "
       << block;
    fail(os.str());
  }
  if (image.width() % block != 0) {
    os << "measure: image width " << image.width() << " is not divisible by block size " << block;
    fail(os.str());
  }
  return conv2d_forward(image, weight, nullptr, spec());
}

template <typename T>
Tensor<T> ReconstructionNet<T>::forward(const Tensor<T>& measurements) const {
  const int64_t c = config.channels;
  check_measurement_channels("reconstruct", measurements, initial_weight.batch());
  Tensor<T> x = convtranspose2d_forward(measurements, initial_weight, nullptr,
                                        blockwise(initial_weight.batch(), 1, config.block));
  x = conv2d_forward(x, lift.weight, &lift.bias, conv3x3(1, c));
  x = prelu_forward(x, slope_span(lift_slope));
  for (const ResBlockParams<T>& b : blocks) {
    Tensor<T> u = conv2d_forward(x, b.conv1.weight, &b.conv1.bias, conv3x3(c, c));
    u = prelu_forward(u, slope_span(b.slope));
    u = conv2d_forward(u, b.conv2.weight, &b.conv2.bias, conv3x3(c, c));
    x = add(x, u);
  }
  return conv2d_forward(x, head.weight, &head.bias, conv3x3(c, 1));
}

template <typename T>
ReconTrace<T> ReconstructionNet<T>::forward_trace(const Tensor<T>& measurements) const {
  const int64_t c = config.channels;
  const int64_t K = config.res_blocks;
  check_measurement_channels("reconstruct", measurements, initial_weight.batch());
  ReconTrace<T> tr;
  tr.initial_out = convtranspose2d_forward(measurements, initial_weight, nullptr,
                                           blockwise(initial_weight.batch(), 1, config.block));
  tr.lift_pre = conv2d_forward(tr.initial_out, lift.weight, &lift.bias, conv3x3(1, c));
  tr.trunk.reserve(static_cast<size_t>(K) + 1);
  tr.mid_pre.reserve(static_cast<size_t>(K));
  tr.mid_act.reserve(static_cast<size_t>(K));
  tr.trunk.push_back(prelu_forward(tr.lift_pre, slope_span(lift_slope)));
  for (int64_t i = 0; i < K; ++i) {
    const ResBlockParams<T>& b = blocks[static_cast<size_t>(i)];
    tr.mid_pre.push_back(
        conv2d_forward(tr.trunk.back(), b.conv1.weight, &b.conv1.bias, conv3x3(c, c)));
    tr.mid_act.push_back(prelu_forward(tr.mid_pre.back(), slope_span(b.slope)));
    Tensor<T> v = conv2d_forward(tr.mid_act.back(), b.conv2.weight, &b.conv2.bias, conv3x3(c, c));
    tr.trunk.push_back(add(tr.trunk.back(), v));
  }
  tr.output = conv2d_forward(tr.trunk.back(), head.weight, &head.bias, conv3x3(c, 1));
  return tr;
}

template <typename T>
Tensor<T> BaselineNet<T>::forward(const Tensor<T>& measurements) const {
  check_measurement_channels("reconstruct", measurements, weight.batch());
  Tensor<T> lin = convtranspose2d_forward(measurements, weight, nullptr,
                                          blockwise(weight.batch(), 1, config.block));
  return add_block_bias(lin, bias);
}

template <typename T>
Tensor<T> FullModel<T>::reconstruct(const Tensor<T>& image) const {
  return recon.forward(sensor.apply(image));
}

template <typename T>
Tensor<T> BaselineModel<T>::reconstruct(const Tensor<T>& image) const {
  return net.forward(sensor.apply(image));
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> FullModel<T>::params() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  out.emplace_back("measure.weight", &sensor.weight);
  out.emplace_back("recon.initial.weight", &recon.initial_weight);
  out.emplace_back("recon.lift.weight", &recon.lift.weight);
  out.emplace_back("recon.lift.bias", &recon.lift.bias);
  out.emplace_back("recon.lift.slope", &recon.lift_slope);
  for (size_t i = 0; i < recon.blocks.size(); ++i) {
    const std::string p = "recon.block" + std::to_string(i) + ".";
    ResBlockParams<T>& b = recon.blocks[i];
    out.emplace_back(p + "conv1.weight", &b.conv1.weight);
    out.emplace_back(p + "conv1.bias", &b.conv1.bias);
    out.emplace_back(p + "slope", &b.slope);
    out.emplace_back(p + "conv2.weight", &b.conv2.weight);
    out.emplace_back(p + "conv2.bias", &b.conv2.bias);
  }
  out.emplace_back("recon.head.weight", &recon.head.weight);
  out.emplace_back("recon.head.bias", &recon.head.bias);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> FullModel<T>::params() const {
  auto mut = const_cast<FullModel<T>*>(this)->params();
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  out.reserve(mut.size());
  for (auto& [name, p] : mut) out.emplace_back(std::move(name), p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> BaselineModel<T>::params() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  out.emplace_back("measure.weight", &sensor.weight);
  out.emplace_back("baseline.weight", &net.weight);
  out.emplace_back("baseline.bias", &net.bias);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> BaselineModel<T>::params() const {
  auto mut = const_cast<BaselineModel<T>*>(this)->params();
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  out.reserve(mut.size());
  for (auto& [name, p] : mut) out.emplace_back(std::move(name), p);
  return out;
}

template <typename T>
FullModel<T> init_full_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  const int64_t B = config.block;
  const int64_t M = config.measurements();
  const int64_t c = config.channels;
  const int64_t K = config.res_blocks;

  FullModel<T> m;
  m.config = config;
  m.sensor.block = B;
  m.sensor.weight = Tensor<T>(M, 1, B, B);
  m.recon.config = config;
  m.recon.initial_weight = Tensor<T>(M, 1, B, B);
  m.recon.lift.weight = Tensor<T>(c, 1, 3, 3);
  m.recon.lift.bias = Tensor<T>(1, c, 1, 1);
  m.recon.lift_slope = Tensor<T>(1, c, 1, 1, T(0.25));
  m.recon.blocks.resize(static_cast<size_t>(K));
  for (ResBlockParams<T>& b : m.recon.blocks) {
    b.conv1.weight = Tensor<T>(c, c, 3, 3);
    b.conv1.bias = Tensor<T>(1, c, 1, 1);
    b.slope = Tensor<T>(1, c, 1, 1, T(0.25));
    b.conv2.weight = Tensor<T>(c, c, 3, 3);
    b.conv2.bias = Tensor<T>(1, c, 1, 1);
  }
  m.recon.head.weight = Tensor<T>(1, c, 3, 3);
  m.recon.head.bias = Tensor<T>(1, 1, 1, 1);

  // Weights drawn in params() order; biases and slopes consume no randomness.
  Xoshiro256 rng(seed);
  fill_uniform(m.sensor.weight, he_bound(B * B), rng);
  // kernel == stride: each output pixel receives one tap per input channel.
  fill_uniform(m.recon.initial_weight, he_bound(M), rng);
  fill_uniform(m.recon.lift.weight, he_bound(9), rng);
  for (ResBlockParams<T>& b : m.recon.blocks) {
    fill_uniform(b.conv1.weight, he_bound(9 * c), rng);
    fill_uniform(b.conv2.weight, he_bound(9 * c), rng);
  }
  fill_uniform(m.recon.head.weight, he_bound(9 * c), rng);
  return m;
}

template <typename T>
BaselineModel<T> init_baseline_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  const int64_t B = config.block;
  const int64_t M = config.measurements();

  BaselineModel<T> m;
  m.config = config;
  m.sensor.block = B;
  m.sensor.weight = Tensor<T>(M, 1, B, B);
  m.net.config = config;
  m.net.weight = Tensor<T>(M, 1, B, B);
  m.net.bias = Tensor<T>(1, 1, B, B);

  Xoshiro256 rng(seed);
  fill_uniform(m.sensor.weight, he_bound(B * B), rng);
  fill_uniform(m.net.weight, he_bound(M), rng);
  return m;
}

template <typename T>
ModelGrads<T> full_model_backward(const FullModel<T>& model, const Tensor<T>& batch) {
  const ModelConfig& cfg = model.config;
  const int64_t c = cfg.channels;
  const int64_t K = cfg.res_blocks;
  const int64_t M = cfg.measurements();
  const ConvSpec mspec = model.sensor.spec();
  const ConvSpec tspec = blockwise(M, 1, cfg.block);
  const ConvSpec liftspec = conv3x3(1, c);
  const ConvSpec blockspec = conv3x3(c, c);
  const ConvSpec headspec = conv3x3(c, 1);

  Tensor<T> meas = model.sensor.apply(batch);
  ReconTrace<T> tr = model.recon.forward_trace(meas);
  MseResult<T> mse = mse_loss(tr.output, batch);

  ConvGrads<T> hg = conv2d_backward(tr.trunk[static_cast<size_t>(K)], model.recon.head.weight,
                                    headspec, mse.grad_pred);
  Tensor<T> go = std::move(hg.input);

  std::vector<ConvGrads<T>> g1(static_cast<size_t>(K));
  std::vector<ConvGrads<T>> g2(static_cast<size_t>(K));
  std::vector<Tensor<T>> gslope(static_cast<size_t>(K));
  for (int64_t i = K - 1; i >= 0; --i) {
    const ResBlockParams<T>& b = model.recon.blocks[static_cast<size_t>(i)];
    ConvGrads<T> c2 =
        conv2d_backward(tr.mid_act[static_cast<size_t>(i)], b.conv2.weight, blockspec, go);
    PreluGrads<T> pg =
        prelu_backward(tr.mid_pre[static_cast<size_t>(i)], slope_span(b.slope), c2.input);
    ConvGrads<T> c1 =
        conv2d_backward(tr.trunk[static_cast<size_t>(i)], b.conv1.weight, blockspec, pg.input);
    gslope[static_cast<size_t>(i)] = slope_grad_tensor(pg.slope);
    go = add(c1.input, go);  // identity skip joins the two paths
    g1[static_cast<size_t>(i)] = std::move(c1);
    g2[static_cast<size_t>(i)] = std::move(c2);
  }

  PreluGrads<T> lp = prelu_backward(tr.lift_pre, slope_span(model.recon.lift_slope), go);
  ConvGrads<T> lg = conv2d_backward(tr.initial_out, model.recon.lift.weight, liftspec, lp.input);
  ConvGrads<T> ig = convtranspose2d_backward(meas, model.recon.initial_weight, tspec, lg.input);
  ConvGrads<T> mg = conv2d_backward(batch, model.sensor.weight, mspec, ig.input);

  ModelGrads<T> out;
  out.loss = mse.loss;
  out.grads.reserve(7 + 5 * static_cast<size_t>(K));
  out.grads.push_back(std::move(mg.weights));
  out.grads.push_back(std::move(ig.weights));
  out.grads.push_back(std::move(lg.weights));
  out.grads.push_back(std::move(lg.bias));
  out.grads.push_back(slope_grad_tensor(lp.slope));
  for (int64_t i = 0; i < K; ++i) {
    out.grads.push_back(std::move(g1[static_cast<size_t>(i)].weights));
    out.grads.push_back(std::move(g1[static_cast<size_t>(i)].bias));
    out.grads.push_back(std::move(gslope[static_cast<size_t>(i)]));
    out.grads.push_back(std::move(g2[static_cast<size_t>(i)].weights));
    out.grads.push_back(std::move(g2[static_cast<size_t>(i)].bias));
  }
  out.grads.push_back(std::move(hg.weights));
  out.grads.push_back(std::move(hg.bias));
  return out;
}

template <typename T>
ModelGrads<T> baseline_model_backward(const BaselineModel<T>& model, const Tensor<T>& batch) {
  const ModelConfig& cfg = model.config;
  const int64_t M = cfg.measurements();
  const ConvSpec mspec = model.sensor.spec();
  const ConvSpec tspec = blockwise(M, 1, cfg.block);

  Tensor<T> meas = model.sensor.apply(batch);
  Tensor<T> lin = convtranspose2d_forward(meas, model.net.weight, nullptr, tspec);
  Tensor<T> pred = add_block_bias(lin, model.net.bias);
  MseResult<T> mse = mse_loss(pred, batch);

  Tensor<T> gbias = block_bias_grad(mse.grad_pred, cfg.block);
  ConvGrads<T> tg = convtranspose2d_backward(meas, model.net.weight, tspec, mse.grad_pred);
  ConvGrads<T> mg = conv2d_backward(batch, model.sensor.weight, mspec, tg.input);

  ModelGrads<T> out;
  out.loss = mse.loss;
  out.grads.push_back(std::move(mg.weights));
  out.grads.push_back(std::move(tg.weights));
  out.grads.push_back(std::move(gbias));
  return out;
}

#define BLOCKCS_INSTANTIATE_MODEL(T)                                                      \
  template struct MeasurementOp<T>;                                                      \
  template struct ReconstructionNet<T>;                                                  \
  template struct BaselineNet<T>;                                                        \
  template struct FullModel<T>;                                                          \
  template struct BaselineModel<T>;                                                      \
  template FullModel<T> init_full_model<T>(const ModelConfig&, uint64_t);                \
  template BaselineModel<T> init_baseline_model<T>(const ModelConfig&, uint64_t);        \
  template ModelGrads<T> full_model_backward<T>(const FullModel<T>&, const Tensor<T>&);  \
  template ModelGrads<T> baseline_model_backward<T>(const BaselineModel<T>&,             \
                                                    const Tensor<T>&);

BLOCKCS_INSTANTIATE_MODEL(float)
BLOCKCS_INSTANTIATE_MODEL(double)

#undef BLOCKCS_INSTANTIATE_MODEL

}  // namespace blockcs
