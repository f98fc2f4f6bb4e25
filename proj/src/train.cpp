#include "blockcs/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace blockcs {

namespace {

void clip_global_norm(std::vector<Tensor<float>>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor<float>& g : grads) {
    for (float v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const float scale = static_cast<float>(max_norm / norm);
  for (Tensor<float>& g : grads) {
    for (float& v : g.data) v *= scale;
  }
}

template <typename Model, typename InitFn, typename RestoreFn, typename BackwardFn,
          typename MakeCkptFn>
TrainResult train_impl(const TrainConfig& config, const Dataset& data, const Checkpoint* resume,
                       const ProgressFn& progress, const char* method, InitFn init,
                       RestoreFn restore, BackwardFn backward, MakeCkptFn make_ckpt) {
  config.validate();

  Model model;
  AdamState<float> adam;
  int64_t start_epoch = 0;
  int64_t step = 0;
  if (resume) {
    if (resume->method != method) {
      throw std::runtime_error("resume checkpoint trains method '" + resume->method +
                               "', this run wants '" + method + "'");
    }
    if (resume->config != config.model) {
      throw std::runtime_error("resume checkpoint was built for a different model config");
    }
    model = restore(*resume, &adam);
    start_epoch = resume->epoch;
    step = resume->step;
  } else {
    model = init(config.model, config.seed);
    std::vector<const Tensor<float>*> ptrs;
    for (const auto& [name, p] : std::as_const(model).params()) ptrs.push_back(p);
    adam = adam_init(ptrs);
  }

  BatchIterator batches(data, config.crop_size, config.batch_size, config.seed);
  const int64_t steps_per_epoch =
      config.steps_per_epoch > 0 ? config.steps_per_epoch : batches.batches_per_epoch();

  auto params = model.params();
  std::vector<Tensor<float>*> param_ptrs;
  param_ptrs.reserve(params.size());
  for (auto& [name, p] : params) param_ptrs.push_back(p);

  TrainResult result;
  result.loss_history.reserve(static_cast<size_t>(
      std::max<int64_t>(0, (config.epochs - start_epoch) * steps_per_epoch)));

  for (int64_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    batches.start_epoch(epoch);
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const Tensor<float> batch = batches.next_batch();
      ModelGrads<float> grads = backward(model, batch);
      ++step;
      if (!std::isfinite(grads.loss)) {
        std::ostringstream os;
        os << "training diverged: loss is not finite at step " << step;
        throw std::runtime_error(os.str());
      }
      if (config.clip_gradients) clip_global_norm(grads.grads, 10.0);
      std::vector<const Tensor<float>*> grad_ptrs;
      grad_ptrs.reserve(grads.grads.size());
      for (const Tensor<float>& g : grads.grads) grad_ptrs.push_back(&g);
      adam_step(param_ptrs, grad_ptrs, adam, config.lr);
      result.loss_history.emplace_back(step, grads.loss);
      if (progress && (config.log_every > 0 && step % config.log_every == 0)) {
        progress(step, epoch + 1, grads.loss);  // 1-based: the epoch being run
      }
    }
  }

  // a resume that is already past config.epochs must not roll the count back
  result.checkpoint =
      make_ckpt(model, adam, config.seed, std::max(start_epoch, config.epochs), step);
  if (!config.checkpoint_path.empty()) {
    save_checkpoint(result.checkpoint, config.checkpoint_path);
  }
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  std::ostringstream os;
  if (lr < 0) {
    os << "train config: learning rate " << lr << " must not be negative";
    throw std::invalid_argument(os.str());
  }
  if (epochs < 1) {
    os << "train config: epoch count " << epochs << " must be at least 1";
    throw std::invalid_argument(os.str());
  }
  if (batch_size < 1) {
    os << "train config: batch size " << batch_size << " must be at least 1";
    throw std::invalid_argument(os.str());
  }
  if (crop_size < 1 || crop_size % model.block != 0) {
    os << "train config: crop size " << crop_size << " must be a positive multiple of block size "
       << model.block;
    throw std::invalid_argument(os.str());
  }
  if (steps_per_epoch < 0) {
    os << "train config: steps per epoch " << steps_per_epoch << " must not be negative";
    throw std::invalid_argument(os.str());
  }
}

TrainResult train_full(const TrainConfig& config, const Dataset& data, const Checkpoint* resume,
                       const ProgressFn& progress) {
  return train_impl<FullModel<float>>(
      config, data, resume, progress, "full", init_full_model<float>, full_from_checkpoint,
      full_model_backward<float>,
      [](const FullModel<float>& m, const AdamState<float>& a, uint64_t seed, int64_t epoch,
         int64_t step) { return make_checkpoint(m, a, seed, epoch, step); });
}

TrainResult train_baseline(const TrainConfig& config, const Dataset& data,
                           const Checkpoint* resume, const ProgressFn& progress) {
  return train_impl<BaselineModel<float>>(
      config, data, resume, progress, "baseline", init_baseline_model<float>,
      baseline_from_checkpoint, baseline_model_backward<float>,
      [](const BaselineModel<float>& m, const AdamState<float>& a, uint64_t seed, int64_t epoch,
         int64_t step) { return make_checkpoint(m, a, seed, epoch, step); });
}

void write_loss_csv(const std::string& path,
                    const std::vector<std::pair<int64_t, double>>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "step,loss\n";
  out << std::setprecision(17);
  for (const auto& [step, loss] : history) out << step << "," << loss << "\n";
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace blockcs
