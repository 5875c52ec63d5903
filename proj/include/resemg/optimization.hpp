#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "resemg/model.hpp"
#include "resemg/signal.hpp"

namespace resemg {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  double lr_decay_factor = 10.0;
  std::size_t lr_plateau_patience = 3;
  double min_lr = 1e-10;
  std::size_t early_stop_patience = 8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-7;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Validation loss must drop by more than this to count as an improvement.
inline constexpr double kImprovementTolerance = 1e-8;

template <typename Scalar>
struct CrossEntropy {
  double loss = 0.0;
  BasicTensor<Scalar> grad_logits;  // probs - onehot(target)
};

/// loss = -ln(max(probs[target], 1e-12)); the gradient is taken w.r.t. the
/// pre-softmax logits.
template <typename Scalar>
CrossEntropy<Scalar> cross_entropy(const BasicTensor<Scalar>& probs, std::size_t target);

// ---------------------------------------------------------------- Adam

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

struct AdamState {
  ModelParams<float> m;
  ModelParams<float> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams<float>& params);
};

/// One bias-corrected Adam update of a flat parameter block at step `step`
/// (1-based). Moments are updated in place.
void adam_update(std::span<float> theta, std::span<const float> grad, std::span<float> m,
                 std::span<float> v, std::uint64_t step, double lr, const AdamHyper& hyper);

void adam_step(ModelParams<float>& params, const ModelParams<float>& grads, AdamState& state,
               double lr, const AdamHyper& hyper);

// ---------------------------------------------------------------- schedule

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;  // rate in effect during the epoch

  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  /// Newline-delimited JSON, one record per epoch.
  std::string to_ndjson() const;
  static TrainLog from_ndjson(const std::string& text);

  bool operator==(const TrainLog&) const = default;
};

/// Divides the rate by lr_decay_factor after lr_plateau_patience epochs
/// without improvement, floored at min_lr. The counter resets after a decay.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(const TrainConfig& cfg);

  /// Feeds one epoch's validation loss; returns the rate for the next epoch.
  double step(double val_loss);
  double lr() const { return lr_; }
  std::size_t decays() const { return decays_; }

 private:
  double initial_;
  double factor_;
  double min_lr_;
  std::size_t patience_;
  double lr_;
  double best_;
  std::size_t bad_epochs_ = 0;
  std::size_t decays_ = 0;
};

class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Feeds one epoch's validation loss; true means stop now.
  bool step(double val_loss);
  std::size_t bad_epochs() const { return bad_epochs_; }

 private:
  std::size_t patience_;
  double best_ = 0.0;
  bool seen_ = false;
  std::size_t bad_epochs_ = 0;
};

/// Rate for the epoch after the last one in `log`, replaying its val losses.
double plateau_scheduler(const TrainLog& log, const TrainConfig& cfg);
/// Whether training should have stopped after the last epoch in `log`.
bool early_stop(const TrainLog& log, const TrainConfig& cfg);

// ---------------------------------------------------------------- training

struct BatchGradient {
  ModelParams<float> grads;  // mean over the batch
  double loss = 0.0;         // mean over the batch
};

BatchGradient batch_gradient(const ModelParams<float>& params,
                             std::span<const WindowRecord> records,
                             std::span<const std::size_t> indices);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> predictions;
  std::vector<std::vector<float>> probabilities;
};

Evaluation evaluate(const ModelParams<float>& params, std::span<const WindowRecord> records);

struct TrainResult {
  ModelParams<float> params;  // weights from the best validation epoch
  TrainLog log;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const ModelConfig& model_cfg, std::span<const WindowRecord> train_set,
                  std::span<const WindowRecord> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace resemg
