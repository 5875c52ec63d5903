#include "resemg/optimization.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "resemg/random.hpp"

namespace resemg {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw UsageError("learning_rate must be positive");
  if (!(min_lr > 0) || min_lr > learning_rate) {
    throw UsageError("min_lr must be positive and not exceed learning_rate");
  }
  if (epochs == 0) throw UsageError("epochs must be at least 1");
  if (batch_size == 0) throw UsageError("batch_size must be at least 1");
  if (!(lr_decay_factor > 1)) throw UsageError("lr_decay_factor must exceed 1");
  if (lr_plateau_patience == 0 || early_stop_patience == 0) {
    throw UsageError("patience values must be positive");
  }
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw UsageError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0)) throw UsageError("adam_epsilon must be positive");
}

template <typename Scalar>
CrossEntropy<Scalar> cross_entropy(const BasicTensor<Scalar>& probs, std::size_t target) {
  if (probs.rank() != 1) throw DimensionError("cross_entropy: probabilities must be rank 1");
  if (target >= probs.size()) {
    throw UsageError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  const double p = std::max(static_cast<double>(probs[target]), 1e-12);
  auto grad = probs;
  grad[target] -= Scalar{1};
  return {-std::log(p), std::move(grad)};
}

template CrossEntropy<float> cross_entropy<float>(const Tensor&, std::size_t);
template CrossEntropy<double> cross_entropy<double>(const Tensor64&, std::size_t);

// ---------------------------------------------------------------- Adam

AdamState AdamState::zeros_like(const ModelParams<float>& params) {
  auto zero = params;
  zero.for_each([](std::string_view, Tensor& t) { t.fill(0.0f); });
  return {zero, zero, 0};
}

void adam_update(std::span<float> theta, std::span<const float> grad, std::span<float> m,
                 std::span<float> v, std::uint64_t step, double lr, const AdamHyper& hyper) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    throw DimensionError("adam_update: parameter, gradient and moment sizes differ");
  }
  if (step == 0) throw UsageError("adam_update: step counter is 1-based");
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double m_hat = mi / c1;
    const double v_hat = vi / c2;
    theta[i] = static_cast<float>(theta[i] - lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon));
  }
}

void adam_step(ModelParams<float>& params, const ModelParams<float>& grads, AdamState& state,
               double lr, const AdamHyper& hyper) {
  std::vector<Tensor*> p, m, v;
  std::vector<const Tensor*> g;
  params.for_each([&](std::string_view, Tensor& t) { p.push_back(&t); });
  state.m.for_each([&](std::string_view, Tensor& t) { m.push_back(&t); });
  state.v.for_each([&](std::string_view, Tensor& t) { v.push_back(&t); });
  grads.for_each([&](std::string_view, const Tensor& t) { g.push_back(&t); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    require_same_shape(p[i]->shape(), g[i]->shape(), "adam_step");
    require_same_shape(p[i]->shape(), m[i]->shape(), "adam_step state");
  }
  ++state.step;
  for (std::size_t i = 0; i < p.size(); ++i) {
    adam_update(p[i]->mutable_data(), g[i]->data(), m[i]->mutable_data(), v[i]->mutable_data(),
                state.step, lr, hyper);
  }
}

// ---------------------------------------------------------------- schedule

std::string TrainLog::to_ndjson() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_accuracy"] = e.val_accuracy;
    j["lr"] = e.lr;
    out += j.dump();
    out += '\n';
  }
  return out;
}

TrainLog TrainLog::from_ndjson(const std::string& text) {
  TrainLog log;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      log.epochs.push_back({j.at("epoch").get<std::size_t>(), j.at("train_loss").get<double>(),
                            j.at("val_loss").get<double>(), j.at("val_accuracy").get<double>(),
                            j.at("lr").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("train log: ") + e.what());
    }
  }
  return log;
}

PlateauScheduler::PlateauScheduler(const TrainConfig& cfg)
    : initial_(cfg.learning_rate),
      factor_(cfg.lr_decay_factor),
      min_lr_(cfg.min_lr),
      patience_(cfg.lr_plateau_patience),
      lr_(cfg.learning_rate),
      best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::step(double val_loss) {
  if (val_loss < best_ - kImprovementTolerance) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ >= patience_) {
    bad_epochs_ = 0;
    if (lr_ > min_lr_) {
      ++decays_;
      // Computed from the initial rate so the sequence is exactly lr0 * factor^-k.
      lr_ = std::max(initial_ / std::pow(factor_, static_cast<double>(decays_)), min_lr_);
    }
  }
  return lr_;
}

bool EarlyStopping::step(double val_loss) {
  if (!seen_ || val_loss < best_ - kImprovementTolerance) {
    seen_ = true;
    best_ = val_loss;
    bad_epochs_ = 0;
    return false;
  }
  return ++bad_epochs_ >= patience_;
}

double plateau_scheduler(const TrainLog& log, const TrainConfig& cfg) {
  if (log.epochs.empty()) throw UsageError("plateau_scheduler: log has no completed epochs");
  PlateauScheduler s(cfg);
  for (const auto& e : log.epochs) s.step(e.val_loss);
  return s.lr();
}

bool early_stop(const TrainLog& log, const TrainConfig& cfg) {
  EarlyStopping stop(cfg.early_stop_patience);
  bool result = false;
  for (const auto& e : log.epochs) result = stop.step(e.val_loss);
  return result;
}

// ---------------------------------------------------------------- training

BatchGradient batch_gradient(const ModelParams<float>& params,
                             std::span<const WindowRecord> records,
                             std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("batch_gradient: empty batch");
  std::optional<ModelParams<float>> sum;
  double loss = 0.0;
  for (auto idx : indices) {
    const auto& rec = records[idx];
    if (rec.label >= params.num_classes) {
      throw UsageError("label " + std::to_string(rec.label) + " out of range for " +
                       std::to_string(params.num_classes) + " classes");
    }
    auto fwd = forward(params, rec.samples);
    auto ce = cross_entropy(fwd.probs, rec.label);
    loss += ce.loss;
    auto g = backward_from_logits(fwd.cache, ce.grad_logits);
    if (!sum) {
      sum = std::move(g.params);
    } else {
      std::vector<Tensor*> dst;
      sum->for_each([&](std::string_view, Tensor& t) { dst.push_back(&t); });
      std::size_t i = 0;
      g.params.for_each([&](std::string_view, const Tensor& t) { dst[i++]->add_inplace(t); });
    }
  }
  const float inv = 1.0f / static_cast<float>(indices.size());
  sum->for_each([&](std::string_view, Tensor& t) { t.scale_inplace(inv); });
  return {std::move(*sum), loss / static_cast<double>(indices.size())};
}

Evaluation evaluate(const ModelParams<float>& params, std::span<const WindowRecord> records) {
  if (records.empty()) throw UsageError("evaluate: empty dataset");
  Evaluation ev;
  std::size_t correct = 0;
  for (const auto& rec : records) {
    if (rec.label >= params.num_classes) {
      throw UsageError("label " + std::to_string(rec.label) + " out of range for " +
                       std::to_string(params.num_classes) + " classes");
    }
    auto fwd = forward(params, rec.samples);
    ev.loss += cross_entropy(fwd.probs, rec.label).loss;
    const auto pred = argmax_class(fwd.probs.data());
    correct += pred == rec.label;
    ev.predictions.push_back(pred);
    ev.probabilities.emplace_back(fwd.probs.values());
  }
  ev.loss /= static_cast<double>(records.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  return ev;
}

namespace {

void check_dataset(std::span<const WindowRecord> set, const ModelConfig& cfg, const char* which) {
  if (set.empty()) throw UsageError(std::string("train: ") + which + " dataset is empty");
  for (const auto& r : set) {
    check_model_input(r.samples, cfg);
    if (r.label >= cfg.num_classes) {
      throw UsageError(std::string("train: ") + which + " label " + std::to_string(r.label) +
                       " out of range for " + std::to_string(cfg.num_classes) + " classes");
    }
  }
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, std::span<const WindowRecord> train_set,
                  std::span<const WindowRecord> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  model_cfg.validate();
  cfg.validate();
  check_dataset(train_set, model_cfg, "training");
  check_dataset(val_set, model_cfg, "validation");

  auto params = init_params(model_cfg);
  auto state = AdamState::zeros_like(params);
  const AdamHyper hyper{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon};
  PlateauScheduler scheduler(cfg);
  EarlyStopping stopper(cfg.early_stop_patience);
  Rng rng(cfg.rng_seed);

  TrainResult result{params, {}, 0};
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = scheduler.lr();
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      auto batch = batch_gradient(params, train_set, std::span(order).subspan(start, n));
      loss_sum += batch.loss * static_cast<double>(n);
      adam_step(params, batch.grads, state, lr, hyper);
    }
    const auto val = evaluate(params, val_set);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), val.loss, val.accuracy, lr};
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val.loss < best_val) {
      best_val = val.loss;
      result.params = params;
      result.best_epoch = epoch;
    }
    scheduler.step(val.loss);
    if (stopper.step(val.loss)) break;
  }
  return result;
}

}  // namespace resemg
