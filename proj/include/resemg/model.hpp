#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "resemg/nn_ops.hpp"
#include "resemg/tensor.hpp"

namespace resemg {

/// Structural hyperparameters. The defaults are the published network:
/// conv 32x3 twice, pool 2, BiLSTM 64, path1 128x1, dense 16, C-way head.
struct ModelConfig {
  std::size_t num_classes = 3;
  std::size_t input_length = 2000;
  std::uint64_t rng_seed = 0;
  std::size_t conv1_filters = 32;
  std::size_t conv2_filters = 32;
  std::size_t kernel_size = 3;
  std::size_t lstm_units = 64;
  std::size_t dense_units = 16;

  void validate() const;
};

template <typename Scalar>
struct ModelParams {
  Conv1DParams<Scalar> conv1;
  Conv1DParams<Scalar> conv2;
  LSTMParams<Scalar> lstm_fwd;
  LSTMParams<Scalar> lstm_bwd;
  Conv1DParams<Scalar> path1;
  DenseParams<Scalar> dense1;
  DenseParams<Scalar> dense_out;
  std::size_t num_classes = 3;

  static ModelParams zeros(const ModelConfig& cfg);

  /// Visits every trainable tensor in a fixed order with a stable name.
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  template <typename Other>
  ModelParams<Other> cast() const;

  bool operator==(const ModelParams&) const = default;

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn("conv1.kernel", self.conv1.kernel);
    fn("conv1.bias", self.conv1.bias);
    fn("conv2.kernel", self.conv2.kernel);
    fn("conv2.bias", self.conv2.bias);
    fn("lstm_fwd.w_input", self.lstm_fwd.w_input);
    fn("lstm_fwd.w_recurrent", self.lstm_fwd.w_recurrent);
    fn("lstm_fwd.bias", self.lstm_fwd.bias);
    fn("lstm_bwd.w_input", self.lstm_bwd.w_input);
    fn("lstm_bwd.w_recurrent", self.lstm_bwd.w_recurrent);
    fn("lstm_bwd.bias", self.lstm_bwd.bias);
    fn("path1.kernel", self.path1.kernel);
    fn("path1.bias", self.path1.bias);
    fn("dense1.weight", self.dense1.weight);
    fn("dense1.bias", self.dense1.bias);
    fn("dense_out.weight", self.dense_out.weight);
    fn("dense_out.bias", self.dense_out.bias);
  }
};

template <typename Scalar>
struct ModelCache {
  Conv1DCache<Scalar> conv1;
  Conv1DCache<Scalar> conv2;
  MaxPoolCache pool;
  BiLSTMCache<Scalar> lstm;
  Conv1DCache<Scalar> path1;
  GlobalAvgPoolCache gap;
  DenseCache<Scalar> dense1;
  DenseCache<Scalar> dense_out;
  BasicTensor<Scalar> probs = BasicTensor<Scalar>::zeros({1});
};

template <typename Scalar>
struct ModelForward {
  BasicTensor<Scalar> probs;
  BasicTensor<Scalar> logits;
  ModelCache<Scalar> cache;
};

template <typename Scalar>
struct ModelGrads {
  ModelParams<Scalar> params;
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> pooled;            // gradient at the max-pooled features
  BasicTensor<Scalar> pooled_via_lstm;   // BiLSTM branch contribution
  BasicTensor<Scalar> pooled_via_path1;  // skip branch contribution
};

/// Glorot-uniform kernels, orthogonal recurrent kernels, zero biases except
/// the LSTM forget gate (1.0). Deterministic in cfg.rng_seed.
ModelParams<float> init_params(const ModelConfig& cfg);

/// probs = softmax(dense_out(relu(dense1(gap(bilstm(pooled) + path1(pooled))))))
/// with pooled = maxpool(relu(conv2(relu(conv1(x))))). x has shape (T, 1).
template <typename Scalar>
ModelForward<Scalar> forward(const ModelParams<Scalar>& params, const BasicTensor<Scalar>& x);

/// Backward from a gradient on the class probabilities.
template <typename Scalar>
ModelGrads<Scalar> backward(const ModelCache<Scalar>& cache, const BasicTensor<Scalar>& grad_probs);

/// Backward from a gradient on the pre-softmax logits (used with cross-entropy).
template <typename Scalar>
ModelGrads<Scalar> backward_from_logits(const ModelCache<Scalar>& cache,
                                        const BasicTensor<Scalar>& grad_logits);

/// Index of the largest probability; ties go to the lowest index.
std::size_t argmax_class(std::span<const float> probs);
std::size_t predict(const ModelParams<float>& params, const Tensor& x);

template <typename Scalar>
std::size_t parameter_count(const ModelParams<Scalar>& params);

/// Requires a (input_length, 1) signal.
void check_model_input(const Tensor& x, const ModelConfig& cfg);

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);
/// As above; a class-count mismatch raises UsageError.
ModelParams<float> load_checkpoint(const std::filesystem::path& path, std::size_t expected_classes);

}  // namespace resemg
