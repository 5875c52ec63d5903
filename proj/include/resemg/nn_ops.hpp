#pragma once

// Forward and analytic backward passes for every layer ResEMGNet uses.
//
// All layers are pure functions of (input, params). A forward call returns
// the output together with a cache; the matching backward consumes that
// cache. Caches hold copies of the parameters they were produced with, so a
// backward never observes a later optimizer update.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "resemg/tensor.hpp"

namespace resemg {

enum class Padding { same, valid };
enum class Activation { none, relu };

Padding parse_padding(std::string_view tag);
std::string_view padding_name(Padding padding);

template <typename Scalar, typename Cache>
struct Forward {
  BasicTensor<Scalar> output;
  Cache cache;
};

// ---------------------------------------------------------------- Conv1D

template <typename Scalar>
struct Conv1DParams {
  BasicTensor<Scalar> kernel;  // (kernel_size, in_channels, out_channels)
  BasicTensor<Scalar> bias;    // (out_channels)
  Padding padding = Padding::same;

  static Conv1DParams zeros(std::size_t kernel_size, std::size_t in_channels,
                            std::size_t out_channels, Padding padding = Padding::same);

  std::size_t kernel_size() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
  std::size_t out_channels() const { return kernel.dim(2); }
  std::size_t parameter_count() const { return kernel.size() + bias.size(); }

  bool operator==(const Conv1DParams&) const = default;
};

template <typename Scalar>
struct Conv1DCache {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> output;  // post-activation; only read when activation is relu
  Conv1DParams<Scalar> params;
  Activation activation = Activation::none;
};

template <typename Scalar>
struct Conv1DGrads {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> kernel;
  BasicTensor<Scalar> bias;
};

/// Cross-correlation y[t][o] = bias[o] + sum_{k,c} x[t+k-off][c] * kernel[k][c][o].
/// Under same padding off = (kernel_size-1)/2 and out-of-range samples are zero.
template <typename Scalar>
Forward<Scalar, Conv1DCache<Scalar>> conv1d_forward(const BasicTensor<Scalar>& x,
                                                    const Conv1DParams<Scalar>& p,
                                                    Activation activation = Activation::none);

template <typename Scalar>
Conv1DGrads<Scalar> conv1d_backward(const BasicTensor<Scalar>& grad_y,
                                    const Conv1DCache<Scalar>& cache);

// ---------------------------------------------------------------- MaxPool1D

struct MaxPoolCache {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// Non-overlapping pooling over time; a trailing odd step is dropped and
/// ties resolve to the earlier index.
template <typename Scalar>
Forward<Scalar, MaxPoolCache> maxpool1d_forward(const BasicTensor<Scalar>& x,
                                                std::size_t pool = 2);

template <typename Scalar>
BasicTensor<Scalar> maxpool1d_backward(const BasicTensor<Scalar>& grad_y,
                                       const MaxPoolCache& cache);

// ---------------------------------------------------------------- LSTM

/// Gate blocks are laid out (input, forget, cell-candidate, output) along the 4H axis.
template <typename Scalar>
struct LSTMParams {
  BasicTensor<Scalar> w_input;      // (in_channels, 4H)
  BasicTensor<Scalar> w_recurrent;  // (H, 4H)
  BasicTensor<Scalar> bias;         // (4H)

  static LSTMParams zeros(std::size_t in_channels, std::size_t units);

  std::size_t units() const { return w_recurrent.dim(0); }
  std::size_t in_channels() const { return w_input.dim(0); }
  std::size_t parameter_count() const {
    return w_input.size() + w_recurrent.size() + bias.size();
  }

  bool operator==(const LSTMParams&) const = default;
};

/// Per-step intermediates of one direction, indexed in processing order.
template <typename Scalar>
struct LSTMSteps {
  std::vector<Scalar> gates;      // (T, 4H) post-activation i, f, g, o
  std::vector<Scalar> cell;       // (T, H)
  std::vector<Scalar> cell_tanh;  // (T, H)
  std::vector<Scalar> hidden;     // (T, H)
  bool reversed = false;
};

template <typename Scalar>
struct BiLSTMCache {
  BasicTensor<Scalar> input;
  LSTMParams<Scalar> fwd;
  LSTMParams<Scalar> bwd;
  LSTMSteps<Scalar> fwd_steps;
  LSTMSteps<Scalar> bwd_steps;
};

template <typename Scalar>
struct BiLSTMGrads {
  BasicTensor<Scalar> input;
  LSTMParams<Scalar> fwd;
  LSTMParams<Scalar> bwd;
};

/// Returns the full sequence (T, 2H): y[t] = concat(h_fwd[t], h_bwd[t]), with
/// the backward direction run over reversed time and re-aligned. Initial
/// hidden and cell states are zero.
template <typename Scalar>
Forward<Scalar, BiLSTMCache<Scalar>> bilstm_forward(const BasicTensor<Scalar>& x,
                                                    const LSTMParams<Scalar>& fwd,
                                                    const LSTMParams<Scalar>& bwd);

template <typename Scalar>
BiLSTMGrads<Scalar> bilstm_backward(const BasicTensor<Scalar>& grad_y,
                                    const BiLSTMCache<Scalar>& cache);

// ---------------------------------------------------------------- pooling / dense

struct GlobalAvgPoolCache {
  Shape input_shape;
};

template <typename Scalar>
Forward<Scalar, GlobalAvgPoolCache> global_avg_pool_forward(const BasicTensor<Scalar>& x);

template <typename Scalar>
BasicTensor<Scalar> global_avg_pool_backward(const BasicTensor<Scalar>& grad_y,
                                             const GlobalAvgPoolCache& cache);

template <typename Scalar>
struct DenseParams {
  BasicTensor<Scalar> weight;  // (in_features, out_features)
  BasicTensor<Scalar> bias;    // (out_features)

  static DenseParams zeros(std::size_t in_features, std::size_t out_features);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  bool operator==(const DenseParams&) const = default;
};

template <typename Scalar>
struct DenseCache {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> output;
  DenseParams<Scalar> params;
  Activation activation = Activation::none;
};

template <typename Scalar>
struct DenseGrads {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> weight;
  BasicTensor<Scalar> bias;
};

/// y = act(x^T W + b) for a feature vector x.
template <typename Scalar>
Forward<Scalar, DenseCache<Scalar>> dense_forward(const BasicTensor<Scalar>& x,
                                                  const DenseParams<Scalar>& p,
                                                  Activation activation);

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const BasicTensor<Scalar>& grad_y,
                                  const DenseCache<Scalar>& cache);

// ---------------------------------------------------------------- softmax

/// Max-shifted softmax over a rank-1 logit vector (at least two classes).
template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& logits);

/// Vector-Jacobian product of softmax: p * (g - <g, p>).
template <typename Scalar>
BasicTensor<Scalar> softmax_backward(const BasicTensor<Scalar>& probs,
                                     const BasicTensor<Scalar>& grad_probs);

}  // namespace resemg
