#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "resemg/errors.hpp"
#include "resemg/nn_ops.hpp"
#include "test_util.hpp"

using namespace resemg;
using resemg::testing::expect_all_near;
using resemg::testing::random_tensor;

namespace {

// Central difference of a scalar function of one tensor, evaluated in double.
std::vector<double> numeric_grad(Tensor64& theta, const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = f();
    theta[i] = saved - h;
    const double down = f();
    theta[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double weighted_sum(const Tensor64& y, const Tensor64& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

Tensor64 conv_oracle(const Tensor64& x, const Tensor64& kernel, const Tensor64& bias, bool same) {
  const std::size_t T = x.dim(0), C = x.dim(1), K = kernel.dim(0), O = kernel.dim(2);
  const std::size_t off = same ? (K - 1) / 2 : 0;
  const std::size_t out_len = same ? T : T - K + 1;
  auto y = Tensor64::zeros({out_len, O});
  for (std::size_t t = 0; t < out_len; ++t)
    for (std::size_t o = 0; o < O; ++o) {
      double acc = bias[o];
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t c = 0; c < C; ++c) {
          const long src = static_cast<long>(t + k) - static_cast<long>(off);
          if (src >= 0 && src < static_cast<long>(T)) acc += x.at(src, c) * kernel.at(k, c, o);
        }
      y.at(t, o) = acc;
    }
  return y;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Tensor64 reverse_time(const Tensor64& x) {
  auto y = x;
  const std::size_t T = x.dim(0), C = x.dim(1);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) y.at(t, c) = x.at(T - 1 - t, c);
  return y;
}

Tensor64 swap_halves(const Tensor64& y) {
  auto out = y;
  const std::size_t T = y.dim(0), H = y.dim(1) / 2;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < H; ++j) {
      out.at(t, j) = y.at(t, H + j);
      out.at(t, H + j) = y.at(t, j);
    }
  return out;
}

LSTMParams<double> random_lstm(std::size_t cin, std::size_t h, Rng& rng) {
  return {random_tensor<double>({cin, 4 * h}, rng, 0.5), random_tensor<double>({h, 4 * h}, rng, 0.5),
          random_tensor<double>({4 * h}, rng, 0.5)};
}

}  // namespace

// ---------------------------------------------------------------- conv1d

TEST(Conv1D, HandComputedSamePadding) {
  auto p = Conv1DParams<float>::zeros(3, 1, 1);
  p.kernel = Tensor({3, 1, 1}, {1, 0, -1});
  const auto y = conv1d_forward(Tensor({4, 1}, {1, 2, 3, 4}), p).output;
  EXPECT_EQ(y, Tensor({4, 1}, {-2, -2, -2, 3}));
}

TEST(Conv1D, DeltaKernelIsIdentity) {
  Rng rng(1);
  auto p = Conv1DParams<float>::zeros(3, 1, 1);
  p.kernel = Tensor({3, 1, 1}, {0, 1, 0});
  const auto x = random_tensor<float>({9, 1}, rng);
  EXPECT_EQ(conv1d_forward(x, p).output, x);
}

TEST(Conv1D, MatchesLoopOracle) {
  Rng rng(2);
  for (auto padding : {Padding::same, Padding::valid}) {
    for (std::size_t K : {1u, 2u, 3u, 5u}) {
      auto p = Conv1DParams<float>::zeros(K, 3, 4, padding);
      p.kernel = random_tensor<float>({K, 3, 4}, rng);
      p.bias = random_tensor<float>({4}, rng);
      const auto x = random_tensor<float>({11, 3}, rng);
      const auto want = conv_oracle(x.cast<double>(), p.kernel.cast<double>(), p.bias.cast<double>(),
                                    padding == Padding::same);
      const auto got = conv1d_forward(x, p).output;
      ASSERT_EQ(got.shape(), want.shape());
      expect_all_near(got.data(), want.data(), 1e-5);
    }
  }
}

TEST(Conv1D, ReluActivationClipsOracle) {
  Rng rng(3);
  auto p = Conv1DParams<float>::zeros(3, 2, 5);
  p.kernel = random_tensor<float>({3, 2, 5}, rng);
  const auto x = random_tensor<float>({8, 2}, rng);
  const auto lin = conv1d_forward(x, p).output;
  const auto relu = conv1d_forward(x, p, Activation::relu).output;
  for (std::size_t i = 0; i < lin.size(); ++i) EXPECT_EQ(relu[i], std::max(0.0f, lin[i]));
}

TEST(Conv1D, ChannelMismatchIsDimensionError) {
  auto p = Conv1DParams<float>::zeros(3, 2, 4);
  EXPECT_THROW(conv1d_forward(Tensor({5, 1}, std::vector<float>(5, 1.0f)), p), DimensionError);
  auto v = Conv1DParams<float>::zeros(5, 1, 1, Padding::valid);
  EXPECT_THROW(conv1d_forward(Tensor({3, 1}, {1, 2, 3}), v), DimensionError);
}

TEST(Conv1D, ZeroUpstreamGivesZeroGradients) {
  Rng rng(4);
  auto p = Conv1DParams<float>::zeros(3, 2, 3);
  p.kernel = random_tensor<float>({3, 2, 3}, rng);
  const auto fw = conv1d_forward(random_tensor<float>({6, 2}, rng), p);
  const auto g = conv1d_backward(Tensor::zeros({6, 3}), fw.cache);
  for (auto v : g.input.data()) EXPECT_EQ(v, 0.0f);
  for (auto v : g.kernel.data()) EXPECT_EQ(v, 0.0f);
  for (auto v : g.bias.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv1D, BiasGradientIsColumnSum) {
  Rng rng(5);
  auto p = Conv1DParams<float>::zeros(3, 2, 3);
  p.kernel = random_tensor<float>({3, 2, 3}, rng);
  const auto fw = conv1d_forward(random_tensor<float>({7, 2}, rng), p);
  const auto gy = random_tensor<float>({7, 3}, rng);
  const auto g = conv1d_backward(gy, fw.cache);
  for (std::size_t o = 0; o < 3; ++o) {
    double s = 0.0;
    for (std::size_t t = 0; t < 7; ++t) s += gy.at(t, o);
    EXPECT_NEAR(g.bias[o], s, 1e-5);
  }
}

TEST(Conv1D, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  for (auto padding : {Padding::same, Padding::valid}) {
    auto p = Conv1DParams<double>::zeros(3, 2, 3, padding);
    p.kernel = random_tensor<double>({3, 2, 3}, rng);
    p.bias = random_tensor<double>({3}, rng);
    auto x = random_tensor<double>({6, 2}, rng);
    const std::size_t out_len = padding == Padding::same ? 6 : 4;
    const auto w = random_tensor<double>({out_len, 3}, rng);
    auto loss = [&] { return weighted_sum(conv1d_forward(x, p).output, w); };
    const auto g = conv1d_backward(w, conv1d_forward(x, p).cache);
    expect_all_near(g.input.data(), numeric_grad(x, loss), 1e-6);
    expect_all_near(g.kernel.data(), numeric_grad(p.kernel, loss), 1e-6);
    expect_all_near(g.bias.data(), numeric_grad(p.bias, loss), 1e-6);
  }
}

TEST(Conv1D, BackwardRejectsMismatchedGradient) {
  auto p = Conv1DParams<float>::zeros(3, 1, 2);
  const auto fw = conv1d_forward(Tensor({4, 1}, {1, 2, 3, 4}), p);
  EXPECT_THROW(conv1d_backward(Tensor::zeros({4, 3}), fw.cache), DimensionError);
}

TEST(Conv1D, PaddingTags) {
  EXPECT_EQ(parse_padding("same"), Padding::same);
  EXPECT_EQ(parse_padding(padding_name(Padding::valid)), Padding::valid);
  EXPECT_THROW(parse_padding("causal"), UsageError);
}

// ---------------------------------------------------------------- maxpool

TEST(MaxPool, PicksPairMaxima) {
  EXPECT_EQ(maxpool1d_forward(Tensor({4, 1}, {1, 3, 2, 5})).output, Tensor({2, 1}, {3, 5}));
}

TEST(MaxPool, TieGoesToEarlierIndex) {
  const auto fw = maxpool1d_forward(Tensor({2, 1}, {5, 5}));
  EXPECT_EQ(fw.output, Tensor({1, 1}, {5}));
  EXPECT_EQ(maxpool1d_backward(Tensor({1, 1}, {0.25f}), fw.cache), Tensor({2, 1}, {0.25f, 0}));
}

TEST(MaxPool, OddLengthDropsTrailingStep) {
  const auto fw = maxpool1d_forward(Tensor({5, 1}, {1, 2, 3, 4, 9}));
  EXPECT_EQ(fw.output, Tensor({2, 1}, {2, 4}));
  const auto gx = maxpool1d_backward(Tensor({2, 1}, {1, 1}), fw.cache);
  EXPECT_EQ(gx, Tensor({5, 1}, {0, 1, 0, 1, 0}));
}

TEST(MaxPool, MatchesLoopOracleAndRoutesGradient) {
  Rng rng(7);
  const auto x = random_tensor<float>({10, 3}, rng);
  const auto fw = maxpool1d_forward(x);
  const auto gy = random_tensor<float>({5, 3}, rng);
  const auto gx = maxpool1d_backward(gy, fw.cache);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 3; ++c) {
      const float a = x.at(2 * t, c), b = x.at(2 * t + 1, c);
      EXPECT_EQ(fw.output.at(t, c), std::max(a, b));
      const bool first = a >= b;
      EXPECT_EQ(gx.at(2 * t, c), first ? gy.at(t, c) : 0.0f);
      EXPECT_EQ(gx.at(2 * t + 1, c), first ? 0.0f : gy.at(t, c));
    }
}

TEST(MaxPool, BackwardMatchesFiniteDifferences) {
  Rng rng(8);
  auto x = random_tensor<double>({8, 2}, rng);
  const auto w = random_tensor<double>({4, 2}, rng);
  auto loss = [&] { return weighted_sum(maxpool1d_forward(x).output, w); };
  const auto gx = maxpool1d_backward(w, maxpool1d_forward(x).cache);
  expect_all_near(gx.data(), numeric_grad(x, loss, 1e-6), 1e-4);
}

TEST(MaxPool, TooShortIsDimensionError) {
  EXPECT_THROW(maxpool1d_forward(Tensor({1, 2}, {1, 2})), DimensionError);
}

// ---------------------------------------------------------------- bilstm

TEST(BiLSTM, ZeroParametersGiveZeroOutput) {
  Rng rng(9);
  const auto p = LSTMParams<float>::zeros(3, 4);
  const auto y = bilstm_forward(random_tensor<float>({6, 3}, rng), p, p).output;
  EXPECT_EQ(y.shape(), (Shape{6, 8}));
  for (auto v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(BiLSTM, SingleStepMatchesHandEvaluatedCell) {
  // gate order (i, f, g, o); one input channel, one unit
  const double wi[4] = {0.5, -0.3, 0.8, 0.1}, wr[4] = {0.2, 0.4, -0.6, 0.9}, b[4] = {0.1, 1.0, -0.2, 0.3};
  const double wi2[4] = {-0.4, 0.7, 0.25, -0.5}, b2[4] = {0.0, 1.0, 0.5, -0.1};
  LSTMParams<double> fwd{Tensor64({1, 4}, {wi[0], wi[1], wi[2], wi[3]}),
                         Tensor64({1, 4}, {wr[0], wr[1], wr[2], wr[3]}),
                         Tensor64({4}, {b[0], b[1], b[2], b[3]})};
  LSTMParams<double> bwd{Tensor64({1, 4}, {wi2[0], wi2[1], wi2[2], wi2[3]}),
                         Tensor64({1, 4}, {wr[0], wr[1], wr[2], wr[3]}),
                         Tensor64({4}, {b2[0], b2[1], b2[2], b2[3]})};
  const double x = 0.7;
  auto cell = [&](const double* w, const double* bias) {
    // h0 = c0 = 0, so the recurrent weights never contribute
    const double i = sigmoid(w[0] * x + bias[0]);
    const double f = sigmoid(w[1] * x + bias[1]);
    const double g = std::tanh(w[2] * x + bias[2]);
    const double o = sigmoid(w[3] * x + bias[3]);
    const double c = f * 0.0 + i * g;
    return o * std::tanh(c);
  };
  const auto y = bilstm_forward(Tensor64({1, 1}, {x}), fwd, bwd).output;
  EXPECT_NEAR(y[0], cell(wi, b), 1e-6);
  EXPECT_NEAR(y[1], cell(wi2, b2), 1e-6);
}

TEST(BiLSTM, TwoStepRecurrenceMatchesHandEvaluation) {
  Rng rng(10);
  const auto p = random_lstm(1, 1, rng);
  const auto zero = LSTMParams<double>::zeros(1, 1);
  const double x0 = 0.3, x1 = -0.8;
  auto step = [&](double x, double h, double c, double& c_out) {
    auto z = [&](int k) { return p.w_input[k] * x + p.w_recurrent[k] * h + p.bias[k]; };
    const double i = sigmoid(z(0)), f = sigmoid(z(1)), g = std::tanh(z(2)), o = sigmoid(z(3));
    c_out = f * c + i * g;
    return o * std::tanh(c_out);
  };
  double c1, c2;
  const double h1 = step(x0, 0.0, 0.0, c1);
  const double h2 = step(x1, h1, c1, c2);
  const auto y = bilstm_forward(Tensor64({2, 1}, {x0, x1}), p, zero).output;
  EXPECT_NEAR(y.at(0, 0), h1, 1e-12);
  EXPECT_NEAR(y.at(1, 0), h2, 1e-12);
}

TEST(BiLSTM, DirectionSymmetry) {
  Rng rng(11);
  const auto a = random_lstm(2, 3, rng);
  const auto b = random_lstm(2, 3, rng);
  const auto x = random_tensor<double>({5, 2}, rng);
  const auto y = bilstm_forward(x, a, b).output;
  const auto y_rev = bilstm_forward(reverse_time(x), b, a).output;
  expect_all_near(y_rev.data(), swap_halves(reverse_time(y)).data(), 1e-12);
}

TEST(BiLSTM, GradientSymmetryUnderReversal) {
  Rng rng(12);
  const auto a = random_lstm(2, 2, rng);
  const auto b = random_lstm(2, 2, rng);
  const auto x = random_tensor<double>({4, 2}, rng);
  const auto gy = random_tensor<double>({4, 4}, rng);
  const auto g = bilstm_backward(gy, bilstm_forward(x, a, b).cache);
  const auto g_rev =
      bilstm_backward(swap_halves(reverse_time(gy)), bilstm_forward(reverse_time(x), b, a).cache);
  expect_all_near(g_rev.bwd.w_input.data(), g.fwd.w_input.data(), 1e-12);
  expect_all_near(g_rev.bwd.w_recurrent.data(), g.fwd.w_recurrent.data(), 1e-12);
  expect_all_near(g_rev.bwd.bias.data(), g.fwd.bias.data(), 1e-12);
  expect_all_near(g_rev.fwd.bias.data(), g.bwd.bias.data(), 1e-12);
  expect_all_near(g_rev.input.data(), reverse_time(g.input).data(), 1e-12);
}

TEST(BiLSTM, ZeroUpstreamGivesZeroGradients) {
  Rng rng(13);
  const auto p = random_lstm(2, 2, rng);
  const auto g = bilstm_backward(Tensor64::zeros({3, 4}), bilstm_forward(random_tensor<double>({3, 2}, rng), p, p).cache);
  for (const auto* t : {&g.input, &g.fwd.w_input, &g.fwd.w_recurrent, &g.fwd.bias, &g.bwd.w_input,
                        &g.bwd.w_recurrent, &g.bwd.bias}) {
    for (auto v : t->data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(BiLSTM, GradientsMatchFiniteDifferences) {
  Rng rng(14);
  auto a = random_lstm(2, 2, rng);
  auto b = random_lstm(2, 2, rng);
  auto x = random_tensor<double>({3, 2}, rng);
  const auto w = random_tensor<double>({3, 4}, rng);
  auto loss = [&] { return weighted_sum(bilstm_forward(x, a, b).output, w); };
  const auto g = bilstm_backward(w, bilstm_forward(x, a, b).cache);
  expect_all_near(g.input.data(), numeric_grad(x, loss), 1e-7);
  expect_all_near(g.fwd.w_input.data(), numeric_grad(a.w_input, loss), 1e-7);
  expect_all_near(g.fwd.w_recurrent.data(), numeric_grad(a.w_recurrent, loss), 1e-7);
  expect_all_near(g.fwd.bias.data(), numeric_grad(a.bias, loss), 1e-7);
  expect_all_near(g.bwd.w_input.data(), numeric_grad(b.w_input, loss), 1e-7);
  expect_all_near(g.bwd.w_recurrent.data(), numeric_grad(b.w_recurrent, loss), 1e-7);
  expect_all_near(g.bwd.bias.data(), numeric_grad(b.bias, loss), 1e-7);
}

TEST(BiLSTM, DimensionErrors) {
  const auto p = LSTMParams<float>::zeros(2, 3);
  EXPECT_THROW(bilstm_forward(Tensor({4, 3}, std::vector<float>(12)), p, p), DimensionError);
  const auto other = LSTMParams<float>::zeros(2, 4);
  EXPECT_THROW(bilstm_forward(Tensor({4, 2}, std::vector<float>(8)), p, other), DimensionError);
  const auto fw = bilstm_forward(Tensor({4, 2}, std::vector<float>(8)), p, p);
  EXPECT_THROW(bilstm_backward(Tensor::zeros({4, 3}), fw.cache), DimensionError);
}

// ---------------------------------------------------------------- pooling / dense / softmax

TEST(GlobalAvgPool, AveragesOverTime) {
  EXPECT_EQ(global_avg_pool_forward(Tensor({2, 2}, {1, 3, 3, 5})).output, Tensor({2}, {2, 4}));
  EXPECT_EQ(global_avg_pool_forward(Tensor({1, 3}, {7, -1, 2})).output, Tensor({3}, {7, -1, 2}));
}

TEST(GlobalAvgPool, BackwardMatchesFiniteDifferences) {
  Rng rng(15);
  auto x = random_tensor<double>({5, 3}, rng);
  const auto w = random_tensor<double>({3}, rng);
  auto loss = [&] { return weighted_sum(global_avg_pool_forward(x).output, w); };
  const auto gx = global_avg_pool_backward(w, global_avg_pool_forward(x).cache);
  expect_all_near(gx.data(), numeric_grad(x, loss), 1e-6);
}

TEST(GlobalAvgPool, LongSequenceStaysAccurate) {
  // Blocked accumulation must not drift on long inputs.
  std::vector<float> v(100000, 0.1f);
  const auto y = global_avg_pool_forward(Tensor({100000, 1}, v)).output;
  EXPECT_NEAR(y[0], 0.1, 1e-7);
}

TEST(Dense, IdentityWeights) {
  DenseParams<float> p{Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor::zeros({3})};
  const Tensor x({3}, {0.5f, -2.0f, 7.0f});
  EXPECT_EQ(dense_forward(x, p, Activation::none).output, x);
}

TEST(Dense, ReluClipsNegativePreActivation) {
  DenseParams<float> p{Tensor({2, 1}, {1, 1}), Tensor({1}, {-5})};
  EXPECT_EQ(dense_forward(Tensor({2}, {1, 2}), p, Activation::relu).output, Tensor({1}, {0}));
  EXPECT_EQ(dense_forward(Tensor({2}, {1, 2}), p, Activation::none).output, Tensor({1}, {-2}));
}

TEST(Dense, GradientsMatchFiniteDifferences) {
  Rng rng(16);
  for (auto act : {Activation::none, Activation::relu}) {
    DenseParams<double> p{random_tensor<double>({4, 3}, rng), random_tensor<double>({3}, rng)};
    auto x = random_tensor<double>({4}, rng);
    // keep relu away from its kink
    const auto pre = dense_forward(x, p, Activation::none).output;
    for (std::size_t j = 0; j < 3; ++j) {
      if (std::abs(pre[j]) < 1e-3) p.bias[j] += 0.1;
    }
    const auto w = random_tensor<double>({3}, rng);
    auto loss = [&] { return weighted_sum(dense_forward(x, p, act).output, w); };
    const auto g = dense_backward(w, dense_forward(x, p, act).cache);
    expect_all_near(g.input.data(), numeric_grad(x, loss), 1e-6);
    expect_all_near(g.weight.data(), numeric_grad(p.weight, loss), 1e-6);
    expect_all_near(g.bias.data(), numeric_grad(p.bias, loss), 1e-6);
  }
}

TEST(Dense, MismatchIsDimensionError) {
  const auto p = DenseParams<float>::zeros(4, 2);
  EXPECT_THROW(dense_forward(Tensor({3}, {1, 2, 3}), p, Activation::none), DimensionError);
  const auto fw = dense_forward(Tensor({4}, {1, 2, 3, 4}), p, Activation::none);
  EXPECT_THROW(dense_backward(Tensor({3}, {1, 2, 3}), fw.cache), DimensionError);
}

TEST(Softmax, UniformLogits) {
  const auto p = softmax(Tensor64({3}, {0, 0, 0}));
  for (auto v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariance) {
  Rng rng(17);
  for (double c : {-50.0, -1.0, 3.5, 80.0}) {
    const auto z = random_tensor<float>({4}, rng, 3.0);
    auto shifted = z;
    for (auto& v : shifted.mutable_data()) v += static_cast<float>(c);
    expect_all_near(softmax(shifted).data(), softmax(z).data(), 1e-5);
  }
}

TEST(Softmax, LogInputsGiveRatios) {
  const auto p = softmax(Tensor64({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  EXPECT_NEAR(p[0], 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-12);
  EXPECT_NEAR(p[2], 3.0 / 6.0, 1e-12);
}

TEST(Softmax, HugeLogitsStayFinite) {
  const auto p = softmax(Tensor({2}, {1e30f, 0.0f}));
  EXPECT_EQ(p[0], 1.0f);
  EXPECT_EQ(p[1], 0.0f);
}

TEST(Softmax, BackwardMatchesFiniteDifferences) {
  Rng rng(18);
  auto z = random_tensor<double>({4}, rng, 2.0);
  const auto w = random_tensor<double>({4}, rng);
  auto loss = [&] { return weighted_sum(softmax(z), w); };
  const auto g = softmax_backward(softmax(z), w);
  expect_all_near(g.data(), numeric_grad(z, loss), 1e-8);
}
