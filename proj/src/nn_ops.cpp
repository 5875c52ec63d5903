#include "resemg/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace resemg {

Padding parse_padding(std::string_view tag) {
  if (tag == "same") return Padding::same;
  if (tag == "valid") return Padding::valid;
  throw UsageError("unknown padding mode '" + std::string(tag) + "'");
}

std::string_view padding_name(Padding padding) {
  return padding == Padding::same ? "same" : "valid";
}

namespace {

template <typename Scalar>
std::vector<Scalar> narrow(const std::vector<double>& acc) {
  return std::vector<Scalar>(acc.begin(), acc.end());
}

template <typename Scalar>
void apply_relu_mask(std::vector<Scalar>& grad, std::span<const Scalar> output) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(output[i] > Scalar{0})) grad[i] = Scalar{0};
  }
}

template <typename Scalar>
inline Scalar sigmoid(Scalar z) {
  return Scalar{1} / (Scalar{1} + std::exp(-z));
}

// (rows, cols) -> (cols, rows)
template <typename Scalar>
std::vector<Scalar> transposed(std::span<const Scalar> m, std::size_t rows, std::size_t cols) {
  std::vector<Scalar> t(m.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = m[r * cols + c];
  }
  return t;
}

// Reductions over the time axis: partial sums over short blocks in the
// storage type, flushed into double totals.
constexpr std::size_t kTimeBlock = 16;

template <typename Scalar>
class BlockedSum {
 public:
  explicit BlockedSum(std::size_t n) : partial_(n, Scalar{0}), total_(n, 0.0) {}

  Scalar* partial() noexcept { return partial_.data(); }

  void end_step() {
    if (++steps_ == kTimeBlock) flush();
  }

  std::vector<Scalar> result() {
    flush();
    return std::vector<Scalar>(total_.begin(), total_.end());
  }

 private:
  void flush() {
    for (std::size_t i = 0; i < partial_.size(); ++i) {
      total_[i] += partial_[i];
      partial_[i] = Scalar{0};
    }
    steps_ = 0;
  }

  std::vector<Scalar> partial_;
  std::vector<double> total_;
  std::size_t steps_ = 0;
};

}  // namespace

// ---------------------------------------------------------------- Conv1D

template <typename Scalar>
Conv1DParams<Scalar> Conv1DParams<Scalar>::zeros(std::size_t kernel_size, std::size_t in_channels,
                                                 std::size_t out_channels, Padding padding) {
  return {BasicTensor<Scalar>::zeros({kernel_size, in_channels, out_channels}),
          BasicTensor<Scalar>::zeros({out_channels}), padding};
}

template <typename Scalar>
Forward<Scalar, Conv1DCache<Scalar>> conv1d_forward(const BasicTensor<Scalar>& x,
                                                    const Conv1DParams<Scalar>& p,
                                                    Activation activation) {
  if (p.kernel.rank() != 3 || p.bias.rank() != 1 || p.bias.dim(0) != p.out_channels()) {
    throw DimensionError("conv1d: malformed parameters kernel " + shape_string(p.kernel.shape()) +
                         " bias " + shape_string(p.bias.shape()));
  }
  if (x.rank() != 2 || x.dim(1) != p.in_channels()) {
    throw DimensionError("conv1d: input " + shape_string(x.shape()) + " does not match kernel " +
                         shape_string(p.kernel.shape()));
  }
  const std::size_t T = x.dim(0), cin = p.in_channels(), cout = p.out_channels();
  const std::size_t K = p.kernel_size();
  if (p.padding == Padding::valid && T < K) {
    throw DimensionError("conv1d: input length " + std::to_string(T) +
                         " shorter than kernel under valid padding");
  }
  const std::size_t out_len = p.padding == Padding::same ? T : T - K + 1;
  const std::ptrdiff_t offset =
      p.padding == Padding::same ? static_cast<std::ptrdiff_t>((K - 1) / 2) : 0;

  const auto X = x.data();
  const auto W = p.kernel.data();
  const auto B = p.bias.data();
  std::vector<Scalar> out(out_len * cout);
  for (std::size_t t = 0; t < out_len; ++t) {
    Scalar* acc = &out[t * cout];
    for (std::size_t o = 0; o < cout; ++o) acc[o] = B[o];
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - offset;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      const Scalar* xrow = &X[static_cast<std::size_t>(src) * cin];
      const Scalar* wk = &W[k * cin * cout];
      for (std::size_t c = 0; c < cin; ++c) {
        const Scalar xv = xrow[c];
        const Scalar* wrow = wk + c * cout;
        for (std::size_t o = 0; o < cout; ++o) acc[o] += xv * wrow[o];
      }
    }
    if (activation == Activation::relu) {
      for (std::size_t o = 0; o < cout; ++o) acc[o] = acc[o] > Scalar{0} ? acc[o] : Scalar{0};
    }
  }
  BasicTensor<Scalar> y({out_len, cout}, std::move(out));
  Conv1DCache<Scalar> cache{x, activation == Activation::relu ? y : BasicTensor<Scalar>::zeros({1}),
                            p, activation};
  return {std::move(y), std::move(cache)};
}

template <typename Scalar>
Conv1DGrads<Scalar> conv1d_backward(const BasicTensor<Scalar>& grad_y,
                                    const Conv1DCache<Scalar>& cache) {
  const auto& p = cache.params;
  const std::size_t T = cache.input.dim(0), cin = p.in_channels(), cout = p.out_channels();
  const std::size_t K = p.kernel_size();
  const std::size_t out_len = p.padding == Padding::same ? T : T - K + 1;
  require_same_shape(grad_y.shape(), {out_len, cout}, "conv1d_backward");
  const std::ptrdiff_t offset =
      p.padding == Padding::same ? static_cast<std::ptrdiff_t>((K - 1) / 2) : 0;

  std::vector<Scalar> gy(grad_y.values());
  if (cache.activation == Activation::relu) apply_relu_mask<Scalar>(gy, cache.output.data());

  const auto X = cache.input.data();
  // Per tap, the kernel transposed to (out, in) so grad_x accumulates as axpy.
  std::vector<Scalar> wt(K * cout * cin);
  for (std::size_t k = 0; k < K; ++k) {
    auto block = transposed<Scalar>(p.kernel.data().subspan(k * cin * cout, cin * cout), cin, cout);
    std::copy(block.begin(), block.end(), wt.begin() + static_cast<std::ptrdiff_t>(k * cout * cin));
  }
  std::vector<Scalar> gx(T * cin, Scalar{0});
  BlockedSum<Scalar> gk(K * cin * cout), gb(cout);
  for (std::size_t t = 0; t < out_len; ++t) {
    const Scalar* gyrow = &gy[t * cout];
    Scalar* gbp = gb.partial();
    for (std::size_t o = 0; o < cout; ++o) gbp[o] += gyrow[o];
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - offset;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      const std::size_t s = static_cast<std::size_t>(src);
      const Scalar* xrow = &X[s * cin];
      for (std::size_t c = 0; c < cin; ++c) {
        const Scalar xv = xrow[c];
        Scalar* gkrow = gk.partial() + (k * cin + c) * cout;
        for (std::size_t o = 0; o < cout; ++o) gkrow[o] += xv * gyrow[o];
      }
      Scalar* gxrow = &gx[s * cin];
      const Scalar* wk = &wt[k * cout * cin];
      for (std::size_t o = 0; o < cout; ++o) {
        const Scalar g = gyrow[o];
        const Scalar* wrow = wk + o * cin;
        for (std::size_t c = 0; c < cin; ++c) gxrow[c] += g * wrow[c];
      }
    }
    gk.end_step();
    gb.end_step();
  }
  return {BasicTensor<Scalar>({T, cin}, std::move(gx)),
          BasicTensor<Scalar>({K, cin, cout}, gk.result()),
          BasicTensor<Scalar>({cout}, gb.result())};
}

// ---------------------------------------------------------------- MaxPool1D

template <typename Scalar>
Forward<Scalar, MaxPoolCache> maxpool1d_forward(const BasicTensor<Scalar>& x, std::size_t pool) {
  if (pool == 0) throw UsageError("maxpool1d: pool size must be positive");
  if (x.rank() != 2 || x.dim(0) < pool) {
    throw DimensionError("maxpool1d: input " + shape_string(x.shape()) +
                         " shorter than pool size " + std::to_string(pool));
  }
  const std::size_t T = x.dim(0), C = x.dim(1), out_len = T / pool;
  const auto X = x.data();
  std::vector<Scalar> out(out_len * C);
  std::vector<std::uint32_t> argmax(out_len * C);
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t best = t * pool * C + c;
      for (std::size_t j = 1; j < pool; ++j) {
        const std::size_t idx = (t * pool + j) * C + c;
        if (X[idx] > X[best]) best = idx;
      }
      out[t * C + c] = X[best];
      argmax[t * C + c] = static_cast<std::uint32_t>(best);
    }
  }
  return {BasicTensor<Scalar>({out_len, C}, std::move(out)),
          MaxPoolCache{x.shape(), std::move(argmax)}};
}

template <typename Scalar>
BasicTensor<Scalar> maxpool1d_backward(const BasicTensor<Scalar>& grad_y,
                                       const MaxPoolCache& cache) {
  if (grad_y.size() != cache.argmax.size()) {
    throw DimensionError("maxpool1d_backward: gradient " + shape_string(grad_y.shape()) +
                         " does not match cached pooling of " + shape_string(cache.input_shape));
  }
  auto gx = BasicTensor<Scalar>::zeros(cache.input_shape);
  auto G = gx.mutable_data();
  const auto gy = grad_y.data();
  for (std::size_t i = 0; i < gy.size(); ++i) G[cache.argmax[i]] += gy[i];
  return gx;
}

// ---------------------------------------------------------------- LSTM

template <typename Scalar>
LSTMParams<Scalar> LSTMParams<Scalar>::zeros(std::size_t in_channels, std::size_t units) {
  return {BasicTensor<Scalar>::zeros({in_channels, 4 * units}),
          BasicTensor<Scalar>::zeros({units, 4 * units}),
          BasicTensor<Scalar>::zeros({4 * units})};
}

namespace {

template <typename Scalar>
void check_lstm_params(const LSTMParams<Scalar>& p, std::size_t cin, const char* which) {
  const std::size_t H = p.w_recurrent.rank() == 2 ? p.w_recurrent.dim(0) : 0;
  const bool ok = H > 0 && p.w_recurrent.dim(1) == 4 * H && p.w_input.rank() == 2 &&
                  p.w_input.dim(1) == 4 * H && p.bias.rank() == 1 && p.bias.dim(0) == 4 * H;
  if (!ok) {
    throw DimensionError(std::string("bilstm: malformed ") + which + " parameters w_input " +
                         shape_string(p.w_input.shape()) + " w_recurrent " +
                         shape_string(p.w_recurrent.shape()));
  }
  if (p.w_input.dim(0) != cin) {
    throw DimensionError(std::string("bilstm: input channels ") + std::to_string(cin) +
                         " do not match " + which + " w_input " + shape_string(p.w_input.shape()));
  }
}

// Runs one direction, writing h into columns [col, col+H) of y.
template <typename Scalar>
LSTMSteps<Scalar> lstm_direction_forward(const BasicTensor<Scalar>& x, const LSTMParams<Scalar>& p,
                                         bool reversed, std::vector<Scalar>& y,
                                         std::size_t y_stride, std::size_t col) {
  const std::size_t T = x.dim(0), cin = x.dim(1), H = p.units(), G = 4 * H;
  const auto X = x.data();
  const auto Wx = p.w_input.data();
  const auto Wh = p.w_recurrent.data();
  const auto B = p.bias.data();

  LSTMSteps<Scalar> st;
  st.reversed = reversed;
  st.gates.resize(T * G);
  st.cell.resize(T * H);
  st.cell_tanh.resize(T * H);
  st.hidden.resize(T * H);

  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reversed ? T - 1 - s : s;
    // Pre-activations are accumulated in place, then squashed.
    Scalar* z = &st.gates[s * G];
    for (std::size_t k = 0; k < G; ++k) z[k] = B[k];
    const Scalar* xrow = &X[t * cin];
    for (std::size_t c = 0; c < cin; ++c) {
      const Scalar xv = xrow[c];
      const Scalar* wrow = &Wx[c * G];
      for (std::size_t k = 0; k < G; ++k) z[k] += xv * wrow[k];
    }
    if (s > 0) {
      const Scalar* hprev = &st.hidden[(s - 1) * H];
      for (std::size_t j = 0; j < H; ++j) {
        const Scalar hv = hprev[j];
        const Scalar* wrow = &Wh[j * G];
        for (std::size_t k = 0; k < G; ++k) z[k] += hv * wrow[k];
      }
    }
    Scalar* gates = z;
    for (std::size_t j = 0; j < H; ++j) {
      gates[j] = sigmoid<Scalar>(z[j]);
      gates[H + j] = sigmoid<Scalar>(z[H + j]);
      gates[2 * H + j] = std::tanh(z[2 * H + j]);
      gates[3 * H + j] = sigmoid<Scalar>(z[3 * H + j]);
    }
    const Scalar* cprev = s > 0 ? &st.cell[(s - 1) * H] : nullptr;
    for (std::size_t j = 0; j < H; ++j) {
      const Scalar cp = cprev ? cprev[j] : Scalar{0};
      const Scalar c = gates[H + j] * cp + gates[j] * gates[2 * H + j];
      const Scalar tc = std::tanh(c);
      const Scalar h = gates[3 * H + j] * tc;
      st.cell[s * H + j] = c;
      st.cell_tanh[s * H + j] = tc;
      st.hidden[s * H + j] = h;
      y[t * y_stride + col + j] = h;
    }
  }
  return st;
}

template <typename Scalar>
LSTMParams<Scalar> lstm_direction_backward(const BasicTensor<Scalar>& x,
                                           const LSTMParams<Scalar>& p,
                                           const LSTMSteps<Scalar>& st,
                                           std::span<const Scalar> grad_y, std::size_t y_stride,
                                           std::size_t col, std::vector<Scalar>& grad_x) {
  const std::size_t T = x.dim(0), cin = x.dim(1), H = p.units(), G = 4 * H;
  const auto X = x.data();
  const auto wx_t = transposed<Scalar>(p.w_input.data(), cin, G);      // (4H, in)
  const auto wh_t = transposed<Scalar>(p.w_recurrent.data(), H, G);    // (4H, H)

  // Pre-activation gradients for every step; the recurrent sweep fills them
  // and the parameter products are formed afterwards.
  std::vector<Scalar> dz(T * G);
  std::vector<Scalar> dh_next(H, Scalar{0}), dc_next(H, Scalar{0});
  for (std::size_t s = T; s-- > 0;) {
    const std::size_t t = st.reversed ? T - 1 - s : s;
    const Scalar* gates = &st.gates[s * G];
    const Scalar* cprev = s > 0 ? &st.cell[(s - 1) * H] : nullptr;
    const Scalar* gyrow = &grad_y[t * y_stride + col];
    Scalar* d = &dz[s * G];
    for (std::size_t j = 0; j < H; ++j) {
      const Scalar i = gates[j], f = gates[H + j], g = gates[2 * H + j], o = gates[3 * H + j];
      const Scalar tc = st.cell_tanh[s * H + j];
      const Scalar dh = gyrow[j] + dh_next[j];
      const Scalar dc = dh * o * (Scalar{1} - tc * tc) + dc_next[j];
      const Scalar cp = cprev ? cprev[j] : Scalar{0};
      d[j] = dc * g * i * (Scalar{1} - i);
      d[H + j] = dc * cp * f * (Scalar{1} - f);
      d[2 * H + j] = dc * i * (Scalar{1} - g * g);
      d[3 * H + j] = dh * tc * o * (Scalar{1} - o);
      dc_next[j] = dc * f;
    }
    std::fill(dh_next.begin(), dh_next.end(), Scalar{0});
    if (s > 0) {
      for (std::size_t k = 0; k < G; ++k) {
        const Scalar dk = d[k];
        const Scalar* wrow = &wh_t[k * H];
        for (std::size_t j = 0; j < H; ++j) dh_next[j] += dk * wrow[j];
      }
    }
  }

  BlockedSum<Scalar> gWx(cin * G), gWh(H * G), gb(G);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = st.reversed ? T - 1 - s : s;
    const Scalar* d = &dz[s * G];
    Scalar* gbp = gb.partial();
    for (std::size_t k = 0; k < G; ++k) gbp[k] += d[k];
    const Scalar* xrow = &X[t * cin];
    for (std::size_t c = 0; c < cin; ++c) {
      const Scalar xv = xrow[c];
      Scalar* grow = gWx.partial() + c * G;
      for (std::size_t k = 0; k < G; ++k) grow[k] += xv * d[k];
    }
    if (s > 0) {
      const Scalar* hprev = &st.hidden[(s - 1) * H];
      for (std::size_t j = 0; j < H; ++j) {
        const Scalar hv = hprev[j];
        Scalar* grow = gWh.partial() + j * G;
        for (std::size_t k = 0; k < G; ++k) grow[k] += hv * d[k];
      }
    }
    Scalar* gxrow = &grad_x[t * cin];
    for (std::size_t k = 0; k < G; ++k) {
      const Scalar dk = d[k];
      const Scalar* wrow = &wx_t[k * cin];
      for (std::size_t c = 0; c < cin; ++c) gxrow[c] += dk * wrow[c];
    }
    gWx.end_step();
    gWh.end_step();
    gb.end_step();
  }
  return {BasicTensor<Scalar>({cin, G}, gWx.result()),
          BasicTensor<Scalar>({H, G}, gWh.result()),
          BasicTensor<Scalar>({G}, gb.result())};
}

}  // namespace

template <typename Scalar>
Forward<Scalar, BiLSTMCache<Scalar>> bilstm_forward(const BasicTensor<Scalar>& x,
                                                    const LSTMParams<Scalar>& fwd,
                                                    const LSTMParams<Scalar>& bwd) {
  if (x.rank() != 2) throw DimensionError("bilstm: input must be (T, C), got " + shape_string(x.shape()));
  check_lstm_params(fwd, x.dim(1), "forward");
  check_lstm_params(bwd, x.dim(1), "backward");
  if (fwd.units() != bwd.units()) throw DimensionError("bilstm: direction unit counts differ");
  const std::size_t T = x.dim(0), H = fwd.units();
  std::vector<Scalar> y(T * 2 * H);
  auto fs = lstm_direction_forward(x, fwd, false, y, 2 * H, 0);
  auto bs = lstm_direction_forward(x, bwd, true, y, 2 * H, H);
  return {BasicTensor<Scalar>({T, 2 * H}, std::move(y)),
          BiLSTMCache<Scalar>{x, fwd, bwd, std::move(fs), std::move(bs)}};
}

template <typename Scalar>
BiLSTMGrads<Scalar> bilstm_backward(const BasicTensor<Scalar>& grad_y,
                                    const BiLSTMCache<Scalar>& cache) {
  const std::size_t T = cache.input.dim(0), cin = cache.input.dim(1), H = cache.fwd.units();
  require_same_shape(grad_y.shape(), {T, 2 * H}, "bilstm_backward");
  if (cache.fwd_steps.hidden.size() != T * H || cache.bwd_steps.hidden.size() != T * H) {
    throw DimensionError("bilstm_backward: cache does not match its input");
  }
  std::vector<Scalar> gx(T * cin, Scalar{0});
  auto gf = lstm_direction_backward(cache.input, cache.fwd, cache.fwd_steps, grad_y.data(), 2 * H,
                                    0, gx);
  auto gb = lstm_direction_backward(cache.input, cache.bwd, cache.bwd_steps, grad_y.data(), 2 * H,
                                    H, gx);
  return {BasicTensor<Scalar>({T, cin}, std::move(gx)), std::move(gf), std::move(gb)};
}

// ---------------------------------------------------------------- pooling / dense

template <typename Scalar>
Forward<Scalar, GlobalAvgPoolCache> global_avg_pool_forward(const BasicTensor<Scalar>& x) {
  if (x.rank() != 2) {
    throw DimensionError("global_avg_pool: input must be (T, C), got " + shape_string(x.shape()));
  }
  const std::size_t T = x.dim(0), C = x.dim(1);
  const auto X = x.data();
  std::vector<double> acc(C, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) acc[c] += X[t * C + c];
  }
  for (auto& v : acc) v /= static_cast<double>(T);
  return {BasicTensor<Scalar>({C}, narrow<Scalar>(acc)), GlobalAvgPoolCache{x.shape()}};
}

template <typename Scalar>
BasicTensor<Scalar> global_avg_pool_backward(const BasicTensor<Scalar>& grad_y,
                                             const GlobalAvgPoolCache& cache) {
  const std::size_t T = cache.input_shape.at(0), C = cache.input_shape.at(1);
  require_same_shape(grad_y.shape(), {C}, "global_avg_pool_backward");
  std::vector<Scalar> gx(T * C);
  const auto gy = grad_y.data();
  for (std::size_t c = 0; c < C; ++c) {
    const auto share = static_cast<Scalar>(static_cast<double>(gy[c]) / static_cast<double>(T));
    for (std::size_t t = 0; t < T; ++t) gx[t * C + c] = share;
  }
  return BasicTensor<Scalar>(cache.input_shape, std::move(gx));
}

template <typename Scalar>
DenseParams<Scalar> DenseParams<Scalar>::zeros(std::size_t in_features, std::size_t out_features) {
  return {BasicTensor<Scalar>::zeros({in_features, out_features}),
          BasicTensor<Scalar>::zeros({out_features})};
}

template <typename Scalar>
Forward<Scalar, DenseCache<Scalar>> dense_forward(const BasicTensor<Scalar>& x,
                                                  const DenseParams<Scalar>& p,
                                                  Activation activation) {
  if (p.weight.rank() != 2 || p.bias.rank() != 1 || p.bias.dim(0) != p.out_features()) {
    throw DimensionError("dense: malformed parameters weight " + shape_string(p.weight.shape()) +
                         " bias " + shape_string(p.bias.shape()));
  }
  if (x.rank() != 1 || x.dim(0) != p.in_features()) {
    throw DimensionError("dense: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(p.weight.shape()));
  }
  const std::size_t F = p.in_features(), N = p.out_features();
  const auto X = x.data();
  const auto W = p.weight.data();
  std::vector<double> acc(p.bias.data().begin(), p.bias.data().end());
  for (std::size_t f = 0; f < F; ++f) {
    const double xv = X[f];
    for (std::size_t n = 0; n < N; ++n) acc[n] += xv * static_cast<double>(W[f * N + n]);
  }
  std::vector<Scalar> out(N);
  for (std::size_t n = 0; n < N; ++n) {
    const auto v = static_cast<Scalar>(acc[n]);
    out[n] = (activation == Activation::relu && !(v > Scalar{0})) ? Scalar{0} : v;
  }
  BasicTensor<Scalar> y({N}, std::move(out));
  return {y, DenseCache<Scalar>{x, y, p, activation}};
}

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const BasicTensor<Scalar>& grad_y,
                                  const DenseCache<Scalar>& cache) {
  const auto& p = cache.params;
  const std::size_t F = p.in_features(), N = p.out_features();
  require_same_shape(grad_y.shape(), {N}, "dense_backward");
  std::vector<Scalar> gy(grad_y.values());
  if (cache.activation == Activation::relu) apply_relu_mask<Scalar>(gy, cache.output.data());
  const auto X = cache.input.data();
  const auto W = p.weight.data();
  std::vector<Scalar> gw(F * N), gx(F);
  for (std::size_t f = 0; f < F; ++f) {
    double dot = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      gw[f * N + n] = static_cast<Scalar>(static_cast<double>(X[f]) * static_cast<double>(gy[n]));
      dot += static_cast<double>(gy[n]) * static_cast<double>(W[f * N + n]);
    }
    gx[f] = static_cast<Scalar>(dot);
  }
  return {BasicTensor<Scalar>({F}, std::move(gx)), BasicTensor<Scalar>({F, N}, std::move(gw)),
          BasicTensor<Scalar>({N}, std::move(gy))};
}

// ---------------------------------------------------------------- softmax

template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& logits) {
  if (logits.rank() != 1 || logits.size() < 2) {
    throw DimensionError("softmax: expected at least two logits, got " +
                         shape_string(logits.shape()));
  }
  const auto z = logits.data();
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(static_cast<double>(z[i]) - zmax);
    total += e[i];
  }
  for (auto& v : e) v /= total;
  return BasicTensor<Scalar>(logits.shape(), narrow<Scalar>(e));
}

template <typename Scalar>
BasicTensor<Scalar> softmax_backward(const BasicTensor<Scalar>& probs,
                                     const BasicTensor<Scalar>& grad_probs) {
  require_same_shape(probs.shape(), grad_probs.shape(), "softmax_backward");
  const auto p = probs.data();
  const auto g = grad_probs.data();
  double inner = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) inner += static_cast<double>(p[i]) * g[i];
  std::vector<Scalar> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = static_cast<Scalar>(static_cast<double>(p[i]) * (static_cast<double>(g[i]) - inner));
  }
  return BasicTensor<Scalar>(probs.shape(), std::move(out));
}

#define RESEMG_INSTANTIATE(S)                                                                     \
  template struct Conv1DParams<S>;                                                                \
  template struct LSTMParams<S>;                                                                  \
  template struct DenseParams<S>;                                                                 \
  template Forward<S, Conv1DCache<S>> conv1d_forward<S>(const BasicTensor<S>&,                    \
                                                        const Conv1DParams<S>&, Activation);      \
  template Conv1DGrads<S> conv1d_backward<S>(const BasicTensor<S>&, const Conv1DCache<S>&);       \
  template Forward<S, MaxPoolCache> maxpool1d_forward<S>(const BasicTensor<S>&, std::size_t);     \
  template BasicTensor<S> maxpool1d_backward<S>(const BasicTensor<S>&, const MaxPoolCache&);      \
  template Forward<S, BiLSTMCache<S>> bilstm_forward<S>(const BasicTensor<S>&,                    \
                                                        const LSTMParams<S>&,                     \
                                                        const LSTMParams<S>&);                    \
  template BiLSTMGrads<S> bilstm_backward<S>(const BasicTensor<S>&, const BiLSTMCache<S>&);       \
  template Forward<S, GlobalAvgPoolCache> global_avg_pool_forward<S>(const BasicTensor<S>&);      \
  template BasicTensor<S> global_avg_pool_backward<S>(const BasicTensor<S>&,                      \
                                                      const GlobalAvgPoolCache&);                 \
  template Forward<S, DenseCache<S>> dense_forward<S>(const BasicTensor<S>&,                      \
                                                      const DenseParams<S>&, Activation);         \
  template DenseGrads<S> dense_backward<S>(const BasicTensor<S>&, const DenseCache<S>&);          \
  template BasicTensor<S> softmax<S>(const BasicTensor<S>&);                                      \
  template BasicTensor<S> softmax_backward<S>(const BasicTensor<S>&, const BasicTensor<S>&);

RESEMG_INSTANTIATE(float)
RESEMG_INSTANTIATE(double)

#undef RESEMG_INSTANTIATE

}  // namespace resemg
