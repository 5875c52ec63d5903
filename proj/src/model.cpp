#include "resemg/model.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "resemg/binary_io.hpp"
#include "resemg/random.hpp"

namespace resemg {

void ModelConfig::validate() const {
  if (num_classes < 2) throw UsageError("num_classes must be at least 2");
  if (input_length < 4) throw UsageError("input_length must be at least 4");
  if (conv1_filters == 0 || conv2_filters == 0 || kernel_size == 0 || lstm_units == 0 ||
      dense_units == 0) {
    throw UsageError("layer widths must be positive");
  }
}

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t H = cfg.lstm_units;
  return {Conv1DParams<Scalar>::zeros(cfg.kernel_size, 1, cfg.conv1_filters),
          Conv1DParams<Scalar>::zeros(cfg.kernel_size, cfg.conv1_filters, cfg.conv2_filters),
          LSTMParams<Scalar>::zeros(cfg.conv2_filters, H),
          LSTMParams<Scalar>::zeros(cfg.conv2_filters, H),
          Conv1DParams<Scalar>::zeros(1, cfg.conv2_filters, 2 * H),
          DenseParams<Scalar>::zeros(2 * H, cfg.dense_units),
          DenseParams<Scalar>::zeros(cfg.dense_units, cfg.num_classes),
          cfg.num_classes};
}

template <typename Scalar>
template <typename Other>
ModelParams<Other> ModelParams<Scalar>::cast() const {
  auto conv = [](const Conv1DParams<Scalar>& p) {
    return Conv1DParams<Other>{p.kernel.template cast<Other>(), p.bias.template cast<Other>(),
                               p.padding};
  };
  auto lstm = [](const LSTMParams<Scalar>& p) {
    return LSTMParams<Other>{p.w_input.template cast<Other>(),
                             p.w_recurrent.template cast<Other>(), p.bias.template cast<Other>()};
  };
  auto dense = [](const DenseParams<Scalar>& p) {
    return DenseParams<Other>{p.weight.template cast<Other>(), p.bias.template cast<Other>()};
  };
  return {conv(conv1), conv(conv2), lstm(lstm_fwd), lstm(lstm_bwd), conv(path1),
          dense(dense1), dense(dense_out), num_classes};
}

namespace {

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.mutable_data()) v = static_cast<float>(rng.uniform(-limit, limit));
}

void glorot_conv(Conv1DParams<float>& p, Rng& rng) {
  const std::size_t field = p.kernel_size();
  glorot_uniform(p.kernel, field * p.in_channels(), field * p.out_channels(), rng);
}

// Rows of the (H, 4H) kernel are orthonormal: Gram-Schmidt on the columns of
// a (4H, H) Gaussian matrix, then transpose.
void orthogonal_rows(Tensor& w, Rng& rng) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  std::vector<std::vector<double>> basis(rows, std::vector<double>(cols));
  for (auto& v : basis) {
    for (auto& x : v) x = rng.normal();
  }
  for (std::size_t i = 0; i < rows; ++i) {
    // Two passes of modified Gram-Schmidt keep the basis orthogonal to ~1e-15.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < cols; ++k) dot += basis[i][k] * basis[j][k];
        for (std::size_t k = 0; k < cols; ++k) basis[i][k] -= dot * basis[j][k];
      }
    }
    double norm = 0.0;
    for (auto x : basis[i]) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : basis[i]) x /= norm;
  }
  auto out = w.mutable_data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < cols; ++k) out[i * cols + k] = static_cast<float>(basis[i][k]);
  }
}

void init_lstm(LSTMParams<float>& p, Rng& rng) {
  const std::size_t H = p.units();
  glorot_uniform(p.w_input, p.in_channels(), 4 * H, rng);
  orthogonal_rows(p.w_recurrent, rng);
  auto b = p.bias.mutable_data();
  for (std::size_t j = 0; j < H; ++j) b[H + j] = 1.0f;
}

}  // namespace

ModelParams<float> init_params(const ModelConfig& cfg) {
  auto p = ModelParams<float>::zeros(cfg);
  Rng rng(cfg.rng_seed);
  glorot_conv(p.conv1, rng);
  glorot_conv(p.conv2, rng);
  init_lstm(p.lstm_fwd, rng);
  init_lstm(p.lstm_bwd, rng);
  glorot_conv(p.path1, rng);
  glorot_uniform(p.dense1.weight, p.dense1.in_features(), p.dense1.out_features(), rng);
  glorot_uniform(p.dense_out.weight, p.dense_out.in_features(), p.dense_out.out_features(), rng);
  return p;
}

template <typename Scalar>
ModelForward<Scalar> forward(const ModelParams<Scalar>& params, const BasicTensor<Scalar>& x) {
  if (x.rank() != 2 || x.dim(1) != 1) {
    throw DimensionError("model input must be (T, 1), got " + shape_string(x.shape()));
  }
  auto c1 = conv1d_forward(x, params.conv1, Activation::relu);
  auto c2 = conv1d_forward(c1.output, params.conv2, Activation::relu);
  auto pool = maxpool1d_forward(c2.output, 2);
  auto lstm = bilstm_forward(pool.output, params.lstm_fwd, params.lstm_bwd);
  auto skip = conv1d_forward(pool.output, params.path1, Activation::none);
  auto joined = ew_add(lstm.output, skip.output);
  auto gap = global_avg_pool_forward(joined);
  auto d1 = dense_forward(gap.output, params.dense1, Activation::relu);
  auto head = dense_forward(d1.output, params.dense_out, Activation::none);
  auto probs = softmax(head.output);
  ModelCache<Scalar> cache{std::move(c1.cache),  std::move(c2.cache),  std::move(pool.cache),
                           std::move(lstm.cache), std::move(skip.cache), std::move(gap.cache),
                           std::move(d1.cache),   std::move(head.cache), probs};
  return {probs, std::move(head.output), std::move(cache)};
}

template <typename Scalar>
ModelGrads<Scalar> backward_from_logits(const ModelCache<Scalar>& cache,
                                        const BasicTensor<Scalar>& grad_logits) {
  auto g_head = dense_backward(grad_logits, cache.dense_out);
  auto g_d1 = dense_backward(g_head.input, cache.dense1);
  auto g_joined = global_avg_pool_backward(g_d1.input, cache.gap);
  // The residual join passes the same gradient to both branches.
  auto g_skip = conv1d_backward(g_joined, cache.path1);
  auto g_lstm = bilstm_backward(g_joined, cache.lstm);
  auto g_pooled = ew_add(g_lstm.input, g_skip.input);
  auto g_c2_out = maxpool1d_backward(g_pooled, cache.pool);
  auto g_c2 = conv1d_backward(g_c2_out, cache.conv2);
  auto g_c1 = conv1d_backward(g_c2.input, cache.conv1);

  const auto padding_of = [](const Conv1DCache<Scalar>& c) { return c.params.padding; };
  ModelParams<Scalar> grads{
      {std::move(g_c1.kernel), std::move(g_c1.bias), padding_of(cache.conv1)},
      {std::move(g_c2.kernel), std::move(g_c2.bias), padding_of(cache.conv2)},
      std::move(g_lstm.fwd),
      std::move(g_lstm.bwd),
      {std::move(g_skip.kernel), std::move(g_skip.bias), padding_of(cache.path1)},
      {std::move(g_d1.weight), std::move(g_d1.bias)},
      {std::move(g_head.weight), std::move(g_head.bias)},
      cache.dense_out.params.out_features()};
  return {std::move(grads), std::move(g_c1.input), std::move(g_pooled), std::move(g_lstm.input),
          std::move(g_skip.input)};
}

template <typename Scalar>
ModelGrads<Scalar> backward(const ModelCache<Scalar>& cache, const BasicTensor<Scalar>& grad_probs) {
  require_same_shape(grad_probs.shape(), cache.probs.shape(), "model backward");
  return backward_from_logits(cache, softmax_backward(cache.probs, grad_probs));
}

std::size_t argmax_class(std::span<const float> probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

std::size_t predict(const ModelParams<float>& params, const Tensor& x) {
  return argmax_class(forward(params, x).probs.data());
}

template <typename Scalar>
std::size_t parameter_count(const ModelParams<Scalar>& params) {
  std::size_t n = 0;
  params.for_each([&](std::string_view, const BasicTensor<Scalar>& t) { n += t.size(); });
  return n;
}

void check_model_input(const Tensor& x, const ModelConfig& cfg) {
  if (x.rank() != 2 || x.dim(0) != cfg.input_length || x.dim(1) != 1) {
    throw DimensionError("model input " + shape_string(x.shape()) + " does not match expected (" +
                         std::to_string(cfg.input_length) + ", 1)");
  }
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr std::string_view kCheckpointMagic = "EMGC";
constexpr std::uint8_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.tag(kCheckpointMagic);
  w.put<std::uint8_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(params.num_classes));
  std::uint32_t count = 0;
  params.for_each([&](std::string_view, const Tensor&) { ++count; });
  w.put<std::uint32_t>(count);
  params.for_each([&](std::string_view name, const Tensor& t) {
    w.string_u16(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.floats(t.data());
  });
  io::write_file_atomic(path, w.buffer());
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), "checkpoint " + path.string());
  r.expect_tag(kCheckpointMagic, "magic");
  if (auto v = r.get<std::uint8_t>("version"); v != kCheckpointVersion) {
    throw FormatError(r.context() + ": unsupported version " + std::to_string(v));
  }
  const auto num_classes = r.get<std::uint8_t>("num_classes");
  if (num_classes < 2) throw FormatError(r.context() + ": invalid num_classes " + std::to_string(num_classes));
  const auto count = r.get<std::uint32_t>("tensor count");

  std::set<std::string> known;
  ModelParams<float>::zeros(ModelConfig{}).for_each([&](const char* n, const Tensor&) { known.insert(n); });

  std::map<std::string, Tensor> tensors;
  std::string previous = "header";
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.string_u16("tensor name after " + previous);
    // A corrupt dims field desynchronises everything after it; report the
    // last record that parsed cleanly.
    if (!known.count(name)) {
      throw FormatError(r.context() + ": unknown tensor name in record " + std::to_string(i) + " (after " +
                        previous + ")");
    }
    previous = name;
    const auto rank = r.get<std::uint8_t>("rank of " + name);
    if (rank < 1 || rank > 3) throw FormatError(r.context() + ": invalid rank for " + name);
    Shape shape;
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint32_t>("dims of " + name);
      if (dim == 0) throw FormatError(r.context() + ": zero dimension in " + name);
      n *= dim;
      shape.push_back(dim);
    }
    auto data = r.floats(n, "data of " + name);
    if (!tensors.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw FormatError(r.context() + ": duplicate tensor " + name);
    }
  }
  if (r.remaining() != 0) throw FormatError(r.context() + ": trailing bytes after last tensor");

  auto take = [&](const std::string& name) -> Tensor {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError(r.context() + ": missing tensor " + name);
    return it->second;
  };
  ModelParams<float> p{
      {take("conv1.kernel"), take("conv1.bias")},
      {take("conv2.kernel"), take("conv2.bias")},
      {take("lstm_fwd.w_input"), take("lstm_fwd.w_recurrent"), take("lstm_fwd.bias")},
      {take("lstm_bwd.w_input"), take("lstm_bwd.w_recurrent"), take("lstm_bwd.bias")},
      {take("path1.kernel"), take("path1.bias")},
      {take("dense1.weight"), take("dense1.bias")},
      {take("dense_out.weight"), take("dense_out.bias")},
      num_classes};
  if (tensors.size() != 16) throw FormatError(r.context() + ": unexpected extra tensors");

  // Shape consistency across the graph, reported by the first offending field.
  auto need = [&](bool ok, const std::string& field) {
    if (!ok) throw FormatError(r.context() + ": inconsistent shape for " + field);
  };
  need(p.conv1.kernel.rank() == 3 && p.conv1.kernel.dim(1) == 1, "conv1.kernel");
  need(p.conv1.bias.shape() == Shape{p.conv1.out_channels()}, "conv1.bias");
  need(p.conv2.kernel.rank() == 3 && p.conv2.in_channels() == p.conv1.out_channels(), "conv2.kernel");
  need(p.conv2.bias.shape() == Shape{p.conv2.out_channels()}, "conv2.bias");
  for (const auto* l : {&p.lstm_fwd, &p.lstm_bwd}) {
    const std::string which = l == &p.lstm_fwd ? "lstm_fwd" : "lstm_bwd";
    need(l->w_recurrent.rank() == 2 && l->w_recurrent.dim(1) == 4 * l->w_recurrent.dim(0),
         which + ".w_recurrent");
    const std::size_t H = l->units();
    need(H == p.lstm_fwd.w_recurrent.dim(0), which + ".w_recurrent");
    need(l->w_input.shape() == Shape{p.conv2.out_channels(), 4 * H}, which + ".w_input");
    need(l->bias.shape() == Shape{4 * H}, which + ".bias");
  }
  const std::size_t H = p.lstm_fwd.units();
  need(p.path1.kernel.shape() == Shape{1, p.conv2.out_channels(), 2 * H}, "path1.kernel");
  need(p.path1.bias.shape() == Shape{2 * H}, "path1.bias");
  need(p.dense1.weight.rank() == 2 && p.dense1.in_features() == 2 * H, "dense1.weight");
  need(p.dense1.bias.shape() == Shape{p.dense1.out_features()}, "dense1.bias");
  need(p.dense_out.weight.shape() == Shape{p.dense1.out_features(), num_classes},
       "dense_out.weight");
  need(p.dense_out.bias.shape() == Shape{num_classes}, "dense_out.bias");
  return p;
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path, std::size_t expected_classes) {
  auto p = load_checkpoint(path);
  if (p.num_classes != expected_classes) {
    throw UsageError("class-count mismatch: checkpoint " + path.string() + " has " +
                     std::to_string(p.num_classes) + " classes, expected " +
                     std::to_string(expected_classes));
  }
  return p;
}

#define RESEMG_INSTANTIATE(S)                                                             \
  template struct ModelParams<S>;                                                         \
  template ModelForward<S> forward<S>(const ModelParams<S>&, const BasicTensor<S>&);      \
  template ModelGrads<S> backward<S>(const ModelCache<S>&, const BasicTensor<S>&);        \
  template ModelGrads<S> backward_from_logits<S>(const ModelCache<S>&, const BasicTensor<S>&); \
  template std::size_t parameter_count<S>(const ModelParams<S>&);

RESEMG_INSTANTIATE(float)
RESEMG_INSTANTIATE(double)

#undef RESEMG_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;

}  // namespace resemg
