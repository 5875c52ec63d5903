#include "resemg/gradcheck.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <set>
#include <sstream>

#include "resemg/errors.hpp"
#include "resemg/model.hpp"
#include "resemg/nn_ops.hpp"
#include "resemg/optimization.hpp"
#include "resemg/random.hpp"

namespace resemg::gradcheck {

double finite_diff(const std::function<double(std::span<const double>)>& f,
                   std::span<const double> theta, std::size_t i, double h) {
  if (!(h > 0)) throw UsageError("finite_diff: step must be positive");
  if (i >= theta.size()) throw UsageError("finite_diff: coordinate out of range");
  std::vector<double> probe(theta.begin(), theta.end());
  probe[i] = theta[i] + h;
  const double up = f(probe);
  probe[i] = theta[i] - h;
  const double down = f(probe);
  if (!std::isfinite(up) || !std::isfinite(down)) {
    throw OracleError("finite_diff: non-finite function value at coordinate " + std::to_string(i));
  }
  return (up - down) / (2.0 * h);
}

std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> theta, double step) {
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    g[i] = finite_diff(f, theta, i, step * std::max(1.0, std::abs(theta[i])));
  }
  return g;
}

double relative_error(double analytic, double numeric) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / den;
}

double Report::max_rel_error() const {
  double m = 0.0;
  for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
  return m;
}

std::size_t Report::checked() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.checked;
  return n;
}

Report check(const std::string& label, Problem& problem, const Options& options) {
  Report report{label, {}, options.step, options.threshold, false};
  const auto analytic = problem.analytic();
  if (analytic.size() != problem.blocks.size()) {
    throw UsageError("gradcheck: analytic gradient block count mismatch");
  }
  std::size_t total = 0;
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    if (analytic[b].size() != problem.blocks[b].values.size()) {
      throw UsageError("gradcheck: analytic gradient size mismatch for " + problem.blocks[b].name);
    }
    total += problem.blocks[b].values.size();
  }
  for (const auto& block : problem.blocks) report.tensors.push_back({block.name, 0.0, 0, 0});

  const auto baseline = problem.kink_signature ? problem.kink_signature() : std::vector<std::uint8_t>{};
  // Returns false when the coordinate straddles a kink and was skipped.
  auto probe = [&](std::size_t b, std::size_t i) {
    auto& block = problem.blocks[b];
    auto& tc = report.tensors[b];
    const double original = block.values[i];
    const double h = options.step * std::max(1.0, std::abs(original));
    block.values[i] = original + h;
    const double up = problem.loss();
    const bool kink_up = problem.kink_signature && problem.kink_signature() != baseline;
    block.values[i] = original - h;
    const double down = problem.loss();
    const bool kink_down = problem.kink_signature && problem.kink_signature() != baseline;
    block.values[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("gradcheck " + label + ": non-finite loss perturbing " + block.name);
    }
    if (kink_up || kink_down) {
      ++tc.skipped;
      return false;
    }
    const double numeric = (up - down) / (2.0 * h);
    tc.max_rel_error = std::max(tc.max_rel_error, relative_error(analytic[b][i], numeric));
    ++tc.checked;
    return true;
  };

  if (options.sample == 0 || options.sample >= total) {
    for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
      for (std::size_t i = 0; i < problem.blocks[b].values.size(); ++i) probe(b, i);
    }
  } else {
    // One coordinate per block first, then uniform draws over all parameters;
    // skipped kink coordinates are replaced so `sample` entries get compared.
    Rng rng(options.seed);
    std::set<std::pair<std::size_t, std::size_t>> tried;
    std::size_t checked = 0;
    for (std::size_t b = 0; b < problem.blocks.size() && checked < options.sample; ++b) {
      const std::size_t i = rng.below(problem.blocks[b].values.size());
      tried.emplace(b, i);
      checked += probe(b, i);
    }
    const std::size_t max_draws = 50 * options.sample;
    for (std::size_t draws = 0; checked < options.sample && tried.size() < total && draws < max_draws; ++draws) {
      std::size_t flat = rng.below(total), b = 0;
      while (flat >= problem.blocks[b].values.size()) flat -= problem.blocks[b++].values.size();
      if (!tried.emplace(b, flat).second) continue;
      checked += probe(b, flat);
    }
  }
  const bool sampled = options.sample != 0 && options.sample < total;
  report.passed = report.checked() >= (sampled ? options.sample : 1) && report.max_rel_error() < options.threshold;
  return report;
}

std::string to_text(const Report& report) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-4s %-24s max rel err %.3e (threshold %.0e, step %.0e)\n",
                report.passed ? "PASS" : "FAIL", report.label.c_str(), report.max_rel_error(),
                report.threshold, report.step);
  os << buf;
  for (const auto& t : report.tensors) {
    std::snprintf(buf, sizeof buf, "       %-22s %.3e  checked %zu skipped %zu\n", t.name.c_str(),
                  t.max_rel_error, t.checked, t.skipped);
    os << buf;
  }
  return os.str();
}

std::string to_json(const std::vector<Report>& reports) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["label"] = r.label;
    j["passed"] = r.passed;
    j["max_rel_error"] = r.max_rel_error();
    j["threshold"] = r.threshold;
    j["step"] = r.step;
    j["tensors"] = nlohmann::ordered_json::array();
    for (const auto& t : r.tensors) {
      j["tensors"].push_back({{"name", t.name},
                              {"max_rel_error", t.max_rel_error},
                              {"checked", t.checked},
                              {"skipped", t.skipped}});
    }
    out.push_back(j);
  }
  return out.dump(2);
}

// ---------------------------------------------------------------- canned instances

namespace {

void randomize(Tensor64& t, Rng& rng, double scale = 1.0) {
  for (auto& v : t.mutable_data()) v = rng.uniform(-scale, scale);
}

Tensor64 random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  auto t = Tensor64::zeros(shape);
  randomize(t, rng, scale);
  return t;
}

std::vector<double> as_vector(const Tensor64& t) { return t.values(); }

double project(const Tensor64& y, const Tensor64& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

std::vector<std::uint8_t> positive_mask(const Tensor64& t) {
  std::vector<std::uint8_t> m(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) m[i] = t[i] > 0.0;
  return m;
}

void append_argmax(std::vector<std::uint8_t>& sig, const MaxPoolCache& cache) {
  for (auto idx : cache.argmax) {
    for (int b = 0; b < 4; ++b) sig.push_back(static_cast<std::uint8_t>(idx >> (8 * b)));
  }
}

Report conv_case(const std::string& label, Rng& rng, std::size_t T, std::size_t cin,
                 std::size_t cout, std::size_t K, Padding padding, Activation act) {
  auto x = std::make_shared<Tensor64>(random_tensor({T, cin}, rng));
  auto p = std::make_shared<Conv1DParams<double>>(Conv1DParams<double>::zeros(K, cin, cout, padding));
  randomize(p->kernel, rng);
  randomize(p->bias, rng, 0.5);
  const std::size_t out_len = padding == Padding::same ? T : T - K + 1;
  auto r = std::make_shared<Tensor64>(random_tensor({out_len, cout}, rng));
  Problem prob;
  prob.blocks = {{"input", x->mutable_data()},
                 {"kernel", p->kernel.mutable_data()},
                 {"bias", p->bias.mutable_data()}};
  prob.loss = [=] { return project(conv1d_forward(*x, *p, act).output, *r); };
  prob.analytic = [=] {
    auto f = conv1d_forward(*x, *p, act);
    auto g = conv1d_backward(*r, f.cache);
    return std::vector<std::vector<double>>{as_vector(g.input), as_vector(g.kernel), as_vector(g.bias)};
  };
  if (act == Activation::relu) {
    prob.kink_signature = [=] { return positive_mask(conv1d_forward(*x, *p, act).output); };
  }
  return check(label, prob, {});
}

Report maxpool_case(Rng& rng) {
  auto x = std::make_shared<Tensor64>(random_tensor({9, 3}, rng));
  auto r = std::make_shared<Tensor64>(random_tensor({4, 3}, rng));
  Problem prob;
  prob.blocks = {{"input", x->mutable_data()}};
  prob.loss = [=] { return project(maxpool1d_forward(*x, 2).output, *r); };
  prob.analytic = [=] {
    auto f = maxpool1d_forward(*x, 2);
    return std::vector<std::vector<double>>{as_vector(maxpool1d_backward(*r, f.cache))};
  };
  prob.kink_signature = [=] {
    std::vector<std::uint8_t> sig;
    append_argmax(sig, maxpool1d_forward(*x, 2).cache);
    return sig;
  };
  return check("maxpool1d", prob, {});
}

Report bilstm_case(const std::string& label, Rng& rng, std::size_t T, std::size_t cin,
                   std::size_t H) {
  auto x = std::make_shared<Tensor64>(random_tensor({T, cin}, rng));
  auto fwd = std::make_shared<LSTMParams<double>>(LSTMParams<double>::zeros(cin, H));
  auto bwd = std::make_shared<LSTMParams<double>>(LSTMParams<double>::zeros(cin, H));
  for (auto* p : {fwd.get(), bwd.get()}) {
    randomize(p->w_input, rng);
    randomize(p->w_recurrent, rng);
    randomize(p->bias, rng, 0.5);
  }
  auto r = std::make_shared<Tensor64>(random_tensor({T, 2 * H}, rng));
  Problem prob;
  prob.blocks = {{"input", x->mutable_data()},
                 {"fwd.w_input", fwd->w_input.mutable_data()},
                 {"fwd.w_recurrent", fwd->w_recurrent.mutable_data()},
                 {"fwd.bias", fwd->bias.mutable_data()},
                 {"bwd.w_input", bwd->w_input.mutable_data()},
                 {"bwd.w_recurrent", bwd->w_recurrent.mutable_data()},
                 {"bwd.bias", bwd->bias.mutable_data()}};
  prob.loss = [=] { return project(bilstm_forward(*x, *fwd, *bwd).output, *r); };
  prob.analytic = [=] {
    auto f = bilstm_forward(*x, *fwd, *bwd);
    auto g = bilstm_backward(*r, f.cache);
    return std::vector<std::vector<double>>{as_vector(g.input),          as_vector(g.fwd.w_input),
                       as_vector(g.fwd.w_recurrent), as_vector(g.fwd.bias),
                       as_vector(g.bwd.w_input),     as_vector(g.bwd.w_recurrent),
                       as_vector(g.bwd.bias)};
  };
  return check(label, prob, {});
}

Report gap_case(Rng& rng) {
  auto x = std::make_shared<Tensor64>(random_tensor({6, 4}, rng));
  auto r = std::make_shared<Tensor64>(random_tensor({4}, rng));
  Problem prob;
  prob.blocks = {{"input", x->mutable_data()}};
  prob.loss = [=] { return project(global_avg_pool_forward(*x).output, *r); };
  prob.analytic = [=] {
    auto f = global_avg_pool_forward(*x);
    return std::vector<std::vector<double>>{as_vector(global_avg_pool_backward(*r, f.cache))};
  };
  return check("global_avg_pool", prob, {});
}

Report dense_case(const std::string& label, Rng& rng, Activation act) {
  auto x = std::make_shared<Tensor64>(random_tensor({6}, rng));
  auto p = std::make_shared<DenseParams<double>>(DenseParams<double>::zeros(6, 5));
  randomize(p->weight, rng);
  randomize(p->bias, rng, 0.5);
  auto r = std::make_shared<Tensor64>(random_tensor({5}, rng));
  Problem prob;
  prob.blocks = {{"input", x->mutable_data()},
                 {"weight", p->weight.mutable_data()},
                 {"bias", p->bias.mutable_data()}};
  prob.loss = [=] { return project(dense_forward(*x, *p, act).output, *r); };
  prob.analytic = [=] {
    auto f = dense_forward(*x, *p, act);
    auto g = dense_backward(*r, f.cache);
    return std::vector<std::vector<double>>{as_vector(g.input), as_vector(g.weight), as_vector(g.bias)};
  };
  if (act == Activation::relu) {
    prob.kink_signature = [=] { return positive_mask(dense_forward(*x, *p, act).output); };
  }
  return check(label, prob, {});
}

Report softmax_case(Rng& rng) {
  auto z = std::make_shared<Tensor64>(random_tensor({4}, rng, 2.0));
  auto r = std::make_shared<Tensor64>(random_tensor({4}, rng));
  Problem prob;
  prob.blocks = {{"logits", z->mutable_data()}};
  prob.loss = [=] { return project(softmax(*z), *r); };
  prob.analytic = [=] { return std::vector<std::vector<double>>{as_vector(softmax_backward(softmax(*z), *r))}; };
  return check("softmax", prob, {});
}

Report residual_case(Rng& rng) {
  auto a = std::make_shared<Tensor64>(random_tensor({5, 3}, rng));
  auto b = std::make_shared<Tensor64>(random_tensor({5, 3}, rng));
  auto r = std::make_shared<Tensor64>(random_tensor({5, 3}, rng));
  Problem prob;
  prob.blocks = {{"lhs", a->mutable_data()}, {"rhs", b->mutable_data()}};
  prob.loss = [=] { return project(ew_add(*a, *b), *r); };
  // The join's backward is the identity onto both operands.
  prob.analytic = [=] { return std::vector<std::vector<double>>{as_vector(*r), as_vector(*r)}; };
  return check("residual_add", prob, {});
}

}  // namespace

std::vector<Report> check_layers(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Report> out;
  out.push_back(conv_case("conv1d_same", rng, 7, 3, 4, 3, Padding::same, Activation::none));
  out.push_back(conv_case("conv1d_same_relu", rng, 8, 2, 3, 3, Padding::same, Activation::relu));
  out.push_back(conv_case("conv1d_valid", rng, 7, 2, 3, 3, Padding::valid, Activation::none));
  out.push_back(conv_case("conv1d_k1", rng, 5, 3, 6, 1, Padding::same, Activation::none));
  out.push_back(maxpool_case(rng));
  out.push_back(bilstm_case("bilstm", rng, 3, 2, 2));
  out.push_back(bilstm_case("bilstm_wide", rng, 5, 3, 4));
  out.push_back(gap_case(rng));
  out.push_back(dense_case("dense", rng, Activation::none));
  out.push_back(dense_case("dense_relu", rng, Activation::relu));
  out.push_back(softmax_case(rng));
  out.push_back(residual_case(rng));
  return out;
}

Report check_model(std::uint64_t seed, std::size_t input_length, std::size_t sample) {
  ModelConfig cfg;
  cfg.input_length = input_length;
  cfg.rng_seed = seed;
  auto params = std::make_shared<ModelParams<double>>(init_params(cfg).cast<double>());
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  // Non-zero biases so every bias coordinate carries signal.
  params->for_each([&](std::string_view name, Tensor64& t) {
    if (name.ends_with("bias")) {
      for (auto& v : t.mutable_data()) v += rng.uniform(-0.1, 0.1);
    }
  });
  auto x = std::make_shared<Tensor64>(random_tensor({input_length, 1}, rng));
  const std::size_t target = rng.below(cfg.num_classes);

  Problem prob;
  params->for_each([&](std::string_view name, Tensor64& t) {
    prob.blocks.push_back({std::string(name), t.mutable_data()});
  });
  prob.loss = [=] { return cross_entropy(forward(*params, *x).probs, target).loss; };
  prob.analytic = [=] {
    auto f = forward(*params, *x);
    auto g = backward_from_logits(f.cache, cross_entropy(f.probs, target).grad_logits);
    std::vector<std::vector<double>> out;
    g.params.for_each([&](std::string_view, const Tensor64& t) { out.push_back(t.values()); });
    return out;
  };
  prob.kink_signature = [=] {
    auto f = forward(*params, *x);
    auto sig = positive_mask(f.cache.conv2.input);  // conv1 output
    auto m2 = positive_mask(f.cache.conv2.output);
    auto m3 = positive_mask(f.cache.dense1.output);
    sig.insert(sig.end(), m2.begin(), m2.end());
    sig.insert(sig.end(), m3.begin(), m3.end());
    append_argmax(sig, f.cache.pool);
    return sig;
  };
  Options opts;
  opts.threshold = 1e-3;
  opts.sample = sample;
  opts.seed = seed;
  return check("model_end_to_end", prob, opts);
}

}  // namespace resemg::gradcheck
