#pragma once

// Central finite-difference oracle for the analytic backward passes.
//
// Everything here evaluates in double precision; layers are checked through
// their double instantiation so rounding noise stays far below the
// threshold.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace resemg::gradcheck {

/// Default per-coordinate step: h = kDefaultStep * max(1, |theta_i|).
inline constexpr double kDefaultStep = 1e-3;

/// (f(theta + h e_i) - f(theta - h e_i)) / 2h. Throws OracleError on a
/// non-finite function value.
double finite_diff(const std::function<double(std::span<const double>)>& f,
                   std::span<const double> theta, std::size_t i, double h);

/// Full numeric gradient with the relative step rule above.
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> theta,
                                     double step = kDefaultStep);

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

struct ParamBlock {
  std::string name;
  std::span<double> values;  // perturbed in place, always restored
};

/// A scalar loss over named parameter blocks plus its analytic gradient.
struct Problem {
  std::vector<ParamBlock> blocks;
  std::function<double()> loss;
  /// One gradient vector per block, same lengths as the blocks.
  std::function<std::vector<std::vector<double>>()> analytic;
  /// Optional fingerprint of the non-differentiable branch choices made by
  /// the forward pass (ReLU masks, pooling argmax). A coordinate whose ±h
  /// perturbation changes it straddles a kink and is skipped.
  std::function<std::vector<std::uint8_t>()> kink_signature;
};

struct Options {
  double threshold = 1e-4;
  double step = kDefaultStep;
  /// Coordinates sampled across all blocks; 0 checks every coordinate.
  std::size_t sample = 0;
  std::uint64_t seed = 0;
};

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

struct Report {
  std::string label;
  std::vector<TensorCheck> tensors;
  double step = kDefaultStep;
  double threshold = 1e-4;
  bool passed = false;

  double max_rel_error() const;
  std::size_t checked() const;
};

/// Compares every (or a sampled subset of) analytic gradient entries
/// against central differences.
Report check(const std::string& label, Problem& problem, const Options& options);

std::string to_text(const Report& report);
std::string to_json(const std::vector<Report>& reports);

// ---- canned instances used by the test suites and the `gradcheck` command

/// Random small instances of every layer type, each checked at 1e-4.
std::vector<Report> check_layers(std::uint64_t seed);

/// End-to-end cross-entropy gradient of the full network at a reduced input
/// length, over `sample` randomly chosen parameters, at 1e-3.
Report check_model(std::uint64_t seed, std::size_t input_length = 64, std::size_t sample = 20);

}  // namespace resemg::gradcheck
