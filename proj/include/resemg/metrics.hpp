#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace resemg {

/// counts[i][j] = examples of true class i predicted as class j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);
  ConfusionMatrix(std::size_t num_classes, std::vector<std::size_t> row_major_counts);

  std::size_t num_classes() const { return n_; }
  std::size_t operator()(std::size_t truth, std::size_t pred) const { return counts_[truth * n_ + pred]; }
  void add(std::size_t truth, std::size_t pred);

  std::size_t total() const;
  std::size_t trace() const;
  const std::vector<std::size_t>& counts() const { return counts_; }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t n_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion(std::span<const std::size_t> labels, std::span<const std::size_t> preds,
                          std::size_t num_classes);

/// trace / total. UsageError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

/// One-vs-rest rates. A zero denominator yields an empty optional.
struct ClassRates {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;
};

ClassRates per_class_rates(const ConfusionMatrix& cm, std::size_t k);

/// Unweighted mean of the defined values; UsageError if none are defined.
double macro_average(std::span<const std::optional<double>> values);

struct ClassReport {
  std::vector<std::string> class_names;
  ConfusionMatrix matrix;
  double accuracy = 0.0;
  std::vector<ClassRates> per_class;
  double macro_sensitivity = 0.0;
  double macro_specificity = 0.0;
};

ClassReport make_report(const ConfusionMatrix& cm, std::vector<std::string> class_names);

/// {accuracy, per_class: [...], macro_sensitivity, macro_specificity,
///  confusion_matrix}; undefined rates are null.
std::string report_json(const ClassReport& report);
std::string report_text(const ClassReport& report);

}  // namespace resemg
