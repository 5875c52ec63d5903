#include "resemg/metrics.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

#include "resemg/errors.hpp"

namespace resemg {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : n_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw UsageError("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes, std::vector<std::size_t> counts)
    : n_(num_classes), counts_(std::move(counts)) {
  if (num_classes == 0 || counts_.size() != n_ * n_) {
    throw UsageError("confusion matrix counts must be C*C");
  }
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred) {
  if (truth >= n_ || pred >= n_) {
    throw UsageError("class index out of range for " + std::to_string(n_) + " classes");
  }
  ++counts_[truth * n_ + pred];
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < n_; ++i) t += counts_[i * n_ + i];
  return t;
}

ConfusionMatrix confusion(std::span<const std::size_t> labels, std::span<const std::size_t> preds,
                          std::size_t num_classes) {
  if (labels.size() != preds.size()) {
    throw UsageError("confusion: " + std::to_string(labels.size()) + " labels vs " +
                     std::to_string(preds.size()) + " predictions");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], preds[i]);
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw UsageError("accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassRates per_class_rates(const ConfusionMatrix& cm, std::size_t k) {
  const std::size_t n = cm.num_classes();
  if (k >= n) throw UsageError("per_class_rates: class " + std::to_string(k) + " out of range");
  std::size_t row = 0, col = 0;
  for (std::size_t j = 0; j < n; ++j) {
    row += cm(k, j);
    col += cm(j, k);
  }
  const std::size_t tp = cm(k, k);
  const std::size_t fn = row - tp;
  const std::size_t fp = col - tp;
  const std::size_t tn = cm.total() - tp - fn - fp;
  return {ratio(tp, tp + fn), ratio(tn, tn + fp), ratio(tp, tp + fp)};
}

double macro_average(std::span<const std::optional<double>> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) throw UsageError("macro_average: no defined per-class values");
  return sum / static_cast<double>(n);
}

ClassReport make_report(const ConfusionMatrix& cm, std::vector<std::string> class_names) {
  if (class_names.size() != cm.num_classes()) {
    throw UsageError("make_report: class name count does not match matrix");
  }
  ClassReport r{std::move(class_names), cm, accuracy(cm), {}, 0.0, 0.0};
  std::vector<std::optional<double>> sens, spec;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    r.per_class.push_back(per_class_rates(cm, k));
    sens.push_back(r.per_class.back().sensitivity);
    spec.push_back(r.per_class.back().specificity);
  }
  r.macro_sensitivity = macro_average(sens);
  r.macro_specificity = macro_average(spec);
  return r;
}

std::string report_json(const ClassReport& report) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    const auto& c = report.per_class[k];
    j["per_class"].push_back({{"class", report.class_names[k]},
                              {"sensitivity", opt(c.sensitivity)},
                              {"specificity", opt(c.specificity)},
                              {"precision", opt(c.precision)}});
  }
  j["macro_sensitivity"] = report.macro_sensitivity;
  j["macro_specificity"] = report.macro_specificity;
  const std::size_t n = report.matrix.num_classes();
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < n; ++k) row.push_back(report.matrix(i, k));
    rows.push_back(row);
  }
  j["confusion_matrix"] = rows;
  return j.dump(2);
}

std::string report_text(const ClassReport& report) {
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("     n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.2f", 100.0 * *v);
    return std::string(buf);
  };
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s %11s %11s %11s\n", "class", "sensitivity", "specificity",
                "precision");
  os << buf;
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    const auto& c = report.per_class[k];
    std::snprintf(buf, sizeof buf, "%-10s    %s    %s    %s\n", report.class_names[k].c_str(),
                  pct(c.sensitivity).c_str(), pct(c.specificity).c_str(), pct(c.precision).c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "accuracy %.2f%%  macro sensitivity %.2f%%  macro specificity %.2f%%\n",
                100.0 * report.accuracy, 100.0 * report.macro_sensitivity,
                100.0 * report.macro_specificity);
  os << buf << "confusion matrix (rows = true, cols = predicted):\n";
  const std::size_t n = report.matrix.num_classes();
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "  %-10s", report.class_names[i].c_str());
    os << buf;
    for (std::size_t k = 0; k < n; ++k) {
      std::snprintf(buf, sizeof buf, " %6zu", report.matrix(i, k));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace resemg
