#include "resemg/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include "resemg/binary_io.hpp"
#include "resemg/gradcheck.hpp"
#include "resemg/metrics.hpp"

namespace resemg::cli {

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw UsageError("invalid value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw UsageError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
}

}  // namespace

const std::vector<std::string>& Settings::keys() {
  static const std::vector<std::string> k{
      "learning_rate", "epochs",       "batch_size",     "lr_decay_factor", "lr_plateau_patience",
      "min_lr",        "early_stop_patience", "adam_beta1", "adam_beta2",   "adam_epsilon",
      "seed",          "num_classes",  "input_length",   "window_length",  "train_fraction",
      "val_fraction",  "test_fraction", "zscore"};
  return k;
}

void Settings::set_seed(std::uint64_t seed) {
  model.rng_seed = seed;
  train.rng_seed = seed;
  split.rng_seed = seed;
}

void Settings::set_classes(std::size_t classes) {
  if (classes != 2 && classes != 3) throw UsageError("classes must be 2 or 3");
  model.num_classes = classes;
}

void Settings::set(std::string_view key, std::string_view value) {
  if (key == "learning_rate") train.learning_rate = parse_number<double>(key, value);
  else if (key == "epochs") train.epochs = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") train.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "lr_decay_factor") train.lr_decay_factor = parse_number<double>(key, value);
  else if (key == "lr_plateau_patience") train.lr_plateau_patience = parse_number<std::size_t>(key, value);
  else if (key == "min_lr") train.min_lr = parse_number<double>(key, value);
  else if (key == "early_stop_patience") train.early_stop_patience = parse_number<std::size_t>(key, value);
  else if (key == "adam_beta1") train.adam_beta1 = parse_number<double>(key, value);
  else if (key == "adam_beta2") train.adam_beta2 = parse_number<double>(key, value);
  else if (key == "adam_epsilon") train.adam_epsilon = parse_number<double>(key, value);
  else if (key == "seed") set_seed(parse_number<std::uint64_t>(key, value));
  else if (key == "num_classes") set_classes(parse_number<std::size_t>(key, value));
  else if (key == "input_length") {
    model.input_length = parse_number<std::size_t>(key, value);
    prep.input_length = model.input_length;
  } else if (key == "window_length") prep.window_length = parse_number<std::size_t>(key, value);
  else if (key == "train_fraction") split.train_fraction = parse_number<double>(key, value);
  else if (key == "val_fraction") split.val_fraction = parse_number<double>(key, value);
  else if (key == "test_fraction") split.test_fraction = parse_number<double>(key, value);
  else if (key == "zscore") prep.zscore = parse_bool(key, value);
  else throw UsageError("unknown config key '" + std::string(key) + "'");
}

void load_config_file(Settings& settings, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + " line " + std::to_string(n) + ": expected key=value");
    }
    try {
      settings.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
}

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> classes;
  std::vector<std::string> overrides;  // --set key=value, applied last
};

Settings resolve(const Globals& g) {
  Settings s;
  if (!g.config.empty()) load_config_file(s, g.config);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    s.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (g.seed) s.set_seed(*g.seed);
  if (g.classes) s.set_classes(*g.classes);
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  io::write_file_atomic(path, bytes);
}

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

void check_labels(std::span<const WindowRecord> records, std::size_t num_classes,
                  const std::string& source) {
  for (const auto& r : records) {
    if (r.label >= num_classes) {
      throw UsageError("class-count mismatch: " + source + " has label " + std::to_string(r.label) +
                       " but the model has " + std::to_string(num_classes) + " classes");
    }
  }
}

// ---------------------------------------------------------------- commands

int cmd_prep(const Settings& s, const std::string& manifest, const std::string& out_dir,
             std::ostream& out) {
  s.split.validate();
  const auto metas = read_manifest(manifest, s.model.num_classes);
  const auto records = prepare_records(metas, s.prep);
  const auto split = split_by_subject(records, s.split);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  pack_dataset(split.train, dir / "train.emgw");
  pack_dataset(split.val, dir / "val.emgw");
  pack_dataset(split.test, dir / "test.emgw");

  nlohmann::ordered_json report;
  report["recordings"] = metas.size();
  report["windows"] = records.size();
  report["window_length"] = s.prep.window_length;
  report["input_length"] = s.prep.input_length;
  const std::pair<const char*, std::pair<const std::vector<WindowRecord>*, const std::vector<std::string>*>>
      parts[] = {{"train", {&split.train, &split.train_subjects}},
                 {"val", {&split.val, &split.val_subjects}},
                 {"test", {&split.test, &split.test_subjects}}};
  for (const auto& [name, p] : parts) {
    report[name] = {{"windows", p.first->size()}, {"subjects", *p.second}};
    out << name << ": " << p.first->size() << " windows from " << p.second->size() << " subjects\n";
  }
  write_text(dir / "split_report.json", report.dump(2) + "\n");
  return 0;
}

int cmd_train(Settings s, const std::string& train_path, const std::string& val_path,
              const std::string& ckpt, std::string log_path, std::ostream& out) {
  require_file(train_path, "training dataset");
  require_file(val_path, "validation dataset");
  const auto train_set = unpack_dataset(train_path);
  const auto val_set = unpack_dataset(val_path);
  s.model.input_length = train_set.front().samples.dim(0);
  check_labels(train_set, s.model.num_classes, train_path);
  check_labels(val_set, s.model.num_classes, val_path);
  if (log_path.empty()) log_path = ckpt + ".log.jsonl";
  auto result = train(s.model, train_set, val_set, s.train, [&](const EpochRecord& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %3zu  train_loss %.6f  val_loss %.6f  val_acc %.4f  lr %.3g\n",
                  e.epoch, e.train_loss, e.val_loss, e.val_accuracy, e.lr);
    out << buf << std::flush;
  });
  save_checkpoint(result.params, ckpt);
  write_text(log_path, result.log.to_ndjson());
  out << "best epoch " << result.best_epoch << "; checkpoint written to " << ckpt << "\n";
  return 0;
}

int cmd_eval(const Settings& s, bool classes_given, const std::string& ckpt,
             const std::string& data, const std::string& report_path, std::ostream& out) {
  require_file(ckpt, "checkpoint");
  require_file(data, "dataset");
  const auto params = classes_given ? load_checkpoint(ckpt, s.model.num_classes) : load_checkpoint(ckpt);
  const auto records = unpack_dataset(data);
  check_labels(records, params.num_classes, data);
  const auto ev = evaluate(params, records);
  std::vector<std::size_t> labels;
  for (const auto& r : records) labels.push_back(r.label);
  const auto report = make_report(confusion(labels, ev.predictions, params.num_classes),
                                  class_names(params.num_classes));
  out << report_text(report);
  if (!report_path.empty()) write_text(report_path, report_json(report) + "\n");
  return 0;
}

int cmd_predict(const Settings& s, const std::string& ckpt, const std::string& signal,
                std::ostream& out) {
  require_file(ckpt, "checkpoint");
  const auto params = load_checkpoint(ckpt);
  const auto recording = load_signal_file(signal);
  const auto windows = windows_from_recording(recording, 0, "predict", s.prep);
  const auto& names = class_names(params.num_classes);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto probs = forward(params, windows[w].samples).probs;
    const auto cls = argmax_class(probs.data());
    out << w << ' ' << names[cls];
    for (auto p : probs.data()) {
      char buf[16];
      std::snprintf(buf, sizeof buf, " %.4f", static_cast<double>(p));
      out << buf;
    }
    out << '\n';
  }
  return 0;
}

int cmd_gradcheck(std::size_t seeds, const std::string& json_path, std::ostream& out) {
  std::vector<gradcheck::Report> reports;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    for (auto& r : gradcheck::check_layers(seed)) {
      r.label += " seed " + std::to_string(seed);
      reports.push_back(std::move(r));
    }
    auto m = gradcheck::check_model(seed);
    m.label += " seed " + std::to_string(seed);
    reports.push_back(std::move(m));
  }
  bool ok = true;
  for (const auto& r : reports) {
    out << gradcheck::to_text(r);
    ok = ok && r.passed;
  }
  if (!json_path.empty()) write_text(json_path, gradcheck::to_json(reports) + "\n");
  out << (ok ? "all gradient checks passed\n" : "gradient check FAILED\n");
  return ok ? 0 : 1;
}

int cmd_params(const Settings& s, std::ostream& out) {
  const auto params = ModelParams<float>::zeros(s.model);
  const std::pair<const char*, std::size_t> layers[] = {
      {"conv1", params.conv1.parameter_count()},
      {"conv2", params.conv2.parameter_count()},
      {"bilstm", params.lstm_fwd.parameter_count() + params.lstm_bwd.parameter_count()},
      {"path1", params.path1.parameter_count()},
      {"dense1", params.dense1.parameter_count()},
      {"dense_out", params.dense_out.parameter_count()}};
  for (const auto& [name, n] : layers) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s %8zu\n", name, n);
    out << buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-10s %8zu\n", "total", parameter_count(params));
  out << buf;
  return 0;
}

int cmd_export_plot(const std::string& data, std::size_t n, const std::string& csv_path,
                    std::ostream& out, std::ostream& err) {
  require_file(data, "dataset");
  const auto records = unpack_dataset(data);
  if (n > records.size()) {
    err << "warning: requested " << n << " windows but dataset has " << records.size()
        << "; exporting " << records.size() << "\n";
    n = records.size();
  }
  // Round-robin over labels so a small n covers every class present.
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) by_label[records[i].label].push_back(i);
  std::vector<std::size_t> chosen;
  for (std::size_t round = 0; chosen.size() < n; ++round) {
    for (const auto& [label, idx] : by_label) {
      if (round < idx.size() && chosen.size() < n) chosen.push_back(idx[round]);
    }
  }
  std::string text = "window,time_index,amplitude,label\n";
  char buf[96];
  for (std::size_t w = 0; w < chosen.size(); ++w) {
    const auto& rec = records[chosen[w]];
    const auto samples = rec.samples.data();
    for (std::size_t t = 0; t < samples.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%zu\n", w, t, static_cast<double>(samples[t]), rec.label);
      text += buf;
    }
  }
  if (csv_path.empty() || csv_path == "-") {
    out << text;
  } else {
    write_text(csv_path, text);
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ResEMGNet: residual CNN-BiLSTM classifier for raw EMG windows", "resemg"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name
  Globals g;
  app.add_option("--config", g.config, "flat key=value settings file");
  app.add_option("--seed", g.seed, "seed for initialization, shuffling and splitting");
  app.add_option("--classes", g.classes, "operating mode: 3 (myopathy/normal/als) or 2 (normal/als)")
      ->check(CLI::IsMember({2, 3}));
  app.add_option("--set", g.overrides, "override a config key (key=value), repeatable");

  std::string manifest, out_dir, train_path, val_path, ckpt, log_path, data, report, signal,
      json_path, csv_path;
  std::size_t seeds = 3, n_windows = 3;

  auto* prep = app.add_subcommand("prep", "window, resample and split a recording manifest");
  prep->add_option("--manifest", manifest, "CSV manifest")->required();
  prep->add_option("--out", out_dir, "output directory")->required();

  auto* trn = app.add_subcommand("train", "train and write the best-validation checkpoint");
  trn->add_option("--train", train_path, "packed training dataset")->required();
  trn->add_option("--val", val_path, "packed validation dataset")->required();
  trn->add_option("--out", ckpt, "checkpoint path")->required();
  trn->add_option("--log", log_path, "per-epoch NDJSON log (default <out>.log.jsonl)");

  auto* ev = app.add_subcommand("eval", "confusion matrix and per-class metrics");
  ev->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  ev->add_option("--data", data, "packed dataset")->required();
  ev->add_option("--report", report, "JSON report path");

  auto* pred = app.add_subcommand("predict", "classify every window of a raw recording");
  pred->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  pred->add_option("--signal", signal, "EMGS signal file")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every layer and the model");
  gc->add_option("--seeds", seeds, "number of random instances per layer");
  gc->add_option("--json", json_path, "JSON report path");

  auto* prm = app.add_subcommand("params", "trainable parameter counts per layer");

  auto* plot = app.add_subcommand("export-plot", "dump sample windows as CSV for plotting");
  plot->add_option("--data", data, "packed dataset")->required();
  plot->add_option("--n", n_windows, "number of windows");
  plot->add_option("--out", csv_path, "CSV path (default standard output)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto s = resolve(g);
    if (*prep) return cmd_prep(s, manifest, out_dir, out);
    if (*trn) return cmd_train(s, train_path, val_path, ckpt, log_path, out);
    if (*ev) return cmd_eval(s, g.classes.has_value(), ckpt, data, report, out);
    if (*pred) return cmd_predict(s, ckpt, signal, out);
    if (*gc) return cmd_gradcheck(seeds, json_path, out);
    if (*prm) return cmd_params(s, out);
    if (*plot) return cmd_export_plot(data, n_windows, csv_path, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace resemg::cli
