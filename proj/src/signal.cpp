#include "resemg/signal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "resemg/binary_io.hpp"
#include "resemg/random.hpp"

namespace resemg {

namespace {

constexpr std::string_view kSignalMagic = "EMGS";
constexpr std::string_view kDatasetMagic = "EMGW";
constexpr std::uint8_t kFormatVersion = 1;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

const std::vector<std::string>& class_names(std::size_t num_classes) {
  static const std::vector<std::string> three{"myopathy", "normal", "als"};
  static const std::vector<std::string> two{"normal", "als"};
  if (num_classes == 3) return three;
  if (num_classes == 2) return two;
  throw UsageError("unsupported class count " + std::to_string(num_classes) + " (expected 2 or 3)");
}

std::size_t parse_label(std::string_view token, std::size_t num_classes) {
  const auto& names = class_names(num_classes);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == token) return i;
  }
  throw UsageError("unknown label '" + std::string(token) + "' for " +
                   std::to_string(num_classes) + "-class mode");
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0 && val_fraction > 0 && test_fraction > 0)) {
    throw UsageError("split fractions must be positive");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw UsageError("split fractions must sum to 1");
  }
}

std::vector<RecordingMeta> read_manifest(const std::filesystem::path& manifest,
                                         std::size_t num_classes) {
  std::ifstream in(manifest);
  if (!in) throw IngestionError("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) != std::vector<std::string>{"path", "label", "subject_id", "sample_rate"}) {
    throw IngestionError(manifest.string() +
                         ": expected header 'path,label,subject_id,sample_rate'");
  }
  std::vector<RecordingMeta> out;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (trim(line).empty()) continue;
    const auto where = manifest.string() + " line " + std::to_string(line_no);
    auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw IngestionError(where + ": expected 4 fields, got " + std::to_string(fields.size()));
    }
    RecordingMeta meta;
    std::filesystem::path p(fields[0]);
    meta.path = p.is_relative() ? base / p : p;
    try {
      meta.label = parse_label(fields[1], num_classes);
    } catch (const UsageError& e) {
      throw IngestionError(where + ": " + e.what());
    }
    if (fields[2].empty()) throw IngestionError(where + ": empty subject_id");
    meta.subject_id = fields[2];
    try {
      std::size_t used = 0;
      const auto rate = std::stoul(fields[3], &used);
      if (used != fields[3].size() || rate == 0 || rate > std::numeric_limits<std::uint32_t>::max()) {
        throw std::invalid_argument("rate");
      }
      meta.sample_rate_hz = static_cast<std::uint32_t>(rate);
    } catch (const std::exception&) {
      throw IngestionError(where + ": invalid sample_rate '" + fields[3] + "'");
    }
    out.push_back(std::move(meta));
  }
  if (out.empty()) throw IngestionError(manifest.string() + ": no recordings listed");
  return out;
}

Tensor load_signal_file(const std::filesystem::path& path) {
  try {
    io::ByteReader r(io::read_file(path), "signal " + path.string());
    r.expect_tag(kSignalMagic, "magic");
    if (auto v = r.get<std::uint8_t>("version"); v != kFormatVersion) {
      throw FormatError(r.context() + ": unsupported version " + std::to_string(v));
    }
    const auto n = r.get<std::uint32_t>("sample count");
    if (n == 0) throw FormatError(r.context() + ": empty payload");
    auto samples = r.floats(n, "samples");
    if (r.remaining() != 0) throw FormatError(r.context() + ": trailing bytes after samples");
    return Tensor({n, 1}, std::move(samples));
  } catch (const IngestionError&) {
    throw;
  } catch (const Error& e) {
    throw IngestionError(e.what());
  }
}

Tensor load_recording(const RecordingMeta& meta) { return load_signal_file(meta.path); }

void save_signal_file(const std::filesystem::path& path, std::span<const float> samples) {
  if (samples.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw UsageError("signal too long for the EMGS format");
  }
  io::ByteWriter w;
  w.tag(kSignalMagic);
  w.put<std::uint8_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(samples.size()));
  w.floats(samples);
  io::write_file_atomic(path, w.buffer());
}

std::vector<Tensor> segment_windows(const Tensor& x, std::size_t window_len) {
  if (window_len == 0) throw UsageError("window length must be positive");
  if (x.rank() != 2 || x.dim(1) != 1) {
    throw DimensionError("segment_windows: expected (N, 1), got " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  if (n < window_len) {
    throw IngestionError("recording of " + std::to_string(n) + " samples is shorter than one " +
                         std::to_string(window_len) + "-sample window");
  }
  std::vector<Tensor> windows;
  const auto data = x.data();
  for (std::size_t start = 0; start + window_len <= n; start += window_len) {
    windows.emplace_back(Shape{window_len, 1},
                         std::vector<float>(data.begin() + static_cast<std::ptrdiff_t>(start),
                                            data.begin() + static_cast<std::ptrdiff_t>(start + window_len)));
  }
  return windows;
}

Tensor resample_to_length(const Tensor& x, std::size_t target_len) {
  if (x.rank() != 2 || x.dim(1) != 1) {
    throw DimensionError("resample_to_length: expected (L, 1), got " + shape_string(x.shape()));
  }
  const std::size_t L = x.dim(0);
  if (L < 2) throw IngestionError("cannot resample a signal of fewer than 2 samples");
  if (target_len < 2) throw UsageError("resample target length must be at least 2");
  const auto in = x.data();
  std::vector<float> out(target_len);
  const double span_in = static_cast<double>(L - 1);
  const double span_out = static_cast<double>(target_len - 1);
  for (std::size_t i = 0; i < target_len; ++i) {
    const double pos = static_cast<double>(i) * span_in / span_out;
    const auto lo = std::min(static_cast<std::size_t>(pos), L - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) {
      out[i] = in[lo];
    } else {
      const double a = in[lo], b = in[lo + 1];
      out[i] = static_cast<float>(a + frac * (b - a));
    }
  }
  return Tensor({target_len, 1}, std::move(out));
}

Tensor zscore(const Tensor& x) {
  const auto in = x.data();
  double mean = 0.0;
  for (auto v : in) mean += v;
  mean /= static_cast<double>(in.size());
  double var = 0.0;
  for (auto v : in) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(in.size()));
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = sd > 0.0 ? static_cast<float>((in[i] - mean) / sd) : 0.0f;
  }
  return Tensor(x.shape(), std::move(out));
}

std::vector<WindowRecord> windows_from_recording(const Tensor& recording, std::size_t label,
                                                 const std::string& subject_id,
                                                 const PrepOptions& options) {
  std::vector<WindowRecord> out;
  for (auto& w : segment_windows(recording, options.window_length)) {
    auto samples = resample_to_length(w, options.input_length);
    if (options.zscore) samples = zscore(samples);
    out.push_back({std::move(samples), label, subject_id});
  }
  return out;
}

std::vector<WindowRecord> prepare_records(std::span<const RecordingMeta> metas,
                                          const PrepOptions& options) {
  std::vector<WindowRecord> out;
  for (const auto& meta : metas) {
    try {
      auto windows = windows_from_recording(load_recording(meta), meta.label, meta.subject_id, options);
      std::move(windows.begin(), windows.end(), std::back_inserter(out));
    } catch (const IngestionError& e) {
      const std::string msg = e.what();
      if (msg.find(meta.path.string()) != std::string::npos) throw;
      throw IngestionError(meta.path.string() + ": " + msg);
    }
  }
  return out;
}

DatasetSplit split_by_subject(std::span<const WindowRecord> records, const SplitSpec& spec) {
  spec.validate();
  std::map<std::string, std::size_t> windows_per_subject;
  for (const auto& r : records) {
    if (r.subject_id.empty()) throw UsageError("split_by_subject: record without subject_id");
    ++windows_per_subject[r.subject_id];
  }
  if (windows_per_subject.size() < 3) {
    throw UsageError("split_by_subject: need at least 3 subjects for disjoint train/val/test, got " +
                     std::to_string(windows_per_subject.size()));
  }
  std::vector<std::string> subjects;
  for (const auto& [id, n] : windows_per_subject) subjects.push_back(id);
  Rng rng(spec.rng_seed);
  rng.shuffle(subjects);

  const double total = static_cast<double>(records.size());
  const double target[3] = {spec.train_fraction * total, spec.val_fraction * total,
                            spec.test_fraction * total};
  double assigned[3] = {0, 0, 0};
  std::size_t members[3] = {0, 0, 0};
  std::map<std::string, int> split_of;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const std::size_t remaining = subjects.size() - s;
    const std::size_t empty = (members[0] == 0) + (members[1] == 0) + (members[2] == 0);
    int pick = -1;
    for (int k = 0; k < 3; ++k) {
      // Once only as many subjects remain as there are empty splits, fill those.
      if (remaining <= empty && members[k] != 0) continue;
      if (pick < 0 || target[k] - assigned[k] > target[pick] - assigned[pick]) pick = k;
    }
    split_of[subjects[s]] = pick;
    assigned[pick] += static_cast<double>(windows_per_subject[subjects[s]]);
    ++members[pick];
  }

  DatasetSplit out;
  std::vector<std::string>* lists[3] = {&out.train_subjects, &out.val_subjects, &out.test_subjects};
  for (const auto& id : subjects) lists[split_of[id]]->push_back(id);
  std::vector<WindowRecord>* parts[3] = {&out.train, &out.val, &out.test};
  for (const auto& r : records) parts[split_of[r.subject_id]]->push_back(r);
  return out;
}

void pack_dataset(std::span<const WindowRecord> records, const std::filesystem::path& path) {
  if (records.empty()) throw UsageError("pack_dataset: no records");
  const std::size_t window = records.front().samples.size();
  std::vector<std::string> names;
  std::map<std::string, std::uint16_t> index;
  for (const auto& r : records) {
    if (r.samples.size() != window || r.samples.rank() != 2 || r.samples.dim(1) != 1) {
      throw UsageError("pack_dataset: mixed window lengths (" + std::to_string(window) + " vs " +
                       shape_string(r.samples.shape()) + ")");
    }
    if (r.label > std::numeric_limits<std::uint8_t>::max()) {
      throw UsageError("pack_dataset: label out of range");
    }
    if (!index.contains(r.subject_id)) {
      if (names.size() == std::numeric_limits<std::uint16_t>::max()) {
        throw UsageError("pack_dataset: too many subjects");
      }
      index.emplace(r.subject_id, static_cast<std::uint16_t>(names.size()));
      names.push_back(r.subject_id);
    }
  }
  io::ByteWriter w;
  w.tag(kDatasetMagic);
  w.put<std::uint8_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(window));
  for (const auto& r : records) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.label));
    w.put<std::uint16_t>(index.at(r.subject_id));
    w.floats(r.samples.data());
  }
  w.put<std::uint16_t>(static_cast<std::uint16_t>(names.size()));
  for (const auto& n : names) w.string_u16(n);
  io::write_file_atomic(path, w.buffer());
}

std::vector<WindowRecord> unpack_dataset(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = io::read_file(path);
  } catch (const IngestionError& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  io::ByteReader r(std::move(bytes), "dataset " + path.string());
  r.expect_tag(kDatasetMagic, "magic");
  if (auto v = r.get<std::uint8_t>("version"); v != kFormatVersion) {
    throw FormatError(r.context() + ": unsupported version " + std::to_string(v));
  }
  const auto count = r.get<std::uint32_t>("record count");
  const auto window = r.get<std::uint32_t>("window length");
  if (count == 0) throw FormatError(r.context() + ": record count is zero");
  if (window == 0) throw FormatError(r.context() + ": window length is zero");
  struct Raw {
    std::uint8_t label;
    std::uint16_t subject;
    std::vector<float> samples;
  };
  std::vector<Raw> raw;
  raw.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto label = r.get<std::uint8_t>("record label");
    const auto subject = r.get<std::uint16_t>("record subject index");
    raw.push_back({label, subject, r.floats(window, "record samples")});
  }
  const auto names_n = r.get<std::uint16_t>("subject table count");
  std::vector<std::string> names;
  for (std::uint16_t i = 0; i < names_n; ++i) names.push_back(r.string_u16("subject name"));
  if (r.remaining() != 0) throw FormatError(r.context() + ": trailing bytes after subject table");
  std::vector<WindowRecord> out;
  out.reserve(count);
  for (auto& rec : raw) {
    if (rec.subject >= names.size()) {
      throw FormatError(r.context() + ": subject index " + std::to_string(rec.subject) +
                        " outside table of " + std::to_string(names.size()));
    }
    out.push_back({Tensor({window, 1}, std::move(rec.samples)), rec.label, names[rec.subject]});
  }
  return out;
}

}  // namespace resemg
