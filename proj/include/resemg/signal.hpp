#pragma once

// EMG ingestion: raw recordings -> fixed-length labelled windows -> packed
// subject-disjoint datasets.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resemg/tensor.hpp"

namespace resemg {

inline constexpr std::size_t kWindowLength = 23437;
inline constexpr std::size_t kInputLength = 2000;

/// Class names in index order: (myopathy, normal, als) for three classes,
/// (normal, als) for two.
const std::vector<std::string>& class_names(std::size_t num_classes);
std::size_t parse_label(std::string_view token, std::size_t num_classes);

struct RecordingMeta {
  std::filesystem::path path;
  std::size_t label = 0;
  std::string subject_id;
  std::uint32_t sample_rate_hz = 24000;
};

struct WindowRecord {
  Tensor samples;  // (window length, 1)
  std::size_t label = 0;
  std::string subject_id;

  bool operator==(const WindowRecord&) const = default;
};

struct SplitSpec {
  double train_fraction = 0.725;
  double val_fraction = 0.155;
  double test_fraction = 0.120;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct DatasetSplit {
  std::vector<WindowRecord> train;
  std::vector<WindowRecord> val;
  std::vector<WindowRecord> test;
  std::vector<std::string> train_subjects;
  std::vector<std::string> val_subjects;
  std::vector<std::string> test_subjects;
};

/// Parses a `path,label,subject_id,sample_rate` CSV. Relative signal paths
/// resolve against the manifest's directory. Errors name the line number.
std::vector<RecordingMeta> read_manifest(const std::filesystem::path& manifest,
                                         std::size_t num_classes);

/// Signal file: "EMGS", version 1, u32 sample count, little-endian f32 samples.
Tensor load_recording(const RecordingMeta& meta);
Tensor load_signal_file(const std::filesystem::path& path);
void save_signal_file(const std::filesystem::path& path, std::span<const float> samples);

/// Consecutive non-overlapping windows; the trailing remainder is dropped.
std::vector<Tensor> segment_windows(const Tensor& x, std::size_t window_len = kWindowLength);

/// Linear interpolation onto t_i = i (L-1)/(target_len-1); both endpoints
/// are reproduced exactly and output i reads only x[floor t_i], x[ceil t_i].
Tensor resample_to_length(const Tensor& x, std::size_t target_len = kInputLength);

/// Per-window zero-mean unit-variance scaling (constant windows map to zero).
Tensor zscore(const Tensor& x);

struct PrepOptions {
  std::size_t window_length = kWindowLength;
  std::size_t input_length = kInputLength;
  bool zscore = false;
};

/// Windows and resamples one recording.
std::vector<WindowRecord> windows_from_recording(const Tensor& recording, std::size_t label,
                                                 const std::string& subject_id,
                                                 const PrepOptions& options);

/// Loads every manifest entry (in manifest order) and windows it.
std::vector<WindowRecord> prepare_records(std::span<const RecordingMeta> metas,
                                          const PrepOptions& options);

/// Shuffles subjects with the seed and assigns each to the split with the
/// largest remaining window deficit; no subject appears in two splits and
/// every split receives at least one subject.
DatasetSplit split_by_subject(std::span<const WindowRecord> records, const SplitSpec& spec);

/// Packed dataset: "EMGW", version 1, u32 record count, u32 window length,
/// records of (u8 label, u16 subject index, f32 samples), then a subject name
/// table of u16 count and u16-length-prefixed UTF-8 names.
void pack_dataset(std::span<const WindowRecord> records, const std::filesystem::path& path);
std::vector<WindowRecord> unpack_dataset(const std::filesystem::path& path);

}  // namespace resemg
