#pragma once

// Synthetic EMG-like recordings whose classes differ by dominant
// oscillation band. Stands in for the clinical corpus in tests and demos.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "resemg/signal.hpp"

namespace resemg {

struct SyntheticSpec {
  std::size_t subjects = 6;
  std::size_t windows_per_subject = 20;
  std::size_t num_classes = 3;
  std::size_t window_length = kWindowLength;
  std::uint32_t sample_rate_hz = 24000;
  double noise = 0.3;
  std::uint64_t seed = 0;
};

struct SyntheticRecording {
  std::vector<float> samples;
  std::size_t label = 0;
  std::string subject_id;
};

/// One recording per (subject, class); a subject's windows are spread
/// round-robin over the classes.
std::vector<SyntheticRecording> make_synthetic_recordings(const SyntheticSpec& spec);

/// Writes `<dir>/manifest.csv` and one signal file per recording; returns the manifest path.
std::filesystem::path write_synthetic_corpus(const SyntheticSpec& spec,
                                             const std::filesystem::path& dir);

/// Recordings pushed through windowing and resampling.
std::vector<WindowRecord> make_synthetic_windows(const SyntheticSpec& spec,
                                                 const PrepOptions& options = {});

}  // namespace resemg
