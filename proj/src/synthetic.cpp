#include "resemg/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "resemg/random.hpp"

namespace resemg {

namespace {

struct Band {
  double lo_hz;
  double hi_hz;
};

// Indexed like class_names(): myopathy is fast and polyphasic, ALS slow and
// large, normal in between.
Band band_for(std::size_t label, std::size_t num_classes) {
  static constexpr Band three[] = {{240.0, 320.0}, {90.0, 130.0}, {20.0, 40.0}};
  static constexpr Band two[] = {{90.0, 130.0}, {20.0, 40.0}};
  return num_classes == 3 ? three[label] : two[label];
}

}  // namespace

std::vector<SyntheticRecording> make_synthetic_recordings(const SyntheticSpec& spec) {
  class_names(spec.num_classes);  // validates the class count
  if (spec.subjects == 0 || spec.windows_per_subject == 0) {
    throw UsageError("synthetic corpus needs at least one subject and window");
  }
  Rng rng(spec.seed);
  std::vector<SyntheticRecording> out;
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    const std::string subject = "S" + std::to_string(s + 1);
    const double gain = rng.uniform(0.8, 1.2);
    for (std::size_t label = 0; label < spec.num_classes; ++label) {
      std::size_t windows = 0;
      for (std::size_t w = 0; w < spec.windows_per_subject; ++w) windows += w % spec.num_classes == label;
      if (windows == 0) continue;
      const Band band = band_for(label, spec.num_classes);
      double freq[3], phase[3], amp[3];
      for (int k = 0; k < 3; ++k) {
        freq[k] = rng.uniform(band.lo_hz, band.hi_hz);
        phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        amp[k] = gain * rng.uniform(0.5, 1.0);
      }
      SyntheticRecording rec{std::vector<float>(windows * spec.window_length), label, subject};
      for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        const double t = static_cast<double>(i) / spec.sample_rate_hz;
        double v = spec.noise * rng.normal();
        for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * t + phase[k]);
        rec.samples[i] = static_cast<float>(v);
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::filesystem::path write_synthetic_corpus(const SyntheticSpec& spec,
                                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto manifest = dir / "manifest.csv";
  std::ofstream csv(manifest);
  if (!csv) throw UsageError("cannot write " + manifest.string());
  csv << "path,label,subject_id,sample_rate\n";
  const auto& names = class_names(spec.num_classes);
  std::size_t n = 0;
  for (const auto& rec : make_synthetic_recordings(spec)) {
    const std::string file = rec.subject_id + "_" + names[rec.label] + "_" + std::to_string(n++) + ".emgs";
    save_signal_file(dir / file, rec.samples);
    csv << file << ',' << names[rec.label] << ',' << rec.subject_id << ',' << spec.sample_rate_hz << '\n';
  }
  return manifest;
}

std::vector<WindowRecord> make_synthetic_windows(const SyntheticSpec& spec,
                                                 const PrepOptions& options) {
  std::vector<WindowRecord> out;
  for (const auto& rec : make_synthetic_recordings(spec)) {
    Tensor x({rec.samples.size(), 1}, rec.samples);
    auto windows = windows_from_recording(x, rec.label, rec.subject_id, options);
    std::move(windows.begin(), windows.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace resemg
