#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "resemg/model.hpp"
#include "resemg/optimization.hpp"
#include "resemg/signal.hpp"

namespace resemg::cli {

/// Every tunable value reachable from a config file or the command line.
struct Settings {
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;
  PrepOptions prep;

  /// Applies one `key=value` pair; unknown keys and malformed values throw UsageError.
  void set(std::string_view key, std::string_view value);
  void set_seed(std::uint64_t seed);
  void set_classes(std::size_t classes);

  static const std::vector<std::string>& keys();
};

/// Reads a flat `key = value` file. Blank lines and `#` comments are ignored.
void load_config_file(Settings& settings, const std::filesystem::path& path);

/// Runs the command line; returns the process exit code
/// (0 success, 1 runtime failure, 2 usage error).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace resemg::cli
