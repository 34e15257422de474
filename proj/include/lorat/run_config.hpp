#pragma once

// Settings shared by every command-line workflow. The fingerprint is the
// canonical serialization of everything that can change a result; the worker
// count and output path are absent because they never do.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lorat/config.hpp"

namespace lorat {

struct RunConfig {
  std::string preset = "tiny96";
  std::uint64_t seed = 0;
  std::vector<std::string> weights;
  std::string annotations;
  std::string out;
  PeStrategy strategy = PeStrategy::Interpolate;
  std::optional<int> lora_rank;       // preset default when unset
  std::optional<float> lora_alpha;
  std::optional<double> context_factor;
  std::optional<double> search_factor;
  int workers = 1;

  /// Applies one key=value setting; unknown keys and malformed values raise ConfigError.
  void set(const std::string& key, const std::string& value);

  /// The preset with every override applied, validated.
  TrackerConfig tracker_config() const;

  /// "key=value" pairs in fixed order, joined by ';'.
  std::string fingerprint() const;
};

/// Reads a key=value file ('#' comments, blank lines ignored) into `config`.
void load_run_config(const std::filesystem::path& path, RunConfig& config);

}  // namespace lorat
