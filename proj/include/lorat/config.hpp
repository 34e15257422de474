#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace lorat {

enum class PeStrategy { Interpolate, Slice };

std::string_view to_string(PeStrategy s);
PeStrategy parse_pe_strategy(std::string_view s);

/// Model geometry plus tracking conventions. Presets mirror the "<backbone>-<search size>"
/// naming: `b224` has a 14×14 search grid, `tiny96` a 6×6 one.
struct TrackerConfig {
  std::string preset = "tiny96";
  int search_size = 96;
  int template_size = 48;
  int patch = 16;
  int dim = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 4;
  int head_hidden = 64;
  int lora_rank = 8;
  float lora_alpha = 16.0f;
  double context_factor = 2.0;
  double search_factor = 4.0;
  PeStrategy strategy = PeStrategy::Interpolate;
  float ln_eps = 1e-6f;
  std::uint64_t seed = 0;

  int search_grid() const { return search_size / patch; }
  int template_grid() const { return template_size / patch; }
  int search_tokens() const { return search_grid() * search_grid(); }
  int template_tokens() const { return template_grid() * template_grid(); }
  int sequence_length() const { return search_tokens() + template_tokens(); }

  /// Throws ConfigError on inconsistent geometry.
  void validate() const;
};

/// Throws ConfigError for unknown names. Accepts "b224"/"B-224" and "tiny96"/"tiny-96".
TrackerConfig preset_config(std::string_view name);

}  // namespace lorat
