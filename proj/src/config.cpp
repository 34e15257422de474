#include "lorat/config.hpp"

#include "lorat/errors.hpp"

namespace lorat {

std::string_view to_string(PeStrategy s) {
  return s == PeStrategy::Interpolate ? "interpolate" : "slice";
}

PeStrategy parse_pe_strategy(std::string_view s) {
  if (s == "interpolate") return PeStrategy::Interpolate;
  if (s == "slice") return PeStrategy::Slice;
  throw ConfigError("unknown positional-embedding strategy '" + std::string(s) + "'");
}

void TrackerConfig::validate() const {
  if (patch < 1) throw ConfigError("patch size must be positive");
  if (search_size < patch || search_size % patch != 0)
    throw ConfigError("search size must be a positive multiple of the patch size");
  if (template_size < patch || template_size % patch != 0)
    throw ConfigError("template size must be a positive multiple of the patch size");
  if (dim < 1 || heads < 1 || dim % heads != 0) throw ConfigError("dim must be divisible by heads");
  if (depth < 0 || mlp_ratio < 1 || head_hidden < 1) throw ConfigError("invalid layer sizes");
  if (lora_rank < 0 || lora_rank > dim) throw ConfigError("lora rank out of range");
  if (!(lora_alpha > 0.0f)) throw ConfigError("lora alpha must be positive");
  if (!(context_factor > 0.0) || !(search_factor > 0.0)) throw ConfigError("crop factors must be positive");
  if (!(ln_eps > 0.0f)) throw ConfigError("layernorm eps must be positive");
}

TrackerConfig preset_config(std::string_view name) {
  TrackerConfig c;
  if (name == "tiny96" || name == "tiny-96") {
    c.preset = "tiny96";
    return c;
  }
  if (name == "b224" || name == "B-224") {
    c.preset = "b224";
    c.search_size = 224;
    c.template_size = 112;
    c.dim = 128;
    c.depth = 4;
    c.head_hidden = 128;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

}  // namespace lorat
