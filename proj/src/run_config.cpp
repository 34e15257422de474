#include "lorat/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "lorat/errors.hpp"

namespace lorat {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: invalid value '" + value + "' for " + key);
  return out;
}

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "preset") {
    preset = value;
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "weights") {
    weights.push_back(value);
  } else if (key == "annotations") {
    annotations = value;
  } else if (key == "out") {
    out = value;
  } else if (key == "pe-strategy" || key == "pe_strategy") {
    try {
      strategy = parse_pe_strategy(value);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "lora-rank" || key == "lora_rank") {
    lora_rank = parse_number<int>(key, value);
  } else if (key == "lora-alpha" || key == "lora_alpha") {
    lora_alpha = parse_number<float>(key, value);
  } else if (key == "context-factor" || key == "context_factor") {
    context_factor = parse_number<double>(key, value);
  } else if (key == "search-factor" || key == "search_factor") {
    search_factor = parse_number<double>(key, value);
  } else if (key == "workers") {
    workers = parse_number<int>(key, value);
    if (workers < 1) throw ConfigError("config: workers must be at least 1");
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

TrackerConfig RunConfig::tracker_config() const {
  TrackerConfig c;
  try {
    c = preset_config(preset);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  c.seed = seed;
  c.strategy = strategy;
  if (lora_rank) c.lora_rank = *lora_rank;
  if (lora_alpha) c.lora_alpha = *lora_alpha;
  if (context_factor) c.context_factor = *context_factor;
  if (search_factor) c.search_factor = *search_factor;
  c.validate();
  return c;
}

std::string RunConfig::fingerprint() const {
  const auto c = tracker_config();
  std::ostringstream os;
  os << "preset=" << c.preset << ";seed=" << seed << ";weights=";
  for (std::size_t i = 0; i < weights.size(); ++i) os << (i ? "," : "") << weights[i];
  os << ";annotations=" << annotations << ";pe-strategy=" << to_string(c.strategy)
     << ";lora-rank=" << c.lora_rank << ";lora-alpha=" << number(c.lora_alpha)
     << ";context-factor=" << number(c.context_factor) << ";search-factor=" << number(c.search_factor);
  return os.str();
}

void load_run_config(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: " + path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

}  // namespace lorat
