#pragma once

#include <string>

#include "xlight/train.hpp"

namespace xlight {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fully resolved run settings: defaults, overridden by a JSON config file,
// overridden again by CLI flags (the CLI applies those itself).
struct RunConfig {
  TrainConfig train;
  double ftc_phase_duration = 15.0;

  // merges recognized keys from a JSON file over the current values
  void apply_file(const std::string& path);
  void apply_json(const std::string& text, const std::string& origin);

  // resolved settings, serialized for the run directory
  std::string to_json() const;
};

}  // namespace xlight
