#pragma once

// File-backed experiment configuration: a small strict INI dialect
// (sections, key = value, full-line # or ; comments, unknown keys
// rejected). The resolved form is written into every run directory.

#include <string>

#include "oci/augmenter.hpp"
#include "oci/geometry.hpp"
#include "oci/trainer.hpp"

namespace oci::cli {

struct ExperimentConfig {
  trainer::TrainConfig train;       // [train] + [frm]
  geometry::SectorConfig sector;    // [sector] (augment subcommand)
  augmenter::RenderConfig render;   // [render] (augment subcommand)
  std::string out_dir = "out";      // [experiment]
  int jobs = 1;
  int grid_seeds = 5;               // [grid]

  bool operator==(const ExperimentConfig&) const = default;

  void validate() const;  // throws ConfigError

  /// Fully resolved INI text; from_ini(to_ini(c)) == c.
  std::string to_ini() const;
  /// Strict parse over defaults. Throws ConfigError with a line number
  /// for unknown sections/keys or malformed values.
  static ExperimentConfig from_ini(const std::string& text);

  static ExperimentConfig load(const std::string& path);  // IoError on io
  void save(const std::string& path) const;

  /// OCI_SEED environment override (applied last; wins over file+flags).
  void apply_env();
};

}  // namespace oci::cli
