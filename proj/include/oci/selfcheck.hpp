#pragma once

// Self-contained verification suites: finite-difference gradient checks
// over every tape operation plus the composed attention+policy loss, the
// augment/parse round-trip property on randomized scenes, and the 8-way
// direction classifier against an independent angle-based oracle. Used
// by the command-line selftest, the unit tests, and the acceptance run.

#include <cstdint>
#include <string>
#include <vector>

#include "oci/augmenter.hpp"
#include "oci/geometry.hpp"

namespace oci::selfcheck {

/// Pinned pass thresholds.
inline constexpr double kGradCheckTol = 1e-4;
inline constexpr double kGradCheckEps = 1e-5;

struct SuiteResult {
  std::string name;
  bool ok = false;
  int cases = 0;
  int failures = 0;
  double max_err = 0.0;  // gradient suite: max relative error, else 0
  std::string detail;

  std::string summary() const;  // one printable line
};

/// Central-difference checks: every differentiable op (10 seeded inputs
/// each) and the composed attention + policy cross-entropy loss.
SuiteResult run_grad_suite(std::uint64_t seed = 0);

/// parse(augment(scene, task)) == structured output, over randomized
/// scenes, tasks, templates, and ablation flags.
SuiteResult run_roundtrip_suite(int cases = 1000, std::uint64_t seed = 0);

/// classify_offset vs. the atan2 oracle: random offsets plus a 3600-angle
/// sweep (phase offset keeps sweep angles off sector boundaries).
SuiteResult run_direction_suite(int random_cases = 10000, std::uint64_t seed = 0);

std::vector<SuiteResult> run_all();

/// Independent oracle: sector lookup from the atan2 angle in degrees,
/// image y-axis down; same half-open boundary rule as the classifier.
geometry::Direction direction_oracle_atan2(double dx, double dy,
                                           const geometry::SectorConfig& cfg = {});

/// One randomized augment/parse round-trip case.
struct RoundtripCase {
  geometry::Scene scene;
  augmenter::TaskSpec task;
  augmenter::RenderConfig render;
};

RoundtripCase random_roundtrip_case(std::uint64_t seed);

}  // namespace oci::selfcheck
