#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oci/geometry.hpp"

namespace oci {

/// Instruction template bound to scene object names. The template must
/// contain {target} exactly once, and {destination} exactly once when a
/// destination is set (empty destination_name = single-object task).
struct TaskSpec {
  std::string verb_template;
  std::string target_name;
  std::string destination_name;  // empty = none

  bool operator==(const TaskSpec&) const = default;
  bool has_destination() const { return !destination_name.empty(); }
};

/// Inline "name [a, b, c, d]" occurrence in the augmented text.
struct Mention {
  std::string name;
  BBox bbox;
  bool operator==(const Mention&) const = default;
};

/// One "The {name} is on the {direction} of the robotic arm ..." sentence.
/// `name` is the display name as written in the sentence (color-qualified
/// when the scene object's name does not already start with its color).
/// robot_bbox is absent when absolute positions are ablated.
struct RelativeClause {
  std::string name;
  Direction direction = Direction::Left;
  std::optional<BBox> robot_bbox;
  bool operator==(const RelativeClause&) const = default;
};

struct AugmentedInstruction {
  std::string original;
  std::vector<Mention> mentions;
  std::vector<RelativeClause> relative_clauses;
  bool operator==(const AugmentedInstruction&) const = default;
};

struct RenderConfig {
  int decimals = 3;
  bool canonical = true;  // fixed-width decimals; false trims trailing zeros
  bool ablate_abs = false;
  bool ablate_rel = false;

  bool operator==(const RenderConfig&) const = default;
  void validate() const;  // throws ConfigError (decimals >= 1)
};

struct AugmentResult {
  AugmentedInstruction structured;
  std::string text;
};

/// "[a, b, c, d]" with cfg.decimals places (canonical) or trimmed.
std::string render_bbox(const BBox& b, const RenderConfig& cfg = {});

/// Color-qualified name used in relative sentences ("white polar bear").
std::string display_name(const SceneObject& o);

/// Render scene + task into augmented text plus its structured form.
/// Ablation flags drop inline boxes (abs) or relative sentences (rel);
/// with both set the original instruction is returned verbatim.
AugmentResult augment(const Scene& scene, const TaskSpec& task, const RenderConfig& cfg = {},
                      const SectorConfig& sector = {});

/// Lossless inverse of augment for canonical output; tolerant of any
/// decimal precision (accepts "1" and "0.0"). Throws ParseError with a
/// byte offset on malformed bracket tuples or unknown direction words.
AugmentedInstruction parse_augmented(const std::string& text);

/// k distinct seeded rewrites of the task instruction, drawn from a
/// curated template bank (rotation starting at seed mod bank size).
std::vector<std::string> paraphrase(const TaskSpec& task, int k, uint64_t seed);

/// The underlying template (with {target}/{destination} slots intact)
/// that paraphrase would instantiate first for this seed.
std::string paraphrase_template(const TaskSpec& task, uint64_t seed);

/// Bank accessors (two-slot bank for pick-and-place, one-slot otherwise).
const std::vector<std::string>& paraphrase_bank(bool has_destination);

/// Task JSON: {"verb_template": "...", "target_name": "...",
/// "destination_name": "..."}; unknown keys rejected.
std::string task_to_json(const TaskSpec& t);
TaskSpec task_from_json(const std::string& text);
TaskSpec load_task(const std::string& path);
void save_task(const std::string& path, const TaskSpec& t);

}  // namespace oci

// The augmenter vocabulary lives in the root namespace; this alias lets
// dependent code qualify the names by owning module.
namespace oci {
namespace augmenter = ::oci;
}  // namespace oci
