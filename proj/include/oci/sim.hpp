#pragma once

// Deterministic 8x8 tabletop grid world: pick-and-place task families,
// scripted experts, and success evaluation. Worlds are value types and
// `step` is a pure function, so parallel rollouts are trivially safe.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oci/augmenter.hpp"
#include "oci/encoders.hpp"
#include "oci/geometry.hpp"

namespace oci::sim {

inline constexpr int kGridWidth = 8;
inline constexpr int kGridHeight = 8;
inline constexpr int kCellPx = 32;
inline constexpr int kGridImagePx = 256;  // kGridWidth * kCellPx
inline constexpr int kHorizon = 50;
inline constexpr int kGripperStartX = 3;
inline constexpr int kGripperStartY = 1;

enum class Action { MoveUp, MoveDown, MoveLeft, MoveRight, Grasp, Release };
inline constexpr int kNumActions = 6;

std::string action_name(Action a);
Action action_from_name(const std::string& name);  // throws ParseError

/// The five task families.
enum class TaskFamily {
  PickToSideBox = 1,           // cube -> left or right box
  PickByColor = 2,             // one of three colored cubes -> box
  OpenLid = 3,                 // toggle a lid open
  PickToyAmongDistractors = 4, // toy -> box, ignoring distractor cubes
  PickByPosition = 5,          // left/middle/right of three identical cubes
};

TaskFamily family_from_int(int f);  // throws ConfigError when not in 1..5
int family_to_int(TaskFamily f);

/// One object on the table. `lid_open` is meaningful only for kind "lid".
struct SimObject {
  std::string name;
  std::string kind;   // cube | box | toy | lid
  std::string color;  // may be empty
  int x = 0;
  int y = 0;
  bool lid_open = false;

  bool operator==(const SimObject&) const = default;
};

bool is_movable_kind(const std::string& kind);  // cube or toy

/// Value-type world state. A held object keeps its list entry but
/// occupies no cell while `holding` names it.
struct GridWorld {
  int width = kGridWidth;
  int height = kGridHeight;
  std::vector<SimObject> objects;
  int gripper_x = kGripperStartX;
  int gripper_y = kGripperStartY;
  std::optional<std::string> holding;

  bool operator==(const GridWorld&) const = default;
  const SimObject* find(const std::string& name) const;
  SimObject* find(const std::string& name);
  /// Movable object placed at (x, y), excluding any held object.
  const SimObject* movable_at(int x, int y) const;
  const SimObject* lid_at(int x, int y) const;
};

/// One sampled task instance.
struct Instance {
  GridWorld world;
  geometry::Scene scene;
  augmenter::TaskSpec task;
};

/// Deterministically sample a solvable instance of the family.
Instance sample_scene(TaskFamily family, std::uint64_t seed);

/// Pure transition. Moves clamp at borders; Grasp picks the movable in
/// the gripper cell (or toggles a lid there); Release puts the held
/// object down unless another movable occupies the cell. Illegal
/// actions are no-ops.
GridWorld step(const GridWorld& w, Action a);

/// True iff the task is complete: lid target open, or target object
/// resting (not held) in the destination object's cell.
bool success(const GridWorld& w, const augmenter::TaskSpec& t);

/// Channel grid observation (see encoders channel constants).
encoders::ObsTensor observe(const GridWorld& w);

/// Scene (normalized pixel boxes) for the current world; the robot
/// reference box is the fixed gripper home region.
geometry::Scene scene_from_world(const GridWorld& w);

geometry::BBox robot_home_bbox();
geometry::BBox cell_bbox(int x, int y);

/// Greedy scripted expert: x-first shortest path to the target, Grasp,
/// shortest path to the destination, Release (family 3: path + Grasp).
Action expert_action(const GridWorld& w, const augmenter::TaskSpec& t);

struct TimeStep {
  encoders::ObsTensor obs;  // observation before the action
  Action action = Action::Grasp;
};

struct Episode {
  augmenter::TaskSpec task;
  int horizon = kHorizon;
  std::vector<TimeStep> trajectory;
  bool success = false;
};

/// Roll the expert until success (at most `kHorizon` steps). Throws
/// ValidationError when the instance is not solved in time.
Episode expert_demo(const GridWorld& w, const augmenter::TaskSpec& t);

}  // namespace oci::sim
