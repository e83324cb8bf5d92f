#include "oci/sim.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <utility>

#include "oci/errors.hpp"
#include "oci/rng.hpp"

namespace oci::sim {

namespace {

constexpr const char* kTwoSlotTemplate = "Pick up the {target} to the {destination}.";
constexpr const char* kOneSlotTemplate = "Open the {target}.";

int kind_channel(const std::string& kind) {
  if (kind == "cube") return encoders::kKindChannelBase + 0;
  if (kind == "box") return encoders::kKindChannelBase + 1;
  if (kind == "toy") return encoders::kKindChannelBase + 2;
  if (kind == "lid") return encoders::kKindChannelBase + 3;
  throw ValidationError("unknown object kind '" + kind + "'");
}

}  // namespace

std::string action_name(Action a) {
  switch (a) {
    case Action::MoveUp: return "MoveUp";
    case Action::MoveDown: return "MoveDown";
    case Action::MoveLeft: return "MoveLeft";
    case Action::MoveRight: return "MoveRight";
    case Action::Grasp: return "Grasp";
    case Action::Release: return "Release";
  }
  throw ValidationError("invalid action value");
}

Action action_from_name(const std::string& name) {
  if (name == "MoveUp") return Action::MoveUp;
  if (name == "MoveDown") return Action::MoveDown;
  if (name == "MoveLeft") return Action::MoveLeft;
  if (name == "MoveRight") return Action::MoveRight;
  if (name == "Grasp") return Action::Grasp;
  if (name == "Release") return Action::Release;
  throw ValidationError("unknown action name '" + name + "'");
}

TaskFamily family_from_int(int f) {
  if (f < 1 || f > 5)
    throw ConfigError("task family must be in 1..5, got " + std::to_string(f));
  return static_cast<TaskFamily>(f);
}

int family_to_int(TaskFamily f) { return static_cast<int>(f); }

bool is_movable_kind(const std::string& kind) {
  return kind == "cube" || kind == "toy";
}

const SimObject* GridWorld::find(const std::string& name) const {
  for (const SimObject& o : objects)
    if (o.name == name) return &o;
  return nullptr;
}

SimObject* GridWorld::find(const std::string& name) {
  for (SimObject& o : objects)
    if (o.name == name) return &o;
  return nullptr;
}

const SimObject* GridWorld::movable_at(int x, int y) const {
  for (const SimObject& o : objects) {
    if (holding && *holding == o.name) continue;
    if (is_movable_kind(o.kind) && o.x == x && o.y == y) return &o;
  }
  return nullptr;
}

const SimObject* GridWorld::lid_at(int x, int y) const {
  for (const SimObject& o : objects)
    if (o.kind == "lid" && o.x == x && o.y == y) return &o;
  return nullptr;
}

GridWorld step(const GridWorld& w, Action a) {
  GridWorld n = w;
  switch (a) {
    case Action::MoveUp:
      n.gripper_y = std::max(0, n.gripper_y - 1);
      break;
    case Action::MoveDown:
      n.gripper_y = std::min(n.height - 1, n.gripper_y + 1);
      break;
    case Action::MoveLeft:
      n.gripper_x = std::max(0, n.gripper_x - 1);
      break;
    case Action::MoveRight:
      n.gripper_x = std::min(n.width - 1, n.gripper_x + 1);
      break;
    case Action::Grasp: {
      if (n.holding) break;
      if (const SimObject* m = n.movable_at(n.gripper_x, n.gripper_y)) {
        n.holding = m->name;
        break;
      }
      for (SimObject& o : n.objects)
        if (o.kind == "lid" && o.x == n.gripper_x && o.y == n.gripper_y) {
          o.lid_open = !o.lid_open;
          break;
        }
      break;
    }
    case Action::Release: {
      if (!n.holding) break;
      if (n.movable_at(n.gripper_x, n.gripper_y)) break;  // cell occupied
      SimObject* held = n.find(*n.holding);
      if (held != nullptr) {
        held->x = n.gripper_x;
        held->y = n.gripper_y;
      }
      n.holding.reset();
      break;
    }
  }
  return n;
}

bool success(const GridWorld& w, const augmenter::TaskSpec& t) {
  const SimObject* target = w.find(t.target_name);
  if (target == nullptr) return false;
  if (target->kind == "lid") return target->lid_open;
  if (w.holding && *w.holding == target->name) return false;
  if (!t.has_destination()) return false;
  const SimObject* dest = w.find(t.destination_name);
  if (dest == nullptr) return false;
  return target->x == dest->x && target->y == dest->y;
}

encoders::ObsTensor observe(const GridWorld& w) {
  encoders::ObsTensor o = encoders::ObsTensor::zeros(w.width, w.height);
  for (const SimObject& obj : w.objects) {
    if (w.holding && *w.holding == obj.name) continue;  // held: no cell
    o.at(obj.x, obj.y, kind_channel(obj.kind)) = 1.0;
    const int ci = encoders::color_index(obj.color);
    if (ci >= 0) o.at(obj.x, obj.y, encoders::kColorChannelBase + ci) = 1.0;
    if (obj.kind == "lid" && obj.lid_open)
      o.at(obj.x, obj.y, encoders::kLidOpenChannel) = 1.0;
  }
  o.at(w.gripper_x, w.gripper_y, encoders::kGripperChannel) = 1.0;
  if (w.holding) o.at(w.gripper_x, w.gripper_y, encoders::kHoldingChannel) = 1.0;
  return o;
}

geometry::BBox cell_bbox(int x, int y) {
  return geometry::normalize_bbox(x * kCellPx, y * kCellPx, (x + 1) * kCellPx,
                                  (y + 1) * kCellPx, kGridImagePx, kGridImagePx);
}

geometry::BBox robot_home_bbox() {
  // two-by-two cell home region centered on the gripper start column
  return geometry::normalize_bbox(kGripperStartX * kCellPx, 0,
                                  (kGripperStartX + 2) * kCellPx, 2 * kCellPx,
                                  kGridImagePx, kGridImagePx);
}

geometry::Scene scene_from_world(const GridWorld& w) {
  geometry::Scene s;
  s.image_width = kGridImagePx;
  s.image_height = kGridImagePx;
  s.robot_ref = robot_home_bbox();
  for (const SimObject& obj : w.objects) {
    if (w.holding && *w.holding == obj.name) continue;
    s.objects.push_back({obj.name, obj.kind, obj.color, cell_bbox(obj.x, obj.y)});
  }
  return s;
}

namespace {

struct Cell {
  int x = 0;
  int y = 0;
};

Cell draw_free_cell(Rng& rng, const std::vector<Cell>& used) {
  for (int tries = 0; tries < 4096; ++tries) {
    Cell c{rng.uniform_int(kGridWidth), rng.uniform_int(kGridHeight)};
    bool clash = false;
    for (const Cell& u : used)
      if (u.x == c.x && u.y == c.y) clash = true;
    if (!clash) return c;
  }
  throw ValidationError("sample_scene: could not place objects without overlap");
}

std::string draw_color(Rng& rng) {
  const auto& cs = encoders::known_colors();
  return cs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cs.size())))];
}

std::vector<std::string> draw_distinct_colors(Rng& rng, int n) {
  std::vector<std::string> pool = encoders::known_colors();
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(n));
  return pool;
}

Instance sample_once(TaskFamily family, Rng& rng) {
  GridWorld w;
  // Start the gripper at a uniformly drawn cell of the two-by-two home
  // region (the Scene.robot_ref box). A fully fixed start would make every
  // expert path an open-loop replay of the instruction, letting a cloned
  // policy score demos perfectly without ever reading the gripper position,
  // while full-grid randomization dilutes the small demo budgets.
  w.gripper_x = kGripperStartX + rng.uniform_int(2);  // START-X
  w.gripper_y = rng.uniform_int(2);                   // START-Y
  augmenter::TaskSpec task;
  std::vector<Cell> used;
  auto place = [&](SimObject obj) {
    Cell c = draw_free_cell(rng, used);
    used.push_back(c);
    obj.x = c.x;
    obj.y = c.y;
    w.objects.push_back(std::move(obj));
  };

  switch (family) {
    case TaskFamily::PickToSideBox: {
      const std::string color = draw_color(rng);
      // boxes hug the side columns so "left box" / "right box" reads true
      SimObject left{"left box", "box", "", rng.uniform_int(2), rng.uniform_int(kGridHeight)};
      SimObject right{"right box", "box", "", kGridWidth - 2 + rng.uniform_int(2),
                      rng.uniform_int(kGridHeight)};
      used.push_back({left.x, left.y});
      used.push_back({right.x, right.y});
      place({color + " cube", "cube", color, 0, 0});
      w.objects.push_back(left);
      w.objects.push_back(right);
      task = {kTwoSlotTemplate, color + " cube",
              rng.uniform_int(2) == 0 ? "left box" : "right box"};
      break;
    }
    case TaskFamily::PickByColor: {
      const std::vector<std::string> colors = draw_distinct_colors(rng, 3);
      for (const std::string& c : colors) place({c + " cube", "cube", c, 0, 0});
      place({"box", "box", "", 0, 0});
      task = {kTwoSlotTemplate,
              colors[static_cast<std::size_t>(rng.uniform_int(3))] + " cube", "box"};
      break;
    }
    case TaskFamily::OpenLid: {
      place({"lid", "lid", draw_color(rng), 0, 0});
      task = {kOneSlotTemplate, "lid", ""};
      break;
    }
    case TaskFamily::PickToyAmongDistractors: {
      place({"toy", "toy", draw_color(rng), 0, 0});
      const std::vector<std::string> colors = draw_distinct_colors(rng, 2);
      for (const std::string& c : colors) place({c + " cube", "cube", c, 0, 0});
      place({"box", "box", "", 0, 0});
      task = {kTwoSlotTemplate, "toy", "box"};
      break;
    }
    case TaskFamily::PickByPosition: {
      // Three pixel-identical cubes at distinct columns; left/middle/right is
      // decided by column order. Rows are drawn independently so the cubes
      // spread over the grid instead of sharing one line.
      std::vector<int> cols(kGridWidth);
      std::iota(cols.begin(), cols.end(), 0);
      rng.shuffle(cols);
      cols.resize(3);
      std::sort(cols.begin(), cols.end());
      const char* names[3] = {"left cube", "middle cube", "right cube"};
      for (int i = 0; i < 3; ++i) {
        const int row = rng.uniform_int(kGridHeight);
        used.push_back({cols[static_cast<std::size_t>(i)], row});
        w.objects.push_back({names[i], "cube", "", cols[static_cast<std::size_t>(i)], row});
      }
      place({"box", "box", "", 0, 0});
      task = {kTwoSlotTemplate, names[rng.uniform_int(3)], "box"};
      break;
    }
  }

  Instance inst;
  inst.world = std::move(w);
  inst.scene = scene_from_world(inst.world);
  inst.task = task;
  return inst;
}

bool expert_solves(const Instance& inst) {
  try {
    return expert_demo(inst.world, inst.task).success;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

Instance sample_scene(TaskFamily family, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "sample_scene",
                   static_cast<std::uint64_t>(family_to_int(family))));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Instance inst = sample_once(family, rng);
    if (!geometry::validate_scene(inst.scene).empty()) continue;
    if (expert_solves(inst)) return inst;
  }
  throw ValidationError("sample_scene: no solvable instance after 1000 attempts");
}

namespace {

Action move_toward(const GridWorld& w, int x, int y) {
  if (w.gripper_x < x) return Action::MoveRight;
  if (w.gripper_x > x) return Action::MoveLeft;
  if (w.gripper_y < y) return Action::MoveDown;
  return Action::MoveUp;
}

}  // namespace

Action expert_action(const GridWorld& w, const augmenter::TaskSpec& t) {
  const SimObject* target = w.find(t.target_name);
  if (target == nullptr)
    throw ValidationError("expert: target '" + t.target_name + "' is not in the world");
  if (target->kind == "lid") {
    if (w.gripper_x == target->x && w.gripper_y == target->y) return Action::Grasp;
    return move_toward(w, target->x, target->y);
  }
  if (!w.holding) {
    if (w.gripper_x == target->x && w.gripper_y == target->y) return Action::Grasp;
    return move_toward(w, target->x, target->y);
  }
  if (*w.holding != target->name) return Action::Release;  // defensive: drop and retry
  const SimObject* dest = w.find(t.destination_name);
  if (dest == nullptr)
    throw ValidationError("expert: destination '" + t.destination_name +
                          "' is not in the world");
  if (w.gripper_x == dest->x && w.gripper_y == dest->y) return Action::Release;
  return move_toward(w, dest->x, dest->y);
}

Episode expert_demo(const GridWorld& w, const augmenter::TaskSpec& t) {
  Episode ep;
  ep.task = t;
  ep.horizon = kHorizon;
  GridWorld cur = w;
  for (int i = 0; i < kHorizon && !success(cur, t); ++i) {
    const Action a = expert_action(cur, t);
    ep.trajectory.push_back({observe(cur), a});
    cur = step(cur, a);
  }
  ep.success = success(cur, t);
  if (!ep.success)
    throw ValidationError("expert did not solve the instance within " +
                          std::to_string(kHorizon) + " steps");
  return ep;
}

}  // namespace oci::sim
