#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace oci {

/// Normalized image-coordinate box, y growing downward.
struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  bool operator==(const BBox&) const = default;
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool valid() const;
  /// Throws ValidationError naming `what` when invalid.
  void require_valid(const std::string& what) const;
};

struct Point {
  double x = 0, y = 0;
  bool operator==(const Point&) const = default;
};

enum class Direction {
  Left,
  Right,
  Top,
  Bottom,
  UpperLeft,
  UpperRight,
  BottomLeft,
  BottomRight,
};

/// Identifier form: "Left", "BottomRight", ... Round-trips exactly.
std::string direction_name(Direction d);
Direction direction_from_name(const std::string& name);

/// In-sentence form: "left", "bottom-right", ... Round-trips exactly.
std::string direction_word(Direction d);
std::optional<Direction> direction_from_word(const std::string& word);
const std::vector<std::string>& all_direction_words();

Direction opposite(Direction d);

struct SceneObject {
  std::string name;   // unique within the scene, e.g. "polar bear"
  std::string kind;   // cube | box | toy | lid
  std::string color;  // free categorical tag, may be empty
  BBox bbox;

  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  int image_width = 0;
  int image_height = 0;
  BBox robot_ref;
  std::vector<SceneObject> objects;  // order = canonical mention order

  bool operator==(const Scene&) const = default;
  const SceneObject* find(const std::string& name) const;
};

/// Angular sector layout for the 8-way classifier. Cardinal sectors span
/// 2*cardinal_half_angle_deg; diagonals take the remainder, so the half
/// angle must stay below 45 for the diagonals to have positive width.
struct SectorConfig {
  double cardinal_half_angle_deg = 22.5;
  double tie_epsilon = 1e-12;

  bool operator==(const SectorConfig&) const = default;
  void validate() const;  // throws ConfigError
};

struct Violation {
  enum class Code { DuplicateName, InvalidBox, DegenerateBox, EmptyName, BadImageSize };
  Code code;
  std::string subject;
  std::string message;
};

std::string violation_code_name(Violation::Code c);

Point bbox_center(const BBox& b);

/// Pixel box -> normalized box. Throws ValidationError naming the
/// offending field on out-of-range input.
BBox normalize_bbox(int x_min, int y_min, int x_max, int y_max, int image_w, int image_h);

/// 8-way direction of obj's center as seen from robot's center, image
/// y-axis pointing down (Bottom means larger y). Sectors are half-open:
/// each includes its boundary at the smaller atan2 angle, and Left owns
/// 180 degrees, so every non-degenerate offset maps to exactly one
/// direction. Implemented with sign and slope comparisons only (no
/// trigonometry), so tests can check it against an independent
/// angle-based oracle. Throws ValidationError ("ambiguous direction")
/// when both |dx| and |dy| are within cfg.tie_epsilon.
Direction classify_direction(const BBox& obj, const BBox& robot, const SectorConfig& cfg = {});

/// Direction of the raw center offset (dx, dy); same rules as above.
Direction classify_offset(double dx, double dy, const SectorConfig& cfg = {});

/// Reports every invariant breach; empty result means the scene is valid.
std::vector<Violation> validate_scene(const Scene& s);

/// Strict JSON round-trip: {"image_size":[w,h],"robot_ref":[4],
/// "objects":[{"name","kind","color","bbox":[4]}]}; unknown keys and
/// missing fields are rejected (ValidationError).
std::string scene_to_json(const Scene& s);
Scene scene_from_json(const std::string& text);
Scene load_scene(const std::string& path);   // IoError on file problems
void save_scene(const std::string& path, const Scene& s);

}  // namespace oci

// The geometry vocabulary lives in the root namespace; this alias lets
// dependent code qualify the names by owning module.
namespace oci {
namespace geometry = ::oci;
}  // namespace oci
