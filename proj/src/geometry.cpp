#include "oci/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oci/errors.hpp"

namespace oci {

using ordered_json = nlohmann::ordered_json;

bool BBox::valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && 0.0 <= x_min && x_min <= x_max && x_max <= 1.0 &&
         0.0 <= y_min && y_min <= y_max && y_max <= 1.0;
}

void BBox::require_valid(const std::string& what) const {
  if (!valid()) {
    std::ostringstream os;
    os << what << ": invalid box [" << x_min << ", " << y_min << ", " << x_max << ", " << y_max
       << "] (need 0 <= min <= max <= 1 on both axes)";
    throw ValidationError(os.str());
  }
}

namespace {

const std::map<Direction, std::string>& name_table() {
  static const std::map<Direction, std::string> t = {
      {Direction::Left, "Left"},
      {Direction::Right, "Right"},
      {Direction::Top, "Top"},
      {Direction::Bottom, "Bottom"},
      {Direction::UpperLeft, "UpperLeft"},
      {Direction::UpperRight, "UpperRight"},
      {Direction::BottomLeft, "BottomLeft"},
      {Direction::BottomRight, "BottomRight"},
  };
  return t;
}

const std::map<Direction, std::string>& word_table() {
  static const std::map<Direction, std::string> t = {
      {Direction::Left, "left"},
      {Direction::Right, "right"},
      {Direction::Top, "top"},
      {Direction::Bottom, "bottom"},
      {Direction::UpperLeft, "upper-left"},
      {Direction::UpperRight, "upper-right"},
      {Direction::BottomLeft, "bottom-left"},
      {Direction::BottomRight, "bottom-right"},
  };
  return t;
}

}  // namespace

std::string direction_name(Direction d) { return name_table().at(d); }

Direction direction_from_name(const std::string& name) {
  for (const auto& [d, n] : name_table())
    if (n == name) return d;
  throw ValidationError("unknown direction name '" + name + "'");
}

std::string direction_word(Direction d) { return word_table().at(d); }

std::optional<Direction> direction_from_word(const std::string& word) {
  for (const auto& [d, w] : word_table())
    if (w == word) return d;
  return std::nullopt;
}

const std::vector<std::string>& all_direction_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w;
    for (const auto& [d, s] : word_table()) w.push_back(s);
    std::sort(w.begin(), w.end());
    return w;
  }();
  return words;
}

Direction opposite(Direction d) {
  switch (d) {
    case Direction::Left: return Direction::Right;
    case Direction::Right: return Direction::Left;
    case Direction::Top: return Direction::Bottom;
    case Direction::Bottom: return Direction::Top;
    case Direction::UpperLeft: return Direction::BottomRight;
    case Direction::UpperRight: return Direction::BottomLeft;
    case Direction::BottomLeft: return Direction::UpperRight;
    case Direction::BottomRight: return Direction::UpperLeft;
  }
  throw UsageError("opposite: bad Direction value");
}

void SectorConfig::validate() const {
  if (!(cardinal_half_angle_deg > 0.0) || !(cardinal_half_angle_deg < 45.0))
    throw ConfigError("cardinal_half_angle_deg must lie in (0, 45) so diagonal sectors keep "
                      "positive width, got " + std::to_string(cardinal_half_angle_deg));
  if (!(tie_epsilon >= 0.0) || !std::isfinite(tie_epsilon))
    throw ConfigError("tie_epsilon must be a finite non-negative real");
}

std::string violation_code_name(Violation::Code c) {
  switch (c) {
    case Violation::Code::DuplicateName: return "DuplicateName";
    case Violation::Code::InvalidBox: return "InvalidBox";
    case Violation::Code::DegenerateBox: return "DegenerateBox";
    case Violation::Code::EmptyName: return "EmptyName";
    case Violation::Code::BadImageSize: return "BadImageSize";
  }
  return "?";
}

const SceneObject* Scene::find(const std::string& name) const {
  for (const SceneObject& o : objects)
    if (o.name == name) return &o;
  return nullptr;
}

Point bbox_center(const BBox& b) {
  return {(b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0};
}

BBox normalize_bbox(int x_min, int y_min, int x_max, int y_max, int image_w, int image_h) {
  if (image_w <= 0) throw ValidationError("normalize_bbox: image_w must be positive");
  if (image_h <= 0) throw ValidationError("normalize_bbox: image_h must be positive");
  auto check = [](int lo, int hi, int limit, const char* lo_name, const char* hi_name) {
    if (lo < 0) throw ValidationError(std::string("normalize_bbox: ") + lo_name + " < 0");
    if (lo > hi)
      throw ValidationError(std::string("normalize_bbox: ") + lo_name + " > " + hi_name);
    if (hi > limit)
      throw ValidationError(std::string("normalize_bbox: ") + hi_name + " exceeds image size");
  };
  check(x_min, x_max, image_w, "x_min", "x_max");
  check(y_min, y_max, image_h, "y_min", "y_max");
  return BBox{static_cast<double>(x_min) / image_w, static_cast<double>(y_min) / image_h,
              static_cast<double>(x_max) / image_w, static_cast<double>(y_max) / image_h};
}

Direction classify_offset(double dx, double dy, const SectorConfig& cfg) {
  cfg.validate();
  if (std::abs(dx) <= cfg.tie_epsilon && std::abs(dy) <= cfg.tie_epsilon)
    throw ValidationError("ambiguous direction: object and robot centers coincide");
  // Slope threshold of the cardinal sector edges; no trigonometry beyond
  // the single tan of the configured half-angle.
  const double t = std::tan(cfg.cardinal_half_angle_deg * std::numbers::pi / 180.0);
  if (dy == 0.0) return dx > 0.0 ? Direction::Right : Direction::Left;
  if (dx == 0.0) return dy > 0.0 ? Direction::Bottom : Direction::Top;
  if (dx > 0.0 && dy > 0.0) {  // angle in (0, 90)
    if (dy < t * dx) return Direction::Right;
    if (t * dy >= dx) return Direction::Bottom;
    return Direction::BottomRight;
  }
  if (dx > 0.0 && dy < 0.0) {  // angle in (-90, 0)
    const double ay = -dy;
    if (ay <= t * dx) return Direction::Right;
    if (t * ay <= dx) return Direction::UpperRight;
    return Direction::Top;
  }
  if (dx < 0.0 && dy > 0.0) {  // angle in (90, 180)
    const double ax = -dx;
    if (ax < t * dy) return Direction::Bottom;
    if (dy > t * ax) return Direction::BottomLeft;
    return Direction::Left;
  }
  // dx < 0, dy < 0: angle in (-180, -90)
  const double ax = -dx, ay = -dy;
  if (ay < t * ax) return Direction::Left;
  if (t * ay >= ax) return Direction::Top;
  return Direction::UpperLeft;
}

Direction classify_direction(const BBox& obj, const BBox& robot, const SectorConfig& cfg) {
  obj.require_valid("classify_direction: obj");
  robot.require_valid("classify_direction: robot");
  const Point po = bbox_center(obj);
  const Point pr = bbox_center(robot);
  return classify_offset(po.x - pr.x, po.y - pr.y, cfg);
}

std::vector<Violation> validate_scene(const Scene& s) {
  std::vector<Violation> out;
  if (s.image_width <= 0 || s.image_height <= 0)
    out.push_back({Violation::Code::BadImageSize, "image_size",
                   "image dimensions must be positive"});
  if (!s.robot_ref.valid())
    out.push_back({Violation::Code::InvalidBox, "robot_ref", "robot_ref is not a valid box"});
  std::set<std::string> seen, reported;
  for (const SceneObject& o : s.objects) {
    if (o.name.empty())
      out.push_back({Violation::Code::EmptyName, o.name, "object with empty name"});
    if (!o.bbox.valid()) {
      out.push_back({Violation::Code::InvalidBox, o.name,
                     "object '" + o.name + "' has an invalid box"});
    } else if (o.bbox.width() <= 0.0 || o.bbox.height() <= 0.0) {
      out.push_back({Violation::Code::DegenerateBox, o.name,
                     "object '" + o.name + "' needs positive area"});
    }
    if (!seen.insert(o.name).second && reported.insert(o.name).second)
      out.push_back({Violation::Code::DuplicateName, o.name,
                     "duplicate object name '" + o.name + "'"});
  }
  return out;
}

namespace {

const std::set<std::string>& known_kinds() {
  static const std::set<std::string> kinds = {"cube", "box", "toy", "lid"};
  return kinds;
}

ordered_json bbox_to_json(const BBox& b) {
  return ordered_json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

BBox bbox_from_json(const ordered_json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 4)
    throw ValidationError(what + ": expected an array of 4 numbers");
  for (const auto& v : j)
    if (!v.is_number()) throw ValidationError(what + ": expected an array of 4 numbers");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void require_keys(const ordered_json& j, const std::vector<std::string>& keys,
                  const std::string& what) {
  if (!j.is_object()) throw ValidationError(what + ": expected a JSON object");
  for (const std::string& k : keys)
    if (!j.contains(k)) throw ValidationError(what + ": missing field '" + k + "'");
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ValidationError(what + ": unknown field '" + k + "'");
}

}  // namespace

std::string scene_to_json(const Scene& s) {
  ordered_json j;
  j["image_size"] = ordered_json::array({s.image_width, s.image_height});
  j["robot_ref"] = bbox_to_json(s.robot_ref);
  ordered_json objs = ordered_json::array();
  for (const SceneObject& o : s.objects) {
    ordered_json jo;
    jo["name"] = o.name;
    jo["kind"] = o.kind;
    jo["color"] = o.color;
    jo["bbox"] = bbox_to_json(o.bbox);
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);
  return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scene JSON: ") + e.what(), e.byte);
  }
  require_keys(j, {"image_size", "robot_ref", "objects"}, "scene");
  const auto& size = j["image_size"];
  if (!size.is_array() || size.size() != 2 || !size[0].is_number_integer() ||
      !size[1].is_number_integer())
    throw ValidationError("scene: image_size must be [width, height] integers");
  Scene s;
  s.image_width = size[0].get<int>();
  s.image_height = size[1].get<int>();
  s.robot_ref = bbox_from_json(j["robot_ref"], "scene: robot_ref");
  if (!j["objects"].is_array()) throw ValidationError("scene: objects must be an array");
  for (const auto& jo : j["objects"]) {
    require_keys(jo, {"name", "kind", "color", "bbox"}, "scene object");
    SceneObject o;
    if (!jo["name"].is_string() || !jo["kind"].is_string() || !jo["color"].is_string())
      throw ValidationError("scene object: name/kind/color must be strings");
    o.name = jo["name"].get<std::string>();
    o.kind = jo["kind"].get<std::string>();
    o.color = jo["color"].get<std::string>();
    if (!known_kinds().count(o.kind))
      throw ValidationError("scene object '" + o.name + "': unknown kind '" + o.kind +
                            "' (expected cube, box, toy, or lid)");
    o.bbox = bbox_from_json(jo["bbox"], "scene object '" + o.name + "' bbox");
    s.objects.push_back(std::move(o));
  }
  const auto violations = validate_scene(s);
  if (!violations.empty()) {
    std::ostringstream os;
    os << "scene invalid:";
    for (const Violation& v : violations) os << " [" << violation_code_name(v.code) << "] "
                                             << v.message << ";";
    throw ValidationError(os.str());
  }
  return s;
}

Scene load_scene(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open scene file '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return scene_from_json(buf.str());
}

void save_scene(const std::string& path, const Scene& s) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write scene file '" + path + "'");
  os << scene_to_json(s) << "\n";
  if (!os) throw IoError("write failed for scene file '" + path + "'");
}

}  // namespace oci
