// Python surface: thin JSON-string wrappers over the core operations so
// the module stays dependency-free on the python side.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "json.hpp"
#include "oci/augmenter.hpp"
#include "oci/errors.hpp"
#include "oci/geometry.hpp"
#include "oci/selfcheck.hpp"
#include "oci/sim.hpp"

namespace py = pybind11;
using nlohmann::ordered_json;

namespace {

ordered_json bbox_json(const oci::BBox& b) {
  return ordered_json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

ordered_json structured_json(const oci::AugmentedInstruction& a) {
  ordered_json j;
  j["original"] = a.original;
  j["mentions"] = ordered_json::array();
  for (const oci::Mention& m : a.mentions) {
    j["mentions"].push_back({{"name", m.name}, {"bbox", bbox_json(m.bbox)}});
  }
  j["relative_clauses"] = ordered_json::array();
  for (const oci::RelativeClause& c : a.relative_clauses) {
    ordered_json cj{{"name", c.name}, {"direction", oci::direction_name(c.direction)}};
    cj["robot_bbox"] = c.robot_bbox ? bbox_json(*c.robot_bbox) : ordered_json(nullptr);
    j["relative_clauses"].push_back(std::move(cj));
  }
  return j;
}

std::string augment_strings(const std::string& scene_json, const std::string& task_json,
                            int decimals, bool canonical, bool ablate_abs, bool ablate_rel,
                            double half_angle) {
  const oci::Scene scene = oci::scene_from_json(scene_json);
  const oci::TaskSpec task = oci::task_from_json(task_json);
  oci::RenderConfig rc;
  rc.decimals = decimals;
  rc.canonical = canonical;
  rc.ablate_abs = ablate_abs;
  rc.ablate_rel = ablate_rel;
  oci::SectorConfig sc;
  sc.cardinal_half_angle_deg = half_angle;
  return oci::augment(scene, task, rc, sc).text;
}

std::string parse_to_json(const std::string& text) {
  return structured_json(oci::parse_augmented(text)).dump();
}

std::string sample_instance_json(int family, std::uint64_t seed) {
  const oci::sim::Instance inst = oci::sim::sample_scene(oci::sim::family_from_int(family), seed);
  ordered_json j;
  j["scene"] = ordered_json::parse(oci::scene_to_json(inst.scene));
  j["task"] = ordered_json::parse(oci::task_to_json(inst.task));
  return j.dump();
}

py::dict suite_dict(const oci::selfcheck::SuiteResult& s) {
  py::dict d;
  d["name"] = s.name;
  d["ok"] = s.ok;
  d["cases"] = s.cases;
  d["failures"] = s.failures;
  d["max_err"] = s.max_err;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Object-centric instruction augmentation workbench";

  // Subclass translators must win over the base, so the base registers
  // first (translators run newest-first).
  static py::exception<oci::Error> exc_base(m, "Error");
  py::register_exception<oci::IoError>(m, "IoError", exc_base);
  py::register_exception<oci::NumericError>(m, "NumericError", exc_base);
  py::register_exception<oci::UsageError>(m, "UsageError", exc_base);
  py::register_exception<oci::ConfigError>(m, "ConfigError", exc_base);
  py::register_exception<oci::ParseError>(m, "ParseError", exc_base);
  py::register_exception<oci::ValidationError>(m, "ValidationError", exc_base);

  m.def("augment", &augment_strings, py::arg("scene_json"), py::arg("task_json"),
        py::arg("decimals") = 3, py::arg("canonical") = true, py::arg("ablate_abs") = false,
        py::arg("ablate_rel") = false, py::arg("half_angle") = 22.5,
        "Render the augmented instruction text from scene/task JSON strings.");

  m.def("parse", &parse_to_json, py::arg("text"),
        "Parse augmented text back to its structured form (JSON string).");

  m.def(
      "render_bbox",
      [](double x_min, double y_min, double x_max, double y_max, int decimals, bool canonical) {
        oci::RenderConfig rc;
        rc.decimals = decimals;
        rc.canonical = canonical;
        return oci::render_bbox(oci::BBox{x_min, y_min, x_max, y_max}, rc);
      },
      py::arg("x_min"), py::arg("y_min"), py::arg("x_max"), py::arg("y_max"),
      py::arg("decimals") = 3, py::arg("canonical") = true,
      "Format a normalized box as it appears inside instructions.");

  m.def(
      "classify_offset",
      [](double dx, double dy) { return oci::direction_name(oci::classify_offset(dx, dy)); },
      py::arg("dx"), py::arg("dy"),
      "8-way direction of an offset (image y axis points down).");

  m.def(
      "paraphrase",
      [](const std::string& task_json, int k, std::uint64_t seed) {
        return oci::paraphrase(oci::task_from_json(task_json), k, seed);
      },
      py::arg("task_json"), py::arg("k"), py::arg("seed") = 0,
      "k seeded wordings of the task instruction.");

  m.def("sample_instance", &sample_instance_json, py::arg("family"), py::arg("seed"),
        "Sample a solvable gridworld instance; returns {scene, task} JSON.");

  m.def(
      "selftest",
      [](int roundtrip_cases, int direction_cases, std::uint64_t seed) {
        py::list out;
        out.append(suite_dict(oci::selfcheck::run_grad_suite(seed)));
        out.append(suite_dict(oci::selfcheck::run_roundtrip_suite(roundtrip_cases, seed)));
        out.append(suite_dict(oci::selfcheck::run_direction_suite(direction_cases, seed)));
        return out;
      },
      py::arg("roundtrip_cases") = 200, py::arg("direction_cases") = 2000, py::arg("seed") = 0,
      "Run the verification suites; returns one dict per suite.");
}
