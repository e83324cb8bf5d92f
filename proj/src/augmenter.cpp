#include "oci/augmenter.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oci/errors.hpp"

namespace oci {

using ordered_json = nlohmann::ordered_json;

void RenderConfig::validate() const {
  if (decimals < 1)
    throw ConfigError("render decimals must be >= 1, got " + std::to_string(decimals));
}

std::string render_bbox(const BBox& b, const RenderConfig& cfg) {
  cfg.validate();
  b.require_valid("render_bbox");
  auto fmt = [&](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", cfg.decimals, v);
    std::string s(buf);
    if (!cfg.canonical && s.find('.') != std::string::npos) {
      while (s.back() == '0') s.pop_back();
      if (s.back() == '.') s.pop_back();
    }
    return s;
  };
  return "[" + fmt(b.x_min) + ", " + fmt(b.y_min) + ", " + fmt(b.x_max) + ", " + fmt(b.y_max) +
         "]";
}

std::string display_name(const SceneObject& o) {
  if (o.color.empty()) return o.name;
  const std::string first = o.name.substr(0, o.name.find(' '));
  if (first == o.color) return o.name;
  return o.color + " " + o.name;
}

namespace {

// The box exactly as a reader of the rendered text recovers it: each
// field goes through the same fixed-point formatting and back. Keeps
// the structured output equal to what parse_augmented reconstructs.
BBox quantize_bbox(const BBox& b, const RenderConfig& cfg) {
  auto q = [&](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", cfg.decimals, v);
    return std::strtod(buf, nullptr);
  };
  return BBox{q(b.x_min), q(b.y_min), q(b.x_max), q(b.y_max)};
}

// Grammar/function words that never occur inside an object name; the
// mention parser walks backwards from a bracket tuple until it meets one.
const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "the",    "a",     "an",       "to",      "on",     "onto",  "into",   "in",
      "at",     "of",    "and",      "it",      "is",     "up",    "over",   "across",
      "out",    "open",  "pick",     "grab",    "take",   "lift",  "set",    "position",
      "put",    "place", "move",     "bring",   "carry",  "transfer",        "deliver",
      "drop",   "shift", "pull",     "flip",    "pop",    "swing", "crack",  "prop",
      "unlatch",         "uncover",  "unseal",  "raise"};
  return words;
}

std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_word_char(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0;
}

int count_occurrences(const std::string& text, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

struct SlotRef {
  std::size_t name_end;  // position just past the substituted name
  const SceneObject* object;
};

// Replaces {target}/{destination} and records where each name ends.
std::string instantiate_template(const std::string& tpl, const SceneObject* target,
                                 const SceneObject* destination, std::vector<SlotRef>* slots) {
  std::string out;
  out.reserve(tpl.size() + 32);
  for (std::size_t i = 0; i < tpl.size();) {
    if (tpl[i] != '{') {
      out.push_back(tpl[i++]);
      continue;
    }
    const std::size_t close = tpl.find('}', i);
    if (close == std::string::npos)
      throw ValidationError("task template: unterminated '{' slot");
    const std::string slot = tpl.substr(i + 1, close - i - 1);
    const SceneObject* obj = nullptr;
    if (slot == "target") obj = target;
    else if (slot == "destination") obj = destination;
    else throw ValidationError("task template: unknown slot '{" + slot + "}'");
    if (!obj) throw ValidationError("task template: slot '{" + slot + "}' has no bound object");
    out += obj->name;
    if (slots) slots->push_back({out.size(), obj});
    i = close + 1;
  }
  return out;
}

void validate_template(const TaskSpec& task) {
  if (count_occurrences(task.verb_template, "{target}") != 1)
    throw ValidationError("task template must contain {target} exactly once: '" +
                          task.verb_template + "'");
  const int want_dest = task.has_destination() ? 1 : 0;
  if (count_occurrences(task.verb_template, "{destination}") != want_dest)
    throw ValidationError(task.has_destination()
                              ? "task template must contain {destination} exactly once: '" +
                                    task.verb_template + "'"
                              : "task template must not contain {destination}: '" +
                                    task.verb_template + "'");
}

}  // namespace

AugmentResult augment(const Scene& scene, const TaskSpec& task, const RenderConfig& cfg,
                      const SectorConfig& sector) {
  cfg.validate();
  sector.validate();
  const auto violations = validate_scene(scene);
  if (!violations.empty()) {
    std::ostringstream os;
    os << "augment: scene invalid:";
    for (const Violation& v : violations) os << " [" << violation_code_name(v.code) << "] "
                                             << v.message << ";";
    throw ValidationError(os.str());
  }
  validate_template(task);
  const SceneObject* target = scene.find(task.target_name);
  if (!target)
    throw ValidationError("augment: task references unknown object '" + task.target_name + "'");
  const SceneObject* destination = nullptr;
  if (task.has_destination()) {
    destination = scene.find(task.destination_name);
    if (!destination)
      throw ValidationError("augment: task references unknown object '" +
                            task.destination_name + "'");
  }

  std::vector<SlotRef> slots;
  std::string original = instantiate_template(task.verb_template, target, destination, &slots);
  // Relative sentences need the instruction to be a closed sentence first.
  if (!cfg.ablate_rel &&
      (original.empty() || std::string(".!?").find(original.back()) == std::string::npos))
    original += ".";

  AugmentResult res;
  res.structured.original = original;
  res.text = original;

  if (!cfg.ablate_abs) {
    std::size_t shift = 0;
    for (const SlotRef& s : slots) {
      const std::string rendered = " " + render_bbox(s.object->bbox, cfg);
      res.text.insert(s.name_end + shift, rendered);
      shift += rendered.size();
      res.structured.mentions.push_back({s.object->name, quantize_bbox(s.object->bbox, cfg)});
    }
  }

  if (!cfg.ablate_rel) {
    for (const SlotRef& s : slots) {
      const Direction dir = classify_direction(s.object->bbox, scene.robot_ref, sector);
      RelativeClause clause;
      clause.name = display_name(*s.object);
      clause.direction = dir;
      std::string sentence =
          "The " + clause.name + " is on the " + direction_word(dir) + " of the robotic arm";
      if (!cfg.ablate_abs) {
        sentence += " " + render_bbox(scene.robot_ref, cfg);
        clause.robot_bbox = quantize_bbox(scene.robot_ref, cfg);
      }
      sentence += ".";
      res.text += " " + sentence;
      res.structured.relative_clauses.push_back(std::move(clause));
    }
  }
  return res;
}

namespace {

struct TupleTok {
  std::size_t lb = 0;  // byte of '['
  std::size_t rb = 0;  // byte of ']'
  BBox box;
  bool consumed = false;
};

bool is_decimal_literal(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = 0, digits = 0;
  for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) ++digits;
  if (digits == 0) return false;
  if (i == s.size()) return true;
  if (s[i] != '.') return false;
  ++i;
  std::size_t frac = 0;
  for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) ++frac;
  return frac > 0 && i == s.size();
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(' ');
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(' ');
  return s.substr(a, b - a + 1);
}

std::vector<TupleTok> scan_tuples(const std::string& text) {
  std::vector<TupleTok> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '[') continue;
    const std::size_t close = text.find(']', i);
    if (close == std::string::npos)
      throw ParseError("unterminated bracket tuple", i);
    const std::string inner = text.substr(i + 1, close - i - 1);
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = inner.find(',', start);
      parts.push_back(trim(inner.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (parts.size() != 4)
      throw ParseError("bracket tuple must contain exactly 4 numbers, got " +
                           std::to_string(parts.size()),
                       i);
    double v[4];
    for (int k = 0; k < 4; ++k) {
      if (!is_decimal_literal(parts[k]))
        throw ParseError("bracket tuple entry '" + parts[k] + "' is not a decimal literal", i);
      v[k] = std::strtod(parts[k].c_str(), nullptr);
      if (v[k] < 0.0 || v[k] > 1.0)
        throw ParseError("bracket tuple coordinate " + parts[k] + " is out of [0, 1]", i);
    }
    if (v[0] > v[2] || v[1] > v[3])
      throw ParseError("bracket tuple is not a valid box (min exceeds max)", i);
    out.push_back({i, close, BBox{v[0], v[1], v[2], v[3]}, false});
    i = close;
  }
  return out;
}

struct SentenceSpan {
  std::size_t raw_begin;  // split point (right after previous terminator)
  std::size_t begin;      // first non-space byte
  std::size_t end;        // one past the terminator (or text end)
};

std::vector<SentenceSpan> split_sentences(const std::string& text,
                                          const std::vector<TupleTok>& tuples) {
  auto inside_tuple = [&](std::size_t i) {
    for (const TupleTok& t : tuples)
      if (i >= t.lb && i <= t.rb) return true;
    return false;
  };
  std::vector<SentenceSpan> out;
  std::size_t raw_begin = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool terminator =
        (c == '.' || c == '!' || c == '?') && !inside_tuple(i);
    if (!terminator && i + 1 != text.size()) continue;
    const std::size_t end = i + 1;
    std::size_t begin = raw_begin;
    while (begin < end && text[begin] == ' ') ++begin;
    if (begin < end) out.push_back({raw_begin, begin, end});
    raw_begin = end;
  }
  return out;
}

struct ClauseMatch {
  RelativeClause clause;
  int tuple_index = -1;  // robot box tuple consumed, if any
};

// The sentence must exactly match
//   "The {name} is on the {dir} of the robotic arm[ {tuple}]{.|!|?}"
// Returns nullopt when the frame does not match; throws on a matching
// frame with an unknown direction word.
std::optional<ClauseMatch> match_clause(const std::string& text, const SentenceSpan& s,
                                        std::vector<TupleTok>& tuples) {
  const std::string sent = text.substr(s.begin, s.end - s.begin);
  if (sent.rfind("The ", 0) != 0) return std::nullopt;
  const std::size_t is_pos = sent.find(" is on the ");
  if (is_pos == std::string::npos) return std::nullopt;
  const std::string name = sent.substr(4, is_pos - 4);
  if (name.empty() || name.find('[') != std::string::npos) return std::nullopt;
  const std::size_t dir_begin = is_pos + 11;
  const std::size_t arm_pos = sent.find(" of the robotic arm", dir_begin);
  if (arm_pos == std::string::npos) return std::nullopt;
  const std::string dir_text = sent.substr(dir_begin, arm_pos - dir_begin);
  std::size_t tail = arm_pos + 19;

  std::optional<BBox> robot;
  int tuple_index = -1;
  if (tail < sent.size() && sent[tail] == ' ' && tail + 1 < sent.size() &&
      sent[tail + 1] == '[') {
    const std::size_t lb_abs = s.begin + tail + 1;
    for (std::size_t k = 0; k < tuples.size(); ++k) {
      if (tuples[k].lb == lb_abs) {
        robot = tuples[k].box;
        tuple_index = static_cast<int>(k);
        tail = tuples[k].rb - s.begin + 1;
        break;
      }
    }
    if (tuple_index < 0) return std::nullopt;  // bracket not aligned with a tuple
  }
  if (tail + 1 != sent.size() || std::string(".!?").find(sent[tail]) == std::string::npos)
    return std::nullopt;

  const auto dir = direction_from_word(dir_text);
  if (!dir) {
    std::string valid;
    for (const std::string& w : all_direction_words()) {
      if (!valid.empty()) valid += ", ";
      valid += w;
    }
    throw ParseError("unknown direction word '" + dir_text + "'; expected one of: " + valid,
                     s.begin + dir_begin);
  }
  ClauseMatch m;
  m.clause.name = name;
  m.clause.direction = *dir;
  m.clause.robot_bbox = robot;
  m.tuple_index = tuple_index;
  return m;
}

}  // namespace

AugmentedInstruction parse_augmented(const std::string& text) {
  std::vector<TupleTok> tuples = scan_tuples(text);
  const std::vector<SentenceSpan> sentences = split_sentences(text, tuples);

  AugmentedInstruction out;
  struct Removal {
    std::size_t begin, end;
  };
  std::vector<Removal> removals;

  std::vector<SentenceSpan> plain_sentences;
  for (const SentenceSpan& s : sentences) {
    if (auto m = match_clause(text, s, tuples)) {
      out.relative_clauses.push_back(m->clause);
      if (m->tuple_index >= 0) tuples[static_cast<std::size_t>(m->tuple_index)].consumed = true;
      removals.push_back({s.raw_begin, s.end});
    } else {
      plain_sentences.push_back(s);
    }
  }

  for (TupleTok& t : tuples) {
    if (t.consumed) continue;
    const SentenceSpan* home = nullptr;
    for (const SentenceSpan& s : plain_sentences)
      if (t.lb >= s.begin && t.lb < s.end) {
        home = &s;
        break;
      }
    if (!home) continue;  // tuple inside a clause sentence but not the robot slot
    if (t.lb == home->begin || text[t.lb - 1] != ' ') continue;  // nothing to bind to
    // Walk backwards over words until a stopword or non-word character.
    std::size_t name_end = t.lb - 1;  // points at the separating space
    std::vector<std::string> words;
    std::size_t cursor = name_end;
    while (cursor > home->begin && text[cursor - 1] == ' ') --cursor;  // tolerate one space only
    while (cursor > home->begin) {
      std::size_t w_end = cursor;
      std::size_t w_begin = w_end;
      while (w_begin > home->begin && is_word_char(text[w_begin - 1])) --w_begin;
      if (w_begin == w_end) break;  // punctuation or bracket
      const std::string word = text.substr(w_begin, w_end - w_begin);
      if (stopwords().count(to_lower(word))) break;
      words.push_back(word);
      cursor = w_begin;
      if (cursor > home->begin && text[cursor - 1] == ' ')
        --cursor;
      else
        break;
    }
    if (words.empty()) continue;
    std::reverse(words.begin(), words.end());
    std::string name;
    for (const std::string& w : words) {
      if (!name.empty()) name += " ";
      name += w;
    }
    out.mentions.push_back({name, t.box});
    t.consumed = true;
    removals.push_back({name_end, t.rb + 1});
  }

  std::sort(removals.begin(), removals.end(),
            [](const Removal& a, const Removal& b) { return a.begin < b.begin; });
  std::string original;
  std::size_t cursor = 0;
  for (const Removal& r : removals) {
    original += text.substr(cursor, r.begin - cursor);
    cursor = r.end;
  }
  original += text.substr(cursor);
  out.original = original;
  return out;
}

namespace {

std::vector<std::string> make_two_slot_bank() {
  return {
      "Grab {target} and set it on {destination}.",
      "Take {target} and position it on {destination}.",
      "Lift {target} and put it onto {destination}.",
      "Pick up the {target} and place it on the {destination}.",
      "Move the {target} onto the {destination}.",
      "Bring the {target} over to the {destination}.",
      "Carry the {target} to the {destination}.",
      "Put the {target} on the {destination}.",
      "Transfer the {target} onto the {destination}.",
      "Deliver the {target} to the {destination}.",
      "Pick the {target} and drop it on the {destination}.",
      "Shift the {target} across to the {destination}.",
  };
}

std::vector<std::string> make_one_slot_bank() {
  return {
      "Open the {target}.",
      "Pull open the {target}.",
      "Flip open the {target}.",
      "Pop open the {target}.",
      "Swing open the {target}.",
      "Crack open the {target}.",
      "Prop open the {target}.",
      "Unlatch the {target}.",
      "Uncover the {target}.",
      "Unseal the {target}.",
      "Raise the {target}.",
  };
}

std::string fill_slots(const std::string& tpl, const TaskSpec& task) {
  std::string out = tpl;
  auto replace_all = [&](const std::string& slot, const std::string& value) {
    for (std::size_t pos = out.find(slot); pos != std::string::npos; pos = out.find(slot, pos))
      out.replace(pos, slot.size(), value), pos += value.size();
  };
  replace_all("{target}", task.target_name);
  replace_all("{destination}", task.destination_name);
  return out;
}

}  // namespace

const std::vector<std::string>& paraphrase_bank(bool has_destination) {
  static const std::vector<std::string> two = make_two_slot_bank();
  static const std::vector<std::string> one = make_one_slot_bank();
  return has_destination ? two : one;
}

std::vector<std::string> paraphrase(const TaskSpec& task, int k, uint64_t seed) {
  const auto& bank = paraphrase_bank(task.has_destination());
  const int size = static_cast<int>(bank.size());
  if (k < 0 || k > size)
    throw ValidationError("paraphrase: k=" + std::to_string(k) +
                          " exceeds the template bank size " + std::to_string(size));
  const int start = static_cast<int>(seed % static_cast<uint64_t>(size));
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(fill_slots(bank[(start + i) % size], task));
  return out;
}

std::string paraphrase_template(const TaskSpec& task, uint64_t seed) {
  const auto& bank = paraphrase_bank(task.has_destination());
  return bank[seed % bank.size()];
}

std::string task_to_json(const TaskSpec& t) {
  ordered_json j;
  j["verb_template"] = t.verb_template;
  j["target_name"] = t.target_name;
  j["destination_name"] = t.destination_name;
  return j.dump(2);
}

TaskSpec task_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("task JSON: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw ValidationError("task: expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (k != "verb_template" && k != "target_name" && k != "destination_name")
      throw ValidationError("task: unknown field '" + k + "'");
  for (const char* k : {"verb_template", "target_name"})
    if (!j.contains(k) || !j[k].is_string())
      throw ValidationError(std::string("task: missing string field '") + k + "'");
  TaskSpec t;
  t.verb_template = j["verb_template"].get<std::string>();
  t.target_name = j["target_name"].get<std::string>();
  if (j.contains("destination_name")) {
    if (!j["destination_name"].is_string())
      throw ValidationError("task: destination_name must be a string");
    t.destination_name = j["destination_name"].get<std::string>();
  }
  if (t.target_name.empty()) throw ValidationError("task: target_name must not be empty");
  validate_template(t);
  return t;
}

TaskSpec load_task(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open task file '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return task_from_json(buf.str());
}

void save_task(const std::string& path, const TaskSpec& t) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write task file '" + path + "'");
  os << task_to_json(t) << "\n";
  if (!os) throw IoError("write failed for task file '" + path + "'");
}

}  // namespace oci
