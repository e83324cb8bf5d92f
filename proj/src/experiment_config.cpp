#include "oci/experiment_config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oci/errors.hpp"

namespace oci::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad(int lineno, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(lineno) + ": " + msg);
}

long long parse_ll(const std::string& v, int lineno) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    bad(lineno, "expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) bad(lineno, "expected an integer, got '" + v + "'");
  return out;
}

int parse_int(const std::string& v, int lineno) {
  return static_cast<int>(parse_ll(v, lineno));
}

std::uint64_t parse_u64(const std::string& v, int lineno) {
  if (v.empty() || v[0] == '-') bad(lineno, "expected a non-negative integer, got '" + v + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size())
    bad(lineno, "expected a non-negative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(out);
}

double parse_double(const std::string& v, int lineno) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    bad(lineno, "expected a number, got '" + v + "'");
  }
  if (pos != v.size()) bad(lineno, "expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v, int lineno) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad(lineno, "expected true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, int lineno) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(parse_int(trim(item), lineno));
  if (out.empty()) bad(lineno, "expected a comma-separated integer list, got '" + v + "'");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void apply_key(ExperimentConfig& c, const std::string& section, const std::string& key,
               const std::string& val, int lineno) {
  if (section == "experiment") {
    if (key == "seed") c.train.seed = parse_u64(val, lineno);
    else if (key == "out_dir") c.out_dir = val;
    else if (key == "jobs") c.jobs = parse_int(val, lineno);
    else bad(lineno, "unknown key '" + key + "' in [experiment]");
  } else if (section == "train") {
    if (key == "family") c.train.family = parse_int(val, lineno);
    else if (key == "n_demos") c.train.n_demos = parse_int(val, lineno);
    else if (key == "epochs") c.train.epochs = parse_int(val, lineno);
    else if (key == "batch") c.train.batch = parse_int(val, lineno);
    else if (key == "lr") c.train.lr = parse_double(val, lineno);
    else if (key == "eval_episodes") c.train.eval_episodes = parse_int(val, lineno);
    else if (key == "eval_seeds") c.train.eval_seeds = parse_int(val, lineno);
    else if (key == "use_abs") c.train.use_abs = parse_bool(val, lineno);
    else if (key == "use_rel") c.train.use_rel = parse_bool(val, lineno);
    else if (key == "use_frm") c.train.use_frm = parse_bool(val, lineno);
    else bad(lineno, "unknown key '" + key + "' in [train]");
  } else if (section == "grid") {
    if (key == "seeds") c.grid_seeds = parse_int(val, lineno);
    else bad(lineno, "unknown key '" + key + "' in [grid]");
  } else if (section == "frm") {
    if (key == "d") c.train.frm.d = parse_int(val, lineno);
    else if (key == "d_prime") c.train.frm.d_prime = parse_int(val, lineno);
    else if (key == "n_heads") c.train.frm.n_heads = parse_int(val, lineno);
    else if (key == "rates") c.train.frm.rates = parse_int_list(val, lineno);
    else if (key == "d_h") c.train.frm.d_h = parse_int(val, lineno);
    else if (key == "conv_kernel") c.train.frm.conv_kernel = parse_int(val, lineno);
    else bad(lineno, "unknown key '" + key + "' in [frm]");
  } else if (section == "render") {
    if (key == "decimals") c.render.decimals = parse_int(val, lineno);
    else if (key == "canonical") c.render.canonical = parse_bool(val, lineno);
    else bad(lineno, "unknown key '" + key + "' in [render]");
  } else if (section == "sector") {
    if (key == "cardinal_half_angle_deg") c.sector.cardinal_half_angle_deg = parse_double(val, lineno);
    else if (key == "tie_epsilon") c.sector.tie_epsilon = parse_double(val, lineno);
    else bad(lineno, "unknown key '" + key + "' in [sector]");
  } else {
    bad(lineno, "unknown section [" + section + "]");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate();
  sector.validate();
  render.validate();
  if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
  if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
  if (grid_seeds < 1) throw ConfigError("config: grid seeds must be >= 1");
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream os;
  os << "[experiment]\n";
  os << "seed = " << train.seed << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "jobs = " << jobs << "\n";
  os << "\n[train]\n";
  os << "family = " << train.family << "\n";
  os << "n_demos = " << train.n_demos << "\n";
  os << "epochs = " << train.epochs << "\n";
  os << "batch = " << train.batch << "\n";
  os << "lr = " << fmt_double(train.lr) << "\n";
  os << "eval_episodes = " << train.eval_episodes << "\n";
  os << "eval_seeds = " << train.eval_seeds << "\n";
  os << "use_abs = " << (train.use_abs ? "true" : "false") << "\n";
  os << "use_rel = " << (train.use_rel ? "true" : "false") << "\n";
  os << "use_frm = " << (train.use_frm ? "true" : "false") << "\n";
  os << "\n[grid]\n";
  os << "seeds = " << grid_seeds << "\n";
  os << "\n[frm]\n";
  os << "d = " << train.frm.d << "\n";
  os << "d_prime = " << train.frm.d_prime << "\n";
  os << "n_heads = " << train.frm.n_heads << "\n";
  os << "rates = ";
  for (std::size_t i = 0; i < train.frm.rates.size(); ++i) {
    if (i) os << ",";
    os << train.frm.rates[i];
  }
  os << "\n";
  os << "d_h = " << train.frm.d_h << "\n";
  os << "conv_kernel = " << train.frm.conv_kernel << "\n";
  os << "\n[render]\n";
  os << "decimals = " << render.decimals << "\n";
  os << "canonical = " << (render.canonical ? "true" : "false") << "\n";
  os << "\n[sector]\n";
  os << "cardinal_half_angle_deg = " << fmt_double(sector.cardinal_half_angle_deg) << "\n";
  os << "tie_epsilon = " << fmt_double(sector.tie_epsilon) << "\n";
  return os.str();
}

ExperimentConfig ExperimentConfig::from_ini(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw, section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') bad(lineno, "unterminated section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "experiment" && section != "train" && section != "grid" &&
          section != "frm" && section != "render" && section != "sector")
        bad(lineno, "unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) bad(lineno, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) bad(lineno, "empty key");
    if (section.empty()) bad(lineno, "key '" + key + "' appears before any [section]");
    apply_key(cfg, section, key, val, lineno);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return from_ini(buf.str());
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << to_ini();
  f.flush();
  if (!f) throw IoError("write failed for '" + path + "'");
}

void ExperimentConfig::apply_env() {
  const char* env = std::getenv("OCI_SEED");
  if (env == nullptr) return;
  const std::string v(env);
  errno = 0;
  char* end = nullptr;
  const unsigned long long seed = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || errno != 0 || end != v.c_str() + v.size())
    throw ConfigError("OCI_SEED must be a non-negative integer, got '" + v + "'");
  train.seed = static_cast<std::uint64_t>(seed);
}

}  // namespace oci::cli
