// Single entry-point command line tool.
//
// Subcommands: augment, gen, train, eval, grid, selftest. Configuration
// comes from an optional INI file (--config), overridden by flags, with
// the OCI_SEED environment variable applied last. Every run directory
// receives the fully resolved config for provenance, and the final line
// on stdout is always a single JSON object.
//
// Exit codes: 0 success; 2 configuration/usage problems (bad flags, bad
// config file, malformed inputs); 1 runtime failures (io, numerics).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "oci/augmenter.hpp"
#include "oci/autodiff.hpp"
#include "oci/errors.hpp"
#include "oci/experiment_config.hpp"
#include "oci/frm.hpp"
#include "oci/geometry.hpp"
#include "oci/selfcheck.hpp"
#include "oci/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using oci::cli::ExperimentConfig;

/// All flag storage in one place; each subcommand registers a subset.
struct Opts {
  std::string config_path;
  std::string scene_path;
  std::string task_path;
  std::string checkpoint;
  std::string out_dir;
  int family = 1;
  int n_demos = 10;
  int epochs = 200;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool no_abs = false;
  bool no_rel = false;
  bool no_frm = false;
  int eval_episodes = 50;
  int eval_seeds = 5;
  int jobs = 1;
  int grid_seeds = 5;
  bool expert = false;
  int decimals = 3;
  bool trim = false;
  double half_angle = 22.5;
  int roundtrip_cases = 1000;
  int direction_cases = 10000;
};

void add_config_flag(CLI::App& sub, Opts& o) {
  sub.add_option("--config", o.config_path, "INI config file; flags override its values")
      ->check(CLI::ExistingFile);
}

void add_train_flags(CLI::App& sub, Opts& o) {
  sub.add_option("--family", o.family, "task family 1..5");
  sub.add_option("--n-demos", o.n_demos, "expert demonstrations to train on");
  sub.add_option("--epochs", o.epochs, "training epochs");
  sub.add_option("--batch", o.batch, "batch size");
  sub.add_option("--lr", o.lr, "Adam learning rate");
  sub.add_option("--seed", o.seed, "master seed (OCI_SEED overrides)");
  sub.add_flag("--no-abs", o.no_abs, "drop absolute-position tuples from instructions");
  sub.add_flag("--no-rel", o.no_rel, "drop relative-direction sentences from instructions");
  sub.add_flag("--no-frm", o.no_frm, "bypass the cross-attention block");
  sub.add_option("--eval-episodes", o.eval_episodes, "episodes per evaluation seed");
  sub.add_option("--eval-seeds", o.eval_seeds, "independent evaluation seeds");
}

/// File -> flags -> environment, then validate.
ExperimentConfig resolve(const CLI::App& sub, const Opts& o) {
  ExperimentConfig cfg;
  if (sub.count("--config")) cfg = ExperimentConfig::load(o.config_path);
  auto have = [&](const std::string& name) {
    const CLI::Option* opt = sub.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (have("--family")) cfg.train.family = o.family;
  if (have("--n-demos")) cfg.train.n_demos = o.n_demos;
  if (have("--epochs")) cfg.train.epochs = o.epochs;
  if (have("--batch")) cfg.train.batch = o.batch;
  if (have("--lr")) cfg.train.lr = o.lr;
  if (have("--seed")) cfg.train.seed = o.seed;
  if (have("--no-abs")) cfg.train.use_abs = !o.no_abs;
  if (have("--no-rel")) cfg.train.use_rel = !o.no_rel;
  if (have("--no-frm")) cfg.train.use_frm = !o.no_frm;
  if (have("--eval-episodes")) cfg.train.eval_episodes = o.eval_episodes;
  if (have("--eval-seeds")) cfg.train.eval_seeds = o.eval_seeds;
  if (have("--out")) cfg.out_dir = o.out_dir;
  if (have("--jobs")) cfg.jobs = o.jobs;
  if (have("--grid-seeds")) cfg.grid_seeds = o.grid_seeds;
  if (have("--decimals")) cfg.render.decimals = o.decimals;
  if (have("--trim")) cfg.render.canonical = !o.trim;
  if (have("--no-abs")) cfg.render.ablate_abs = o.no_abs;
  if (have("--no-rel")) cfg.render.ablate_rel = o.no_rel;
  if (have("--half-angle")) cfg.sector.cardinal_half_angle_deg = o.half_angle;
  cfg.apply_env();
  cfg.validate();
  return cfg;
}

/// Create the run directory and drop the resolved config into it.
void prepare_out_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw oci::IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
  cfg.save((fs::path(cfg.out_dir) / "config.ini").string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw oci::IoError("cannot write '" + path.string() + "'");
  out << text;
}

void emit(const json& j) { std::cout << j.dump() << "\n"; }

int cmd_augment(const CLI::App& sub, const Opts& o) {
  const ExperimentConfig cfg = resolve(sub, o);
  const oci::Scene scene = oci::load_scene(o.scene_path);
  const oci::TaskSpec task = oci::load_task(o.task_path);
  const oci::AugmentResult res = oci::augment(scene, task, cfg.render, cfg.sector);
  emit(json{{"text", res.text}});
  return 0;
}

int cmd_gen(const CLI::App& sub, const Opts& o) {
  const ExperimentConfig cfg = resolve(sub, o);
  prepare_out_dir(cfg);
  const std::string path = (fs::path(cfg.out_dir) / "demos.jsonl").string();
  const std::vector<oci::trainer::DemoEpisode> eps = oci::trainer::gen_dataset(cfg.train, path);
  emit(json{{"episodes", eps.size()},
            {"path", path},
            {"family", cfg.train.family},
            {"seed", cfg.train.seed}});
  return 0;
}

int cmd_train(const CLI::App& sub, const Opts& o) {
  const ExperimentConfig cfg = resolve(sub, o);
  prepare_out_dir(cfg);
  const fs::path out(cfg.out_dir);
  const std::vector<oci::trainer::DemoEpisode> demos =
      oci::trainer::gen_dataset(cfg.train, (out / "demos.jsonl").string());
  const std::string ckpt = (out / "model.ckpt").string();
  oci::trainer::TrainResult tr = oci::trainer::train_bc(demos, cfg.train, ckpt);
  oci::trainer::Metrics m = oci::trainer::evaluate(&tr.model, cfg.train);
  m.final_loss = tr.epoch_losses.back();
  const json summary{{"success_rate", m.success_rate},
                     {"mean_episode_length", m.mean_episode_length},
                     {"final_loss", m.final_loss},
                     {"episodes", m.episodes},
                     {"train_embedder_invocations", tr.embedder_invocations},
                     {"eval_embedder_invocations", m.embedder_invocations},
                     {"checkpoint", ckpt}};
  write_text(out / "metrics.json", summary.dump(2) + "\n");
  emit(summary);
  return 0;
}

int cmd_eval(const CLI::App& sub, const Opts& o) {
  const ExperimentConfig cfg = resolve(sub, o);
  prepare_out_dir(cfg);
  oci::trainer::Metrics m;
  std::string policy = "expert";
  if (!o.expert && sub.count("--checkpoint")) {
    oci::trainer::PolicyModel model = oci::trainer::PolicyModel::init(cfg.train);
    std::vector<oci::Param*> params = model.all();
    oci::load_checkpoint(o.checkpoint, params);
    m = oci::trainer::evaluate(&model, cfg.train);
    policy = o.checkpoint;
  } else {
    m = oci::trainer::evaluate(nullptr, cfg.train);
  }
  const json summary{{"success_rate", m.success_rate},
                     {"mean_episode_length", m.mean_episode_length},
                     {"episodes", m.episodes},
                     {"embedder_invocations", m.embedder_invocations},
                     {"policy", policy}};
  write_text(fs::path(cfg.out_dir) / "metrics.json", summary.dump(2) + "\n");
  emit(summary);
  return 0;
}

int cmd_grid(const CLI::App& sub, const Opts& o) {
  const ExperimentConfig cfg = resolve(sub, o);
  prepare_out_dir(cfg);
  const oci::trainer::GridResult gr =
      oci::trainer::run_ablation_grid(cfg.train, cfg.grid_seeds, cfg.out_dir, cfg.jobs);
  int failed = 0;
  for (const oci::trainer::GridCell& c : gr.cells) {
    if (c.failed) ++failed;
  }
  emit(json{{"cells", gr.cells.size()},
            {"failed_cells", failed},
            {"csv", gr.csv_path},
            {"audit", gr.audit_path}});
  return failed == 0 ? 0 : 1;
}

int cmd_selftest(const CLI::App& sub, const Opts& o) {
  namespace sc = oci::selfcheck;
  std::vector<sc::SuiteResult> suites;
  suites.push_back(sc::run_grad_suite(o.seed));
  std::cout << suites.back().summary() << "\n";
  suites.push_back(sc::run_roundtrip_suite(o.roundtrip_cases, o.seed));
  std::cout << suites.back().summary() << "\n";
  suites.push_back(sc::run_direction_suite(o.direction_cases, o.seed));
  std::cout << suites.back().summary() << "\n";

  if (sub.count("--checkpoint")) {
    // Verifies that the file loads into the configured model shape.
    const ExperimentConfig cfg = resolve(sub, o);
    oci::trainer::PolicyModel model = oci::trainer::PolicyModel::init(cfg.train);
    std::vector<oci::Param*> params = model.all();
    oci::load_checkpoint(o.checkpoint, params);
    std::cout << "[PASS] checkpoint: " << o.checkpoint << " loads\n";
  }

  bool ok = true;
  json arr = json::array();
  for (const sc::SuiteResult& s : suites) {
    ok = ok && s.ok;
    arr.push_back({{"name", s.name},
                   {"ok", s.ok},
                   {"cases", s.cases},
                   {"failures", s.failures},
                   {"max_err", s.max_err}});
  }
  emit(json{{"ok", ok}, {"suites", arr}});
  return ok ? 0 : 1;
}

int run(int argc, char** argv) {
  CLI::App app{"Object-centric instruction augmentation workbench"};
  app.set_version_flag("--version", "ociw 0.1.0");
  app.require_subcommand(1);
  Opts o;

  CLI::App* augment = app.add_subcommand("augment", "Rewrite one instruction with positions");
  add_config_flag(*augment, o);
  augment->add_option("--scene", o.scene_path, "scene JSON file")->required()->check(CLI::ExistingFile);
  augment->add_option("--task", o.task_path, "task JSON file")->required()->check(CLI::ExistingFile);
  augment->add_option("--decimals", o.decimals, "coordinate decimal places");
  augment->add_flag("--trim", o.trim, "trim trailing zeros instead of fixed width");
  augment->add_flag("--no-abs", o.no_abs, "drop absolute-position tuples");
  augment->add_flag("--no-rel", o.no_rel, "drop relative-direction sentences");
  augment->add_option("--half-angle", o.half_angle, "cardinal sector half-angle, degrees");

  CLI::App* gen = app.add_subcommand("gen", "Generate expert demonstrations (JSONL)");
  add_config_flag(*gen, o);
  add_train_flags(*gen, o);
  gen->add_option("--out", o.out_dir, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "Behavior-clone a policy, then evaluate it");
  add_config_flag(*train, o);
  add_train_flags(*train, o);
  train->add_option("--out", o.out_dir, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint or the scripted expert");
  add_config_flag(*eval, o);
  add_train_flags(*eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "policy checkpoint to load");
  eval->add_flag("--expert", o.expert, "evaluate the scripted expert instead of a model");
  eval->add_option("--out", o.out_dir, "output directory")->required();

  CLI::App* grid = app.add_subcommand("grid", "Run the full ablation grid");
  add_config_flag(*grid, o);
  add_train_flags(*grid, o);
  grid->add_option("--out", o.out_dir, "output directory")->required();
  grid->add_option("--jobs", o.jobs, "worker threads (output is identical for any value)");
  grid->add_option("--grid-seeds", o.grid_seeds, "repetitions per grid cell");

  CLI::App* selftest = app.add_subcommand("selftest", "Gradient, round-trip and direction suites");
  add_config_flag(*selftest, o);
  selftest->add_option("--seed", o.seed, "suite seed");
  selftest->add_option("--roundtrip-cases", o.roundtrip_cases, "round-trip case count");
  selftest->add_option("--direction-cases", o.direction_cases, "random direction case count");
  selftest->add_option("--checkpoint", o.checkpoint, "also verify this checkpoint loads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (augment->parsed()) return cmd_augment(*augment, o);
  if (gen->parsed()) return cmd_gen(*gen, o);
  if (train->parsed()) return cmd_train(*train, o);
  if (eval->parsed()) return cmd_eval(*eval, o);
  if (grid->parsed()) return cmd_grid(*grid, o);
  if (selftest->parsed()) return cmd_selftest(*selftest, o);
  return 2;  // unreachable: a subcommand is required
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const oci::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const oci::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const oci::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
