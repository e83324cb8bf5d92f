#pragma once

// Behavior-cloning harness: demo generation, cross-entropy training of
// the policy over the 6 discrete actions, greedy evaluation with the
// per-episode embedding cache, and the full ablation grid
// ({full, no_abs, no_rel, no_frm, plain} x {10,25} demos x 5 families x seeds).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oci/augmenter.hpp"
#include "oci/autodiff.hpp"
#include "oci/encoders.hpp"
#include "oci/frm.hpp"
#include "oci/sim.hpp"

namespace oci::trainer {

struct TrainConfig {
  int family = 1;
  int n_demos = 10;  // protocol regimes use 10 or 25
  int epochs = 200;
  int batch = 16;
  double lr = 1e-2;  // behavior cloning on the toy policy needs a hot step size
  std::uint64_t seed = 0;
  bool use_abs = true;  // inline absolute-position tuples in instructions
  bool use_rel = true;  // relative-direction sentences in instructions
  bool use_frm = true;  // cross-attention block (false = pooled concat only)
  frm::FrmConfig frm;
  int eval_episodes = 50;
  int eval_seeds = 5;

  bool operator==(const TrainConfig&) const = default;
  /// Render flags implied by the ablation switches.
  augmenter::RenderConfig render() const;
  void validate() const;  // throws ConfigError
};

/// One stored demonstration (JSONL line).
struct DemoEpisode {
  augmenter::TaskSpec task;  // paraphrased template bound to scene names
  geometry::Scene scene;
  std::string aug_text;
  std::vector<sim::TimeStep> steps;
  bool success = false;

  bool operator==(const DemoEpisode&) const = default;
};

/// Expert demonstrations for cfg (family, n_demos, seed, render flags),
/// instructions drawn from the paraphrase bank so wording varies.
std::vector<DemoEpisode> gen_episodes(const TrainConfig& cfg);

/// JSONL io: one episode per line,
/// {"task":{...},"scene":{...},"aug_text":"...","steps":[{"obs":[[[...]]],
///  "action":"MoveLeft"},...],"success":true}.
void save_dataset(const std::string& path, const std::vector<DemoEpisode>& eps);
std::vector<DemoEpisode> load_dataset(const std::string& path);

/// gen_episodes + save_dataset.
std::vector<DemoEpisode> gen_dataset(const TrainConfig& cfg, const std::string& path);

/// Trainable policy: encoders -> fused sequence M, frozen embedding ->
/// LN-MLP lift E', optional cross-attention, then a three-affine-layer
/// head (ReLU after the first two) over [pooled feature | pooled M].
struct PolicyModel {
  encoders::Vocab vocab;
  encoders::TextEncParams text_enc;
  encoders::ObsEncParams obs_enc;
  frm::FrmParams frm_params;
  autodiff::Param head_w1, head_b1, head_w2, head_b2, head_w3, head_b3;
  frm::FrmConfig frm_cfg;
  bool use_frm = true;

  static PolicyModel init(const TrainConfig& cfg);
  /// Trainable parameters (the frozen embedder holds plain tensors and
  /// cannot appear here).
  std::vector<autodiff::Param*> all();
};

inline constexpr int kHeadHidden = 64;

/// Action logits [1, 6] for one step. `e_mllm` is the cached frozen
/// instruction embedding for the episode. When `drop_rng` is non-null,
/// inverted dropout with rate `drop_p` is applied to the head input and
/// both hidden activations (training-time regularization; evaluation
/// passes null and stays deterministic).
autodiff::Tape::Id policy_logits(autodiff::Tape& tape, PolicyModel& model,
                                 const encoders::ObsTensor& obs,
                                 const encoders::TokenSeq& text,
                                 const Tensor& e_mllm, Rng* drop_rng = nullptr,
                                 double drop_p = 0.0);

/// Greedy action (first argmax) without gradient bookkeeping.
sim::Action policy_act(PolicyModel& model, const encoders::ObsTensor& obs,
                       const encoders::TokenSeq& text, const Tensor& e_mllm);

struct TrainResult {
  PolicyModel model;
  /// epoch_losses[0] is the pre-update dataset loss; entry e >= 1 is the
  /// mean per-sample loss seen during epoch e.
  std::vector<double> epoch_losses;
  /// Frozen-embedder calls made while caching (one per episode).
  std::int64_t embedder_invocations = 0;
};

/// Minimize mean cross-entropy of expert actions. The frozen embedder is
/// seeded from cfg and consulted once per episode through the cache.
/// Writes a checkpoint when checkpoint_path is non-empty.
TrainResult train_bc(const std::vector<DemoEpisode>& dataset, const TrainConfig& cfg,
                     const std::string& checkpoint_path = "");

struct Metrics {
  double success_rate = 0.0;         // mean over eval seeds
  double mean_episode_length = 0.0;  // mean over all eval episodes
  double final_loss = 0.0;           // last training epoch loss (filled by caller)
  std::int64_t episodes = 0;         // eval episodes rolled out
  std::int64_t embedder_invocations = 0;
};

/// Roll out eval_seeds x eval_episodes fresh instances with greedy
/// actions (model == nullptr: the scripted expert). Augmentation is
/// computed once per episode through the embedding cache.
Metrics evaluate(PolicyModel* model, const TrainConfig& cfg);

/// One grid cell result; success_rate is NaN when the cell failed.
struct GridCell {
  int family = 1;
  int regime = 10;
  std::string variant;  // full | no_abs | no_rel | no_frm | plain
  int seed_index = 0;
  double success_rate = 0.0;
  bool failed = false;
  std::string error;
  std::int64_t episodes = 0;
  std::int64_t embedder_invocations = 0;
};

struct GridResult {
  std::vector<GridCell> cells;  // fixed order: family, regime, variant, seed
  std::string csv_path;
  std::string audit_path;
};

const std::vector<std::string>& grid_variants();

/// Train + evaluate every cell; write <out_dir>/metrics.csv
/// (family,regime,variant,seed,success_rate; one row per cell then
/// "mean" aggregate rows) and <out_dir>/cache_audit.csv. Cells run on
/// `jobs` threads; output bytes do not depend on `jobs`. Per-cell
/// failures are recorded and the grid continues.
GridResult run_ablation_grid(const TrainConfig& base, int n_seeds,
                             const std::string& out_dir, int jobs = 1);

}  // namespace oci::trainer
