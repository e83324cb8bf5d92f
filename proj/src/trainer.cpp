#include "oci/trainer.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "oci/errors.hpp"
#include "oci/rng.hpp"

namespace oci::trainer {

namespace fs = std::filesystem;
using autodiff::Param;
using autodiff::Tape;
using json = nlohmann::ordered_json;

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kGradClipNorm = 5.0;
constexpr double kDropout = 0.2;
}  // namespace

augmenter::RenderConfig TrainConfig::render() const {
  augmenter::RenderConfig rc;
  rc.ablate_abs = !use_abs;
  rc.ablate_rel = !use_rel;
  return rc;
}

void TrainConfig::validate() const {
  sim::family_from_int(family);
  if (n_demos < 1) throw ConfigError("trainer: n_demos must be >= 1");
  if (epochs < 0) throw ConfigError("trainer: epochs must be >= 0");
  if (batch < 1) throw ConfigError("trainer: batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("trainer: lr must be positive");
  if (eval_episodes < 1) throw ConfigError("trainer: eval_episodes must be >= 1");
  if (eval_seeds < 1) throw ConfigError("trainer: eval_seeds must be >= 1");
  frm.validate();
}

std::vector<DemoEpisode> gen_episodes(const TrainConfig& cfg) {
  cfg.validate();
  const sim::TaskFamily fam = sim::family_from_int(cfg.family);
  const augmenter::RenderConfig rc = cfg.render();
  std::vector<DemoEpisode> out;
  out.reserve(static_cast<std::size_t>(cfg.n_demos));
  for (int i = 0; i < cfg.n_demos; ++i) {
    sim::Instance inst =
        sim::sample_scene(fam, mix_seed(cfg.seed, "demo", static_cast<std::uint64_t>(i)));
    augmenter::TaskSpec task = inst.task;
    task.verb_template = augmenter::paraphrase_template(
        inst.task, mix_seed(cfg.seed, "para", static_cast<std::uint64_t>(i)));
    const augmenter::AugmentResult aug = augmenter::augment(inst.scene, task, rc);
    const sim::Episode demo = sim::expert_demo(inst.world, task);
    DemoEpisode ep;
    ep.task = std::move(task);
    ep.scene = std::move(inst.scene);
    ep.aug_text = aug.text;
    ep.steps = demo.trajectory;
    ep.success = demo.success;
    out.push_back(std::move(ep));
  }
  return out;
}

namespace {

void require_keys(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw ValidationError(std::string(what) + ": expected a JSON object");
  std::set<std::string> allowed;
  for (const char* k : keys) {
    allowed.insert(k);
    if (!j.contains(k))
      throw ValidationError(std::string(what) + ": missing key \"" + k + "\"");
  }
  for (const auto& el : j.items())
    if (!allowed.count(el.key()))
      throw ValidationError(std::string(what) + ": unknown key \"" + el.key() + "\"");
}

json obs_to_json(const encoders::ObsTensor& o) {
  json grid = json::array();
  for (int x = 0; x < o.width; ++x) {
    json col = json::array();
    for (int y = 0; y < o.height; ++y) {
      json cell = json::array();
      for (int c = 0; c < o.channels; ++c) cell.push_back(o.at(x, y, c));
      col.push_back(std::move(cell));
    }
    grid.push_back(std::move(col));
  }
  return grid;
}

encoders::ObsTensor obs_from_json(const json& j) {
  if (!j.is_array() || j.empty())
    throw ValidationError("demo line: obs must be a non-empty nested array");
  const int w = static_cast<int>(j.size());
  if (!j.at(0).is_array() || j.at(0).empty())
    throw ValidationError("demo line: obs columns must be non-empty arrays");
  const int h = static_cast<int>(j.at(0).size());
  encoders::ObsTensor o = encoders::ObsTensor::zeros(w, h);
  for (int x = 0; x < w; ++x) {
    const json& col = j.at(static_cast<std::size_t>(x));
    if (!col.is_array() || static_cast<int>(col.size()) != h)
      throw ValidationError("demo line: ragged obs grid");
    for (int y = 0; y < h; ++y) {
      const json& cell = col.at(static_cast<std::size_t>(y));
      if (!cell.is_array() || static_cast<int>(cell.size()) != o.channels)
        throw ValidationError("demo line: obs cell must have " +
                         std::to_string(o.channels) + " channels");
      for (int c = 0; c < o.channels; ++c)
        o.at(x, y, c) = cell.at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  o.validate();
  return o;
}

json episode_to_json(const DemoEpisode& ep) {
  json line;
  line["task"] = json::parse(augmenter::task_to_json(ep.task));
  line["scene"] = json::parse(geometry::scene_to_json(ep.scene));
  line["aug_text"] = ep.aug_text;
  json steps = json::array();
  for (const sim::TimeStep& st : ep.steps) {
    json s;
    s["obs"] = obs_to_json(st.obs);
    s["action"] = sim::action_name(st.action);
    steps.push_back(std::move(s));
  }
  line["steps"] = std::move(steps);
  line["success"] = ep.success;
  return line;
}

DemoEpisode episode_from_json(const json& line) {
  require_keys(line, {"task", "scene", "aug_text", "steps", "success"}, "demo line");
  DemoEpisode ep;
  ep.task = augmenter::task_from_json(line.at("task").dump());
  ep.scene = geometry::scene_from_json(line.at("scene").dump());
  if (!line.at("aug_text").is_string())
    throw ValidationError("demo line: aug_text must be a string");
  ep.aug_text = line.at("aug_text").get<std::string>();
  const json& steps = line.at("steps");
  if (!steps.is_array()) throw ValidationError("demo line: steps must be an array");
  for (const json& s : steps) {
    require_keys(s, {"obs", "action"}, "demo step");
    if (!s.at("action").is_string())
      throw ValidationError("demo step: action must be a string");
    sim::TimeStep ts;
    ts.obs = obs_from_json(s.at("obs"));
    ts.action = sim::action_from_name(s.at("action").get<std::string>());
    ep.steps.push_back(std::move(ts));
  }
  if (!line.at("success").is_boolean())
    throw ValidationError("demo line: success must be a boolean");
  ep.success = line.at("success").get<bool>();
  return ep;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<DemoEpisode>& eps) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  for (const DemoEpisode& ep : eps) f << episode_to_json(ep).dump() << '\n';
  f.flush();
  if (!f) throw IoError("write failed for '" + path + "'");
}

std::vector<DemoEpisode> load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::vector<DemoEpisode> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("'" + path + "' line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(episode_from_json(j));
  }
  return out;
}

std::vector<DemoEpisode> gen_dataset(const TrainConfig& cfg, const std::string& path) {
  std::vector<DemoEpisode> eps = gen_episodes(cfg);
  save_dataset(path, eps);
  return eps;
}

PolicyModel PolicyModel::init(const TrainConfig& cfg) {
  cfg.validate();
  PolicyModel m;
  m.vocab = encoders::Vocab::standard();
  m.frm_cfg = cfg.frm;
  m.use_frm = cfg.use_frm;
  const std::uint64_t ms = mix_seed(cfg.seed, "model");
  m.text_enc =
      encoders::TextEncParams::init(m.vocab.size(), cfg.frm.d_prime, mix_seed(ms, "text"));
  m.obs_enc = encoders::ObsEncParams::init(cfg.frm.d_prime, mix_seed(ms, "obs"));
  m.frm_params.init(cfg.frm, mix_seed(ms, "frm"));

  Rng rng(mix_seed(ms, "head"));
  const int in = 2 * cfg.frm.d_prime;
  m.head_w1 = Param("head.w1", Tensor::zeros({in, kHeadHidden}));
  init_glorot_uniform(m.head_w1.value, in, kHeadHidden, rng);
  m.head_b1 = Param("head.b1", Tensor::zeros({1, kHeadHidden}));
  m.head_w2 = Param("head.w2", Tensor::zeros({kHeadHidden, kHeadHidden}));
  init_glorot_uniform(m.head_w2.value, kHeadHidden, kHeadHidden, rng);
  m.head_b2 = Param("head.b2", Tensor::zeros({1, kHeadHidden}));
  m.head_w3 = Param("head.w3", Tensor::zeros({kHeadHidden, sim::kNumActions}));
  init_glorot_uniform(m.head_w3.value, kHeadHidden, sim::kNumActions, rng);
  m.head_b3 = Param("head.b3", Tensor::zeros({1, sim::kNumActions}));
  return m;
}

std::vector<Param*> PolicyModel::all() {
  std::vector<Param*> ps;
  for (Param* p : text_enc.all()) ps.push_back(p);
  for (Param* p : obs_enc.all()) ps.push_back(p);
  for (Param* p : frm_params.all()) ps.push_back(p);
  for (Param* p : {&head_w1, &head_b1, &head_w2, &head_b2, &head_w3, &head_b3})
    ps.push_back(p);
  return ps;
}

Tape::Id policy_logits(Tape& tape, PolicyModel& m, const encoders::ObsTensor& obs,
                       const encoders::TokenSeq& text, const Tensor& e_mllm, Rng* drop_rng,
                       double drop_p) {
  if (e_mllm.rank() != 2 || e_mllm.cols() != m.frm_cfg.d)
    throw ConfigError("policy: instruction embedding must be [L_E, " +
                      std::to_string(m.frm_cfg.d) + "]");
  const auto maybe_drop = [&](Tape::Id h) {
    if (drop_rng == nullptr || drop_p <= 0.0) return h;
    const double keep = 1.0 - drop_p;
    Tensor mask = Tensor::zeros(tape.value(h).shape);
    for (double& v : mask.data)
      v = (drop_rng->uniform01() < keep) ? 1.0 / keep : 0.0;
    return tape.mul(h, tape.leaf(std::move(mask)));
  };
  const Tape::Id img = encoders::encode_obs(tape, obs, m.obs_enc);
  const Tape::Id txt = encoders::encode_text(tape, text, m.text_enc);
  const Tape::Id mm = encoders::fuse(tape, img, txt);
  const Tape::Id e = tape.leaf(e_mllm);
  const Tape::Id eprime = frm::ln_mlp(tape, e, m.frm_params, m.frm_cfg);
  const Tape::Id feat =
      m.use_frm ? frm::frm_forward(tape, eprime, mm, m.frm_params, m.frm_cfg).out : eprime;
  const std::array<Tape::Id, 2> pooled{tape.mean_rows(feat), tape.mean_rows(mm)};
  Tape::Id x = maybe_drop(tape.concat_cols(std::span<const Tape::Id>(pooled)));
  x = maybe_drop(tape.relu(tape.linear(x, tape.param(m.head_w1), tape.param(m.head_b1))));
  x = maybe_drop(tape.relu(tape.linear(x, tape.param(m.head_w2), tape.param(m.head_b2))));
  return tape.linear(x, tape.param(m.head_w3), tape.param(m.head_b3));
}

sim::Action policy_act(PolicyModel& m, const encoders::ObsTensor& obs,
                       const encoders::TokenSeq& text, const Tensor& e_mllm) {
  Tape tape;
  const Tape::Id logits = policy_logits(tape, m, obs, text, e_mllm);
  const Tensor& v = tape.value(logits);
  int best = 0;
  for (int a = 1; a < sim::kNumActions; ++a)
    if (v.data[static_cast<std::size_t>(a)] > v.data[static_cast<std::size_t>(best)]) best = a;
  return static_cast<sim::Action>(best);
}

namespace {

struct SampleRef {
  int episode = 0;
  int step = 0;
};

double dataset_loss(PolicyModel& model, const std::vector<DemoEpisode>& dataset,
                    const std::vector<encoders::TokenSeq>& tokens,
                    const std::vector<const frm::EmbeddingCache*>& entries) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t e = 0; e < dataset.size(); ++e) {
    for (const sim::TimeStep& st : dataset[e].steps) {
      Tape tape;
      const Tape::Id logits =
          policy_logits(tape, model, st.obs, tokens[e], entries[e]->e_mllm);
      const Tape::Id loss =
          tape.cross_entropy_logits(logits, static_cast<int>(st.action));
      total += tape.value(loss).data[0];
      ++n;
    }
  }
  if (n == 0) throw ValidationError("train_bc: dataset has no steps");
  return total / static_cast<double>(n);
}

}  // namespace

TrainResult train_bc(const std::vector<DemoEpisode>& dataset, const TrainConfig& cfg,
                     const std::string& checkpoint_path) {
  cfg.validate();
  if (dataset.empty()) throw ValidationError("train_bc: dataset is empty");

  TrainResult res;
  res.model = PolicyModel::init(cfg);
  PolicyModel& model = res.model;

  // Episode-level context: the frozen embedding is computed once per
  // episode through the cache and reused for every step and epoch.
  encoders::FrozenEmbedder embedder(mix_seed(cfg.seed, "frozen"), cfg.frm.d, model.vocab);
  frm::EmbeddingCacheStore cache(cfg.render(), {});
  std::vector<encoders::TokenSeq> tokens;
  std::vector<const frm::EmbeddingCache*> entries;
  std::vector<SampleRef> samples;
  tokens.reserve(dataset.size());
  entries.reserve(dataset.size());
  for (std::size_t e = 0; e < dataset.size(); ++e) {
    const DemoEpisode& ep = dataset[e];
    const frm::EmbeddingCache& entry =
        cache.get_or_create("train/" + std::to_string(e), ep.scene, ep.task, embedder);
    if (entry.augmented_text != ep.aug_text)
      throw ConfigError("train_bc: dataset line " + std::to_string(e) +
                        " was rendered with different augmentation flags than cfg");
    entries.push_back(&entry);
    tokens.push_back(encoders::tokenize_text(entry.augmented_text, model.vocab));
    for (std::size_t s = 0; s < ep.steps.size(); ++s)
      samples.push_back({static_cast<int>(e), static_cast<int>(s)});
  }
  res.embedder_invocations = embedder.invocations();

  res.epoch_losses.push_back(dataset_loss(model, dataset, tokens, entries));

  std::vector<Param*> params = model.all();
  autodiff::AdamConfig acfg;
  acfg.lr = cfg.lr;
  autodiff::Adam opt(params, acfg);

  Rng order_rng(mix_seed(cfg.seed, "train_order"));
  Rng drop_rng(mix_seed(cfg.seed, "dropout"));
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Half-cosine decay from cfg.lr to ~0 plus a global-norm gradient clip:
    // Adam at a flat step size reliably destabilizes late in training on the
    // near-duplicate instruction sets of family 5, losing the fitted policy.
    opt.set_lr(cfg.lr * 0.5 *
               (1.0 + std::cos(kPi * static_cast<double>(epoch - 1) /
                               std::max(1, cfg.epochs))));
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t bn =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), order.size() - done);
      for (std::size_t k = 0; k < bn; ++k) {
        const SampleRef& smp = samples[static_cast<std::size_t>(order[done + k])];
        const DemoEpisode& ep = dataset[static_cast<std::size_t>(smp.episode)];
        const sim::TimeStep& st = ep.steps[static_cast<std::size_t>(smp.step)];
        Tape tape;
        const Tape::Id logits = policy_logits(
            tape, model, st.obs, tokens[static_cast<std::size_t>(smp.episode)],
            entries[static_cast<std::size_t>(smp.episode)]->e_mllm);
        const Tape::Id loss =
            tape.cross_entropy_logits(logits, static_cast<int>(st.action));
        epoch_loss += tape.value(loss).data[0];
        tape.backward(tape.scale(loss, 1.0 / static_cast<double>(bn)));
      }
      clip_grad_norm(params, kGradClipNorm);
      opt.step();
      done += bn;
    }
    epoch_loss /= static_cast<double>(samples.size());
    if (!std::isfinite(epoch_loss))
      throw NumericError("train_bc: loss diverged at epoch " + std::to_string(epoch));
    res.epoch_losses.push_back(epoch_loss);
  }

  if (!checkpoint_path.empty()) autodiff::save_checkpoint(checkpoint_path, params);
  return res;
}

Metrics evaluate(PolicyModel* model, const TrainConfig& cfg) {
  cfg.validate();
  const sim::TaskFamily fam = sim::family_from_int(cfg.family);
  const encoders::Vocab vocab = model ? model->vocab : encoders::Vocab::standard();
  encoders::FrozenEmbedder embedder(mix_seed(cfg.seed, "frozen"), cfg.frm.d, vocab);
  frm::EmbeddingCacheStore cache(cfg.render(), {});

  Metrics m;
  double rate_sum = 0.0;
  std::int64_t total_len = 0;
  for (int es = 0; es < cfg.eval_seeds; ++es) {
    int successes = 0;
    for (int ei = 0; ei < cfg.eval_episodes; ++ei) {
      const std::uint64_t esalt =
          static_cast<std::uint64_t>(es) * 1000003ull + static_cast<std::uint64_t>(ei);
      sim::Instance inst = sim::sample_scene(fam, mix_seed(cfg.seed, "eval", esalt));
      augmenter::TaskSpec task = inst.task;
      task.verb_template =
          augmenter::paraphrase_template(inst.task, mix_seed(cfg.seed, "eval_para", esalt));
      const std::string id = "eval/" + std::to_string(es) + "/" + std::to_string(ei);
      const frm::EmbeddingCache& entry = cache.get_or_create(id, inst.scene, task, embedder);
      const encoders::TokenSeq tokens = encoders::tokenize_text(entry.augmented_text, vocab);
      sim::GridWorld w = inst.world;
      int len = 0;
      for (; len < sim::kHorizon && !sim::success(w, task); ++len) {
        const sim::Action a = model
                                  ? policy_act(*model, sim::observe(w), tokens, entry.e_mllm)
                                  : sim::expert_action(w, task);
        w = sim::step(w, a);
      }
      if (sim::success(w, task)) ++successes;
      total_len += len;
      ++m.episodes;
    }
    rate_sum += static_cast<double>(successes) / static_cast<double>(cfg.eval_episodes);
  }
  m.success_rate = rate_sum / static_cast<double>(cfg.eval_seeds);
  m.mean_episode_length = static_cast<double>(total_len) / static_cast<double>(m.episodes);
  m.embedder_invocations = embedder.invocations();
  return m;
}

const std::vector<std::string>& grid_variants() {
  static const std::vector<std::string> v = {"full", "no_abs", "no_rel", "no_frm", "plain"};
  return v;
}

namespace {

TrainConfig cell_config(const TrainConfig& base, const GridCell& cell) {
  TrainConfig c = base;
  c.family = cell.family;
  c.n_demos = cell.regime;
  c.use_abs = true;
  c.use_rel = true;
  c.use_frm = true;
  if (cell.variant == "no_abs") {
    c.use_abs = false;
  } else if (cell.variant == "no_rel") {
    c.use_rel = false;
  } else if (cell.variant == "no_frm") {
    c.use_frm = false;
  } else if (cell.variant == "plain") {
    c.use_abs = false;
    c.use_rel = false;
  } else if (cell.variant != "full") {
    throw ConfigError("unknown grid variant '" + cell.variant + "'");
  }
  // Variants within a repetition share a seed, hence the same demo
  // scenes and paraphrases; only the flags differ.
  c.seed = mix_seed(base.seed, "rep", static_cast<std::uint64_t>(cell.seed_index));
  return c;
}

std::string format_rate(double r) {
  if (!std::isfinite(r)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", r);
  return buf;
}

}  // namespace

GridResult run_ablation_grid(const TrainConfig& base, int n_seeds,
                             const std::string& out_dir, int jobs) {
  base.validate();
  if (n_seeds < 1) throw ConfigError("grid: n_seeds must be >= 1");
  if (jobs < 1) throw ConfigError("grid: jobs must be >= 1");

  GridResult res;
  const std::array<int, 2> regimes{10, 25};
  for (int family = 1; family <= 5; ++family)
    for (int regime : regimes)
      for (const std::string& variant : grid_variants())
        for (int s = 0; s < n_seeds; ++s) {
          GridCell c;
          c.family = family;
          c.regime = regime;
          c.variant = variant;
          c.seed_index = s;
          res.cells.push_back(std::move(c));
        }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= res.cells.size()) return;
      GridCell& cell = res.cells[i];
      try {
        const TrainConfig cfg = cell_config(base, cell);
        const std::vector<DemoEpisode> demos = gen_episodes(cfg);
        TrainResult tr = train_bc(demos, cfg);
        const Metrics mx = evaluate(&tr.model, cfg);
        cell.success_rate = mx.success_rate;
        cell.episodes = static_cast<std::int64_t>(demos.size()) + mx.episodes;
        cell.embedder_invocations = tr.embedder_invocations + mx.embedder_invocations;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
        cell.success_rate = std::numeric_limits<double>::quiet_NaN();
      }
    }
  };
  const int nthreads =
      static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), res.cells.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  fs::create_directories(out_dir);
  const fs::path csv = fs::path(out_dir) / "metrics.csv";
  const fs::path audit = fs::path(out_dir) / "cache_audit.csv";

  {
    std::ofstream f(csv, std::ios::binary);
    if (!f) throw IoError("cannot open '" + csv.string() + "' for writing");
    f << "family,regime,variant,seed,success_rate\n";
    for (const GridCell& c : res.cells)
      f << c.family << ',' << c.regime << ',' << c.variant << ',' << c.seed_index << ','
        << format_rate(c.success_rate) << '\n';
    // Aggregate rows: mean over seeds for each (family, regime, variant).
    for (int family = 1; family <= 5; ++family)
      for (int regime : regimes)
        for (const std::string& variant : grid_variants()) {
          double sum = 0.0;
          int n = 0;
          for (const GridCell& c : res.cells)
            if (c.family == family && c.regime == regime && c.variant == variant) {
              sum += c.success_rate;
              ++n;
            }
          f << family << ',' << regime << ',' << variant << ",mean,"
            << format_rate(sum / static_cast<double>(n)) << '\n';
        }
    f.flush();
    if (!f) throw IoError("write failed for '" + csv.string() + "'");
  }
  {
    std::ofstream f(audit, std::ios::binary);
    if (!f) throw IoError("cannot open '" + audit.string() + "' for writing");
    f << "family,regime,variant,seed,episodes,embedder_invocations\n";
    for (const GridCell& c : res.cells)
      f << c.family << ',' << c.regime << ',' << c.variant << ',' << c.seed_index << ','
        << c.episodes << ',' << c.embedder_invocations << '\n';
    f.flush();
    if (!f) throw IoError("write failed for '" + audit.string() + "'");
  }

  res.csv_path = csv.string();
  res.audit_path = audit.string();
  return res;
}

}  // namespace oci::trainer
