#include "oci/frm.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "oci/errors.hpp"
#include "oci/rng.hpp"

namespace oci::frm {

int FrmConfig::resolved_d_h() const {
  if (d_h > 0) return d_h;
  if (n_heads <= 0) return 0;
  return d_prime / n_heads;
}

void FrmConfig::validate() const {
  if (d < 2) throw ConfigError("frm: d must be >= 2 (layer norm needs width)");
  if (d_prime < 1) throw ConfigError("frm: d_prime must be >= 1");
  if (n_heads < 1) throw ConfigError("frm: n_heads must be >= 1");
  if (static_cast<int>(rates.size()) != n_heads)
    throw ConfigError("frm: rates must have one entry per head (" +
                      std::to_string(rates.size()) + " rates for " +
                      std::to_string(n_heads) + " heads)");
  for (int r : rates)
    if (r < 1) throw ConfigError("frm: down-sampling rates must be >= 1");
  const int dh = resolved_d_h();
  if (dh < 1 || dh * n_heads != d_prime)
    throw ConfigError("frm: d_h * n_heads must equal d_prime (d_h=" +
                      std::to_string(dh) + ", n_heads=" + std::to_string(n_heads) +
                      ", d_prime=" + std::to_string(d_prime) + ")");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw ConfigError("frm: conv_kernel must be a positive odd integer");
}

namespace {

Tensor glorot(std::vector<int> shape, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  init_glorot_uniform(t, t.rows(), t.cols(), rng);
  return t;
}

}  // namespace

void FrmParams::init(const FrmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int d = cfg.d;
  const int dp = cfg.d_prime;
  const int dh = cfg.resolved_d_h();

  ln_gain = Param{"frm.ln_gain", Tensor::full({1, d}, 1.0)};
  ln_bias = Param{"frm.ln_bias", Tensor::zeros({1, d})};
  {
    Rng rng(mix_seed(seed, "frm.mlp1"));
    mlp1_w = Param{"frm.mlp1_w", glorot({d, d}, rng)};
    mlp1_b = Param{"frm.mlp1_b", Tensor::zeros({1, d})};
  }
  {
    Rng rng(mix_seed(seed, "frm.mlp2"));
    mlp2_w = Param{"frm.mlp2_w", glorot({d, dp}, rng)};
    mlp2_b = Param{"frm.mlp2_b", Tensor::zeros({1, dp})};
  }

  heads.clear();
  heads.resize(static_cast<std::size_t>(cfg.n_heads));
  for (int i = 0; i < cfg.n_heads; ++i) {
    const std::string base = "frm.head" + std::to_string(i) + ".";
    Rng rng(mix_seed(seed, base));
    FrmHeadParams& h = heads[static_cast<std::size_t>(i)];
    h.msc_w = Param{base + "msc_w", glorot({cfg.rates[static_cast<std::size_t>(i)] * dp, dp}, rng)};
    h.msc_b = Param{base + "msc_b", Tensor::zeros({1, dp})};
    h.wq = Param{base + "wq", glorot({dp, dh}, rng)};
    h.wk = Param{base + "wk", glorot({dp, dh}, rng)};
    // Glorot-scale Q/K leaves the softmax nearly uniform and its
    // gradients vanishing; start the score projections warm so heads
    // differentiate early in training.
    for (double& v : h.wq.value.data) v *= 1.0;
    for (double& v : h.wk.value.data) v *= 1.0;
    h.wv = Param{base + "wv", glorot({dp, dh}, rng)};
    h.conv = Param{base + "conv", glorot({cfg.conv_kernel, dh}, rng)};
  }

  {
    Rng rng(mix_seed(seed, "frm.out"));
    out_w = Param{"frm.out_w", glorot({cfg.n_heads * dh, dp}, rng)};
    out_b = Param{"frm.out_b", Tensor::zeros({1, dp})};
  }
}

std::vector<Param*> FrmParams::all() {
  std::vector<Param*> ps{&ln_gain, &ln_bias, &mlp1_w, &mlp1_b, &mlp2_w, &mlp2_b};
  for (FrmHeadParams& h : heads) {
    ps.push_back(&h.msc_w);
    ps.push_back(&h.msc_b);
    ps.push_back(&h.wq);
    ps.push_back(&h.wk);
    ps.push_back(&h.wv);
    ps.push_back(&h.conv);
  }
  ps.push_back(&out_w);
  ps.push_back(&out_b);
  return ps;
}

Tape::Id ln_mlp(Tape& tape, Tape::Id e, FrmParams& p, const FrmConfig& cfg) {
  const Tensor& ev = tape.value(e);
  if (ev.rank() != 2 || ev.cols() != cfg.d)
    throw ConfigError("ln_mlp: input must be [L_E, " + std::to_string(cfg.d) + "]");
  Tape::Id x = tape.layer_norm(e, tape.param(p.ln_gain), tape.param(p.ln_bias));
  x = tape.relu(tape.linear(x, tape.param(p.mlp1_w), tape.param(p.mlp1_b)));
  return tape.linear(x, tape.param(p.mlp2_w), tape.param(p.mlp2_b));
}

Tape::Id msc_downsample(Tape& tape, Tape::Id m, int r, FrmHeadParams& head,
                        const FrmConfig& cfg) {
  if (r < 1) throw ConfigError("msc_downsample: rate must be >= 1");
  const Tensor& mv = tape.value(m);
  if (mv.rank() != 2 || mv.cols() != cfg.d_prime)
    throw ConfigError("msc_downsample: input must be [L, " +
                      std::to_string(cfg.d_prime) + "]");
  if (head.msc_w.value.rows() != r * cfg.d_prime)
    throw ConfigError("msc_downsample: aggregation weight expects rate " +
                      std::to_string(head.msc_w.value.rows() / cfg.d_prime));
  Tape::Id windows = tape.window_stack(m, r);
  return tape.relu(tape.linear(windows, tape.param(head.msc_w), tape.param(head.msc_b)));
}

FrmOut frm_forward(Tape& tape, Tape::Id e_prime, Tape::Id m, FrmParams& p,
                   const FrmConfig& cfg) {
  cfg.validate();
  const Tensor& ev = tape.value(e_prime);
  const Tensor& mv = tape.value(m);
  if (ev.rank() != 2 || ev.cols() != cfg.d_prime)
    throw ConfigError("frm_forward: E' must be [L_E, d_prime]");
  if (mv.rank() != 2 || mv.cols() != cfg.d_prime)
    throw ConfigError("frm_forward: M must be [L, d_prime]");
  if (mv.rows() == 0)
    throw ValidationError("frm_forward: the multi-modal sequence is empty; "
                          "there are no keys to attend over");
  if (static_cast<int>(p.heads.size()) != cfg.n_heads)
    throw ConfigError("frm_forward: parameter head count does not match config");

  const int dh = cfg.resolved_d_h();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  FrmOut out;
  std::vector<Tape::Id> head_outs;
  head_outs.reserve(p.heads.size());
  for (int i = 0; i < cfg.n_heads; ++i) {
    FrmHeadParams& h = p.heads[static_cast<std::size_t>(i)];
    Tape::Id q = tape.matmul(e_prime, tape.param(h.wq));
    Tape::Id down = msc_downsample(tape, m, cfg.rates[static_cast<std::size_t>(i)], h, cfg);
    Tape::Id k = tape.matmul(down, tape.param(h.wk));
    Tape::Id v = tape.matmul(down, tape.param(h.wv));
    v = tape.add(v, tape.depthwise_conv1d(v, tape.param(h.conv)));
    Tape::Id attn = tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), inv_sqrt_dh));
    out.attention.push_back(attn);
    head_outs.push_back(tape.matmul(attn, v));
  }

  Tape::Id concat = head_outs.size() == 1
                        ? head_outs.front()
                        : tape.concat_cols(std::span<const Tape::Id>(head_outs));
  Tape::Id projected = tape.linear(concat, tape.param(p.out_w), tape.param(p.out_b));
  out.out = tape.add(e_prime, projected);
  return out;
}

EmbeddingCacheStore::EmbeddingCacheStore(augmenter::RenderConfig render,
                                         geometry::SectorConfig sector)
    : render_(render), sector_(sector) {
  render_.validate();
  sector_.validate();
}

namespace {

std::string cache_fingerprint(const geometry::Scene& scene,
                              const augmenter::TaskSpec& task,
                              const augmenter::RenderConfig& render,
                              const geometry::SectorConfig& sector) {
  std::string fp = geometry::scene_to_json(scene);
  fp.push_back('\x1f');
  fp += augmenter::task_to_json(task);
  fp.push_back('\x1f');
  fp += std::to_string(render.decimals) + (render.canonical ? "c" : "r") +
        (render.ablate_abs ? "A" : "-") + (render.ablate_rel ? "R" : "-") + "|" +
        std::to_string(sector.cardinal_half_angle_deg);
  return fp;
}

}  // namespace

const EmbeddingCache& EmbeddingCacheStore::get_or_create(
    const std::string& episode_id, const geometry::Scene& scene,
    const augmenter::TaskSpec& task, encoders::FrozenEmbedder& embedder) {
  const std::string fp = cache_fingerprint(scene, task, render_, sector_);
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(episode_id);
  if (it != entries_.end()) {
    if (fingerprints_.at(episode_id) != fp)
      throw UsageError("embedding cache: episode id '" + episode_id +
                       "' reused with a different scene or task");
    return it->second;
  }
  augmenter::AugmentResult aug = augmenter::augment(scene, task, render_, sector_);
  EmbeddingCache entry;
  entry.episode_id = episode_id;
  entry.augmented_text = aug.text;
  entry.e_mllm = embedder.embed(aug.text);
  entry.created_at_step = 1;
  fingerprints_[episode_id] = fp;
  auto [pos, inserted] = entries_.emplace(episode_id, std::move(entry));
  (void)inserted;
  return pos->second;
}

std::size_t EmbeddingCacheStore::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

}  // namespace oci::frm
