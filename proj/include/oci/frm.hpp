#pragma once

// Feature reuse: lift a frozen instruction embedding with a LayerNorm-MLP,
// attend over the per-step multi-modal token sequence with multi-scale
// cross-attention, and cache the episode-start embedding so the expensive
// embedder runs exactly once per episode.

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "oci/augmenter.hpp"
#include "oci/autodiff.hpp"
#include "oci/encoders.hpp"
#include "oci/geometry.hpp"
#include "oci/tensor.hpp"

namespace oci::frm {

using autodiff::Param;
using autodiff::Tape;

/// Static hyper-parameters of the feature-reuse block.
struct FrmConfig {
  int d = 16;        ///< width of the frozen instruction embedding rows
  int d_prime = 16;  ///< width of the multi-modal tokens (and of the output)
  int n_heads = 4;
  std::vector<int> rates{1, 2, 2, 4};  ///< per-head down-sampling rates
  int d_h = 0;                         ///< per-head width; 0 = d_prime / n_heads
  int conv_kernel = 3;                 ///< depthwise kernel size (odd)

  bool operator==(const FrmConfig&) const = default;
  /// Per-head width with the default rule applied.
  int resolved_d_h() const;
  /// Throws ConfigError when any invariant is violated.
  void validate() const;
};

/// Trainable tensors for one attention head.
struct FrmHeadParams {
  Param msc_w;  ///< [rate * d_prime, d_prime] window aggregation
  Param msc_b;  ///< [1, d_prime]
  Param wq;     ///< [d_prime, d_h]
  Param wk;     ///< [d_prime, d_h]
  Param wv;     ///< [d_prime, d_h]
  Param conv;   ///< [conv_kernel, d_h] depthwise kernel for the value residual
};

/// All trainable tensors of the block.
struct FrmParams {
  Param ln_gain;  ///< [1, d]
  Param ln_bias;  ///< [1, d]
  Param mlp1_w;   ///< [d, d]
  Param mlp1_b;   ///< [1, d]
  Param mlp2_w;   ///< [d, d_prime]
  Param mlp2_b;   ///< [1, d_prime]
  std::vector<FrmHeadParams> heads;
  Param out_w;  ///< [n_heads * d_h, d_prime]
  Param out_b;  ///< [1, d_prime]

  /// Deterministically (re)initialize every tensor for `cfg`.
  void init(const FrmConfig& cfg, std::uint64_t seed);
  /// All parameters in a fixed order (for optimizers / checkpoints).
  std::vector<Param*> all();
};

/// LayerNorm followed by a two-layer MLP, per token: [L_E, d] -> [L_E, d_prime].
Tape::Id ln_mlp(Tape& tape, Tape::Id e, FrmParams& p, const FrmConfig& cfg);

/// Down-sample [L, d_prime] to [ceil(L/r), d_prime]: non-overlapping windows of
/// r tokens (zero-padded at the tail) are concatenated and mapped through a
/// linear-ReLU layer.
Tape::Id msc_downsample(Tape& tape, Tape::Id m, int r, FrmHeadParams& head,
                        const FrmConfig& cfg);

/// Forward result: the output tokens plus each head's attention matrix
/// (tape ids, so tests can inspect the normalized weights).
struct FrmOut {
  Tape::Id out = 0;                 ///< [L_E, d_prime]
  std::vector<Tape::Id> attention;  ///< per head, [L_E, ceil(L/r_i)]
};

/// Multi-scale cross-attention of the lifted instruction embedding E'
/// ([L_E, d_prime]) over the multi-modal sequence M ([L, d_prime]), with a
/// depthwise-convolution residual on the values and a residual add of E'
/// onto the projected head outputs.
FrmOut frm_forward(Tape& tape, Tape::Id e_prime, Tape::Id m, FrmParams& p,
                   const FrmConfig& cfg);

/// One cached episode-start embedding. Immutable once created.
struct EmbeddingCache {
  std::string episode_id;
  std::string augmented_text;
  Tensor e_mllm{{1, 1}, {0.0}};
  int created_at_step = 1;
};

/// Append-only store of episode embeddings. The first query for an episode
/// runs augmentation + the frozen embedder; later queries return the stored
/// bytes without touching the embedder. Reusing an episode id with a
/// different scene or task is an error.
class EmbeddingCacheStore {
 public:
  EmbeddingCacheStore() = default;
  EmbeddingCacheStore(augmenter::RenderConfig render, geometry::SectorConfig sector);

  const EmbeddingCache& get_or_create(const std::string& episode_id,
                                      const geometry::Scene& scene,
                                      const augmenter::TaskSpec& task,
                                      encoders::FrozenEmbedder& embedder);

  std::size_t size() const;

 private:
  augmenter::RenderConfig render_{};
  geometry::SectorConfig sector_{};
  mutable std::mutex mu_;
  std::map<std::string, EmbeddingCache> entries_;
  std::map<std::string, std::string> fingerprints_;
};

/// Free-function spelling of the store operation.
inline const EmbeddingCache& cache_get_or_create(EmbeddingCacheStore& store,
                                                 const std::string& episode_id,
                                                 const geometry::Scene& scene,
                                                 const augmenter::TaskSpec& task,
                                                 encoders::FrozenEmbedder& embedder) {
  return store.get_or_create(episode_id, scene, task, embedder);
}

}  // namespace oci::frm
