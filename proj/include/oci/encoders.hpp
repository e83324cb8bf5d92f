#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oci/autodiff.hpp"
#include "oci/tensor.hpp"

namespace oci {

/// Closed-grammar vocabulary: dense ids, with an UNK absorber and a
/// NUMERIC sentinel for decimal literals.
class Vocab {
 public:
  /// The full instruction grammar: direction/clause/template words,
  /// object nouns, colors.
  static Vocab standard();
  static Vocab from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int unk_id() const { return unk_id_; }
  int num_id() const { return num_id_; }
  const std::string& token(int id) const;
  std::optional<int> id_of(const std::string& token) const;

  /// JSON array of tokens, index = id.
  std::string to_json() const;
  static Vocab from_json(const std::string& text);

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  int unk_id_ = -1;
  int num_id_ = -1;
};

/// Token ids with aligned numeric payloads (0 for non-NUMERIC tokens).
struct TokenSeq {
  std::vector<int> ids;
  std::vector<double> values;

  int length() const { return static_cast<int>(ids.size()); }
  bool operator==(const TokenSeq&) const = default;
};

/// Lowercases and splits on whitespace and punctuation (hyphens split
/// too, so "bottom-left" shares tokens with "left"); decimal literals
/// become the NUMERIC token carrying their value; unknown words map to
/// UNK. Total and deterministic.
TokenSeq tokenize_text(const std::string& text, const Vocab& v);

/// Grid observation, channel-last [width][height][channels].
inline constexpr int kKindChannelBase = 0;   // cube, box, toy, lid
inline constexpr int kColorChannelBase = 4;  // red, green, blue, yellow, white, black
inline constexpr int kGripperChannel = 10;
inline constexpr int kHoldingChannel = 11;
inline constexpr int kLidOpenChannel = 12;
inline constexpr int kObsChannels = 13;

const std::vector<std::string>& known_colors();
int color_index(const std::string& color);  // -1 when unknown/empty

struct ObsTensor {
  int width = 0, height = 0, channels = kObsChannels;
  std::vector<double> data;  // x-major, then y, then channel

  static ObsTensor zeros(int w, int h);
  double& at(int x, int y, int c);
  double at(int x, int y, int c) const;
  /// Channels in [0,1] and exactly one gripper cell; throws ValidationError.
  void validate() const;
  bool operator==(const ObsTensor&) const = default;
};

struct TextEncParams {
  Param table;      // [vocab, D]
  Param value_vec;  // [1, D]
  static TextEncParams init(int vocab_size, int dim, uint64_t seed);
  std::vector<Param*> all();
};

struct ObsEncParams {
  Param weight;  // [channels, D]
  Param bias;    // [1, D]
  static ObsEncParams init(int dim, uint64_t seed);
  std::vector<Param*> all();
};

/// Per token: id embedding + value * value-vector + sinusoidal position
/// encoding. Returns [L, D]; empty input yields a zero-row tensor.
Tape::Id encode_text(Tape& tape, const TokenSeq& t, TextEncParams& p);

/// Per cell: linear embedding of the channel vector + grid position
/// encoding; flattened x-major to [W*H, D].
Tape::Id encode_obs(Tape& tape, const ObsTensor& o, ObsEncParams& p);

/// Multi-modal token sequence M: image tokens first, then text tokens.
Tape::Id fuse(Tape& tape, Tape::Id img_tokens, Tape::Id text_tokens);

/// Frozen stand-in for the pretrained multi-modal model's final-layer
/// instruction features: a seeded, never-trained embedding (id + value +
/// position, then layer norm). Holds plain tensors, not Params, so it
/// can never be registered with an optimizer. Counts invocations so
/// the once-per-episode cache contract is testable.
class FrozenEmbedder {
 public:
  FrozenEmbedder(uint64_t seed, int dim, Vocab vocab = Vocab::standard());

  Tensor embed(const std::string& text);

  int dim() const { return dim_; }
  const Vocab& vocab() const { return vocab_; }
  int64_t invocations() const { return invocations_; }
  void reset_invocations() { invocations_ = 0; }

 private:
  Vocab vocab_;
  int dim_;
  Tensor table_;      // [vocab, D]
  Tensor value_vec_;  // [1, D]
  int64_t invocations_ = 0;
};

/// Row-wise layer norm on plain tensors (gain 1, bias 0), used by the
/// frozen embedder; matches the tape op's arithmetic.
Tensor plain_layer_norm(const Tensor& x, double eps = 1e-5);

}  // namespace oci

// The encoders vocabulary lives in the root namespace; this alias lets
// dependent code qualify the names by owning module.
namespace oci {
namespace encoders = ::oci;
}  // namespace oci
