#include "oci/encoders.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "oci/errors.hpp"
#include "oci/rng.hpp"

namespace oci {

namespace {

std::vector<std::string> standard_tokens() {
  // Built from the closed instruction grammar: specials, direction and
  // clause words, paraphrase-bank words, object nouns, colors.
  const std::vector<std::string> words = {
      "<unk>", "<num>",
      // directions (hyphenated forms split into these pieces)
      "left", "right", "top", "bottom", "upper", "middle",
      // relative-clause frame
      "the", "is", "on", "of", "robotic", "arm",
      // instruction templates
      "a", "an", "to", "onto", "into", "in", "at", "and", "it", "up", "over", "across",
      "out", "open", "pick", "grab", "take", "lift", "set", "position", "put", "place",
      "move", "bring", "carry", "transfer", "deliver", "drop", "shift", "pull", "flip",
      "pop", "swing", "crack", "prop", "unlatch", "uncover", "unseal", "raise",
      // object nouns
      "cube", "box", "toy", "lid", "polar", "bear",
      // colors
      "red", "green", "blue", "yellow", "white", "black"};
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const std::string& w : words)
    if (seen.insert(w).second) out.push_back(w);
  return out;
}

}  // namespace

Vocab Vocab::standard() { return from_tokens(standard_tokens()); }

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  v.tokens_ = std::move(tokens);
  std::set<std::string> seen;
  for (int i = 0; i < v.size(); ++i) {
    const std::string& t = v.tokens_[static_cast<std::size_t>(i)];
    if (!seen.insert(t).second) throw ValidationError("vocab: duplicate token '" + t + "'");
    if (t == "<unk>") v.unk_id_ = i;
    if (t == "<num>") v.num_id_ = i;
  }
  if (v.unk_id_ < 0 || v.num_id_ < 0)
    throw ValidationError("vocab must contain the <unk> and <num> sentinels");
  return v;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw ValidationError("vocab: id " + std::to_string(id) + " out of range [0, " +
                          std::to_string(size()) + ")");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocab::id_of(const std::string& token) const {
  const auto it = std::find(tokens_.begin(), tokens_.end(), token);
  if (it == tokens_.end()) return std::nullopt;
  return static_cast<int>(it - tokens_.begin());
}

std::string Vocab::to_json() const {
  nlohmann::json j = tokens_;
  return j.dump();
}

Vocab Vocab::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("vocab JSON: ") + e.what(), e.byte);
  }
  if (!j.is_array()) throw ValidationError("vocab JSON must be an array of tokens");
  std::vector<std::string> tokens;
  for (const auto& t : j) {
    if (!t.is_string()) throw ValidationError("vocab JSON must contain only strings");
    tokens.push_back(t.get<std::string>());
  }
  return from_tokens(std::move(tokens));
}

TokenSeq tokenize_text(const std::string& text, const Vocab& v) {
  TokenSeq out;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isdigit(c)) {
      std::size_t j = i;
      while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j < n && text[j] == '.' && j + 1 < n &&
          std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
        ++j;
        while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      out.ids.push_back(v.num_id());
      out.values.push_back(std::strtod(text.substr(i, j - i).c_str(), nullptr));
      i = j;
    } else if (std::isalpha(c)) {
      std::size_t j = i;
      while (j < n && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      std::string word = text.substr(i, j - i);
      for (char& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      const auto id = v.id_of(word);
      out.ids.push_back(id ? *id : v.unk_id());
      out.values.push_back(0.0);
      i = j;
    } else {
      ++i;  // whitespace and punctuation (incl. hyphens) separate tokens
    }
  }
  return out;
}

const std::vector<std::string>& known_colors() {
  static const std::vector<std::string> colors = {"red",    "green", "blue",
                                                  "yellow", "white", "black"};
  return colors;
}

int color_index(const std::string& color) {
  const auto& cs = known_colors();
  const auto it = std::find(cs.begin(), cs.end(), color);
  return it == cs.end() ? -1 : static_cast<int>(it - cs.begin());
}

ObsTensor ObsTensor::zeros(int w, int h) {
  if (w <= 0 || h <= 0) throw ValidationError("ObsTensor: grid dimensions must be positive");
  ObsTensor o;
  o.width = w;
  o.height = h;
  o.data.assign(static_cast<std::size_t>(w) * h * kObsChannels, 0.0);
  return o;
}

double& ObsTensor::at(int x, int y, int c) {
  return data[(static_cast<std::size_t>(x) * height + y) * channels + c];
}

double ObsTensor::at(int x, int y, int c) const {
  return data[(static_cast<std::size_t>(x) * height + y) * channels + c];
}

void ObsTensor::validate() const {
  if (width <= 0 || height <= 0 || channels != kObsChannels ||
      data.size() != static_cast<std::size_t>(width) * height * channels)
    throw ValidationError("ObsTensor: inconsistent shape");
  double gripper_sum = 0.0;
  for (int x = 0; x < width; ++x)
    for (int y = 0; y < height; ++y)
      for (int c = 0; c < channels; ++c) {
        const double v = at(x, y, c);
        if (!(v >= 0.0 && v <= 1.0))
          throw ValidationError("ObsTensor: channel value out of [0, 1] at cell (" +
                                std::to_string(x) + ", " + std::to_string(y) + ")");
        if (c == kGripperChannel) gripper_sum += v;
      }
  if (gripper_sum != 1.0)
    throw ValidationError("ObsTensor: expected exactly one gripper cell");
}

TextEncParams TextEncParams::init(int vocab_size, int dim, uint64_t seed) {
  Rng rng(mix_seed(seed, "text_enc"));
  TextEncParams p;
  p.table = Param("text_enc.table", Tensor::zeros({vocab_size, dim}));
  init_glorot_uniform(p.table.value, vocab_size, dim, rng);
  p.value_vec = Param("text_enc.value_vec", Tensor::zeros({1, dim}));
  init_glorot_uniform(p.value_vec.value, 1, dim, rng);
  return p;
}

std::vector<Param*> TextEncParams::all() { return {&table, &value_vec}; }

ObsEncParams ObsEncParams::init(int dim, uint64_t seed) {
  Rng rng(mix_seed(seed, "obs_enc"));
  ObsEncParams p;
  p.weight = Param("obs_enc.weight", Tensor::zeros({kObsChannels, dim}));
  init_glorot_uniform(p.weight.value, kObsChannels, dim, rng);
  p.bias = Param("obs_enc.bias", Tensor::zeros({1, dim}));
  return p;
}

std::vector<Param*> ObsEncParams::all() { return {&weight, &bias}; }

Tape::Id encode_text(Tape& tape, const TokenSeq& t, TextEncParams& p) {
  const int dim = p.table.value.cols();
  const int vocab = p.table.value.rows();
  const int L = t.length();
  if (t.values.size() != t.ids.size())
    throw ValidationError("encode_text: ids/values length mismatch");
  for (int id : t.ids)
    if (id < 0 || id >= vocab)
      throw ValidationError("encode_text: token id " + std::to_string(id) +
                            " out of vocab range [0, " + std::to_string(vocab) + ")");
  if (L == 0) return tape.leaf(Tensor({0, dim}, {}));
  Tape::Id embeds = tape.rows_select(tape.param(p.table), t.ids);
  Tensor vals({L, 1}, t.values);
  Tape::Id value_part = tape.matmul(tape.leaf(std::move(vals)), tape.param(p.value_vec));
  Tape::Id pos = tape.leaf(sinusoidal_posenc(L, dim));
  return tape.add(tape.add(embeds, value_part), pos);
}

Tape::Id encode_obs(Tape& tape, const ObsTensor& o, ObsEncParams& p) {
  o.validate();
  const int dim = p.weight.value.cols();
  const int n = o.width * o.height;
  Tensor cells({n, kObsChannels}, o.data);  // already x-major, y, channel
  Tape::Id embedded = tape.linear(tape.leaf(std::move(cells)), tape.param(p.weight),
                                  tape.param(p.bias));
  return tape.add(embedded, tape.leaf(grid_posenc(o.width, o.height, dim)));
}

Tape::Id fuse(Tape& tape, Tape::Id img_tokens, Tape::Id text_tokens) {
  if (tape.value(img_tokens).cols() != tape.value(text_tokens).cols())
    throw ValidationError("fuse: image and text token widths differ (" +
                          std::to_string(tape.value(img_tokens).cols()) + " vs " +
                          std::to_string(tape.value(text_tokens).cols()) + ")");
  const std::array<Tape::Id, 2> parts = {img_tokens, text_tokens};
  return tape.concat_rows(parts);
}

Tensor plain_layer_norm(const Tensor& x, double eps) {
  if (x.rank() != 2) throw ValidationError("plain_layer_norm: expected a 2-d tensor");
  const int m = x.rows(), n = x.cols();
  Tensor out = x;
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += x.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) out.at(i, j) = (x.at(i, j) - mean) * inv;
  }
  return out;
}

FrozenEmbedder::FrozenEmbedder(uint64_t seed, int dim, Vocab vocab)
    : vocab_(std::move(vocab)), dim_(dim) {
  if (dim < 2) throw ConfigError("FrozenEmbedder: dim must be >= 2");
  Rng rng(mix_seed(seed, "frozen_embedder"));
  table_ = Tensor::zeros({vocab_.size(), dim});
  init_glorot_uniform(table_, vocab_.size(), dim, rng);
  value_vec_ = Tensor::zeros({1, dim});
  init_glorot_uniform(value_vec_, 1, dim, rng);
}

Tensor FrozenEmbedder::embed(const std::string& text) {
  ++invocations_;
  const TokenSeq t = tokenize_text(text, vocab_);
  const int L = t.length();
  Tensor out({L, dim_}, std::vector<double>(static_cast<std::size_t>(L) * dim_, 0.0));
  const Tensor pos = L > 0 ? sinusoidal_posenc(L, dim_) : Tensor({0, dim_}, {});
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < dim_; ++j)
      out.at(i, j) = table_.at(t.ids[static_cast<std::size_t>(i)], j) +
                     t.values[static_cast<std::size_t>(i)] * value_vec_.at(0, j) + pos.at(i, j);
  return plain_layer_norm(out);
}

}  // namespace oci
