#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xlt/tensor.hpp"

namespace xlt {

struct TransformerConfig {
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int model_dim = 64;
  int ffn_dim = 128;
  int vocab_size = 0;
  double label_smoothing = 0.1;
  int max_sequence_length = 64;
  Precision precision = Precision::f32;

  /// 6+6 layers, 8 heads, 512/2048, smoothing 0.1.
  static TransformerConfig full_scale(int vocab_size);
  /// 2+2 layers, 4 heads, 64/128.
  static TransformerConfig desk_scale(int vocab_size);

  void validate() const;
  /// True when every parameter tensor would have the same shape.
  bool same_shapes(const TransformerConfig& other) const;

  std::map<std::string, std::string> to_map() const;
  static TransformerConfig from_map(const std::map<std::string, std::string>& kv);

  bool operator==(const TransformerConfig&) const = default;
};

enum class Section : std::uint8_t { encoder_self = 0, decoder_self = 1, decoder_cross = 2 };

std::string to_string(Section s);
Section parse_section(std::string_view s);

struct HeadIndex {
  Section section = Section::encoder_self;
  int layer = 0;
  int head = 0;

  auto operator<=>(const HeadIndex&) const = default;
};

/// Attention-module layout of a model. Canonical head order is encoder-self
/// layers, then decoder-self, then decoder-cross; heads ascending per layer.
struct HeadTopology {
  int encoder_layers = 0;
  int decoder_layers = 0;
  int heads = 0;

  static HeadTopology of(const TransformerConfig& config) {
    return {config.encoder_layers, config.decoder_layers, config.heads};
  }

  std::size_t module_count() const {
    return static_cast<std::size_t>(encoder_layers + 2 * decoder_layers);
  }
  std::size_t head_count() const { return module_count() * static_cast<std::size_t>(heads); }
  std::size_t module_index(Section section, int layer) const;
  std::size_t flat_index(const HeadIndex& h) const;
  HeadIndex head_at(std::size_t flat) const;
  std::vector<HeadIndex> canonical_heads() const;

  bool operator==(const HeadTopology&) const = default;
};

/// One tokenized training pair. Both sides end with <eos>; the source may
/// start with a language tag.
struct EncodedPair {
  std::vector<std::int32_t> source;
  std::vector<std::int32_t> target;
  std::int32_t pair = 0;
};

/// Padded token matrices, row-major (batch, length).
struct Batch {
  std::int64_t size = 0;
  std::int64_t source_len = 0;
  std::int64_t target_len = 0;
  std::vector<std::int32_t> source;
  std::vector<std::int32_t> target_in;   // <bos> y1 .. yn
  std::vector<std::int32_t> target_out;  // y1 .. yn <eos>
  std::vector<std::int32_t> pairs;

  std::int64_t target_tokens() const;
};

Batch collate(std::span<const EncodedPair* const> examples);
Batch collate(const std::vector<EncodedPair>& examples);

/// Parameters in insertion order, addressable by name.
template <typename T>
class NamedTensors {
 public:
  void add(std::string name, Tensor<T> tensor);
  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }
  const Tensor<T>& at(std::string_view name) const;
  Tensor<T>& at(std::string_view name);
  std::size_t size() const { return items_.size(); }
  std::int64_t total_elements() const;

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
  std::map<std::string, std::size_t> index_;
};

/// Component owning a parameter name: encoder, decoder, src_embed,
/// tgt_embed or out_proj.
std::string component_of(std::string_view parameter_name);
/// src_embed belongs to the encoder side; tgt_embed and out_proj to the decoder.
bool is_encoder_side(std::string_view parameter_name);

template <typename T>
struct AttentionWeights {
  Tensor<T> query;   // (D, D)
  Tensor<T> key;     // (D, D)
  Tensor<T> value;   // (D, D)
  Tensor<T> output;  // (D, D), no bias so a zero gate silences the head entirely
};

/// Additive mask (batch, heads, queries, keys) hiding padded keys.
template <typename T>
Tensor<T> key_padding_mask(std::span<const std::int32_t> keys, std::int64_t batch,
                           std::int64_t key_len, int heads, std::int64_t query_len);

/// Additive mask (batch, heads, len, len) hiding future positions.
template <typename T>
Tensor<T> causal_mask(std::int64_t batch, int heads, std::int64_t len);

/// Multi-head attention where head h's contribution is scaled by gates[h]:
/// out = sum_h gates[h] * head_h(x, context) W_o[h]. `gates` may be null.
/// x is (batch*queries, D), context is (batch*keys, D).
template <typename T>
Tensor<T> gated_mhatt(const Tensor<T>& x, const Tensor<T>& context, const AttentionWeights<T>& w,
                      const Tensor<T>* gates, const Tensor<T>& mask, std::int64_t batch, int heads);

/// Mean over non-pad rows of cross-entropy against the smoothed target
/// distribution (1 - eps + eps/V on the gold token, eps/V elsewhere).
template <typename T>
Tensor<T> label_smoothed_loss(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                              double epsilon, std::int32_t pad_id);

/// One gate vector of length N_h per attention module, all 1.0 by default.
template <typename T>
class HeadGates {
 public:
  HeadGates() = default;
  explicit HeadGates(HeadTopology topology);

  const HeadTopology& topology() const { return topology_; }
  const Tensor<T>& module(Section section, int layer) const;
  T value(const HeadIndex& h) const;
  void set(const HeadIndex& h, T value);
  /// d(loss)/d(gate) after a backward pass; 0 if none ran.
  T gradient(const HeadIndex& h) const;
  void zero_grad();
  void reset();
  bool all_ones() const;

 private:
  HeadTopology topology_;
  std::vector<Tensor<T>> modules_;
};

/// Pre-layer-norm encoder-decoder transformer with sinusoidal positions,
/// separate source/target embeddings and an untied output projection.
template <typename T>
class Transformer {
 public:
  Transformer(TransformerConfig config, std::uint64_t seed);

  /// Deterministic initialization; each tensor draws from a stream keyed by
  /// (seed, name), so any single tensor can be regenerated in isolation.
  static NamedTensors<T> initial_parameters(const TransformerConfig& config, std::uint64_t seed);

  const TransformerConfig& config() const { return config_; }
  NamedTensors<T>& parameters() { return params_; }
  const NamedTensors<T>& parameters() const { return params_; }
  HeadGates<T>& gates() { return gates_; }
  const HeadGates<T>& gates() const { return gates_; }

  void set_parameters_require_grad(bool value);
  void zero_grad();

  /// Encoder output (batch*source_len, D).
  Tensor<T> encode(std::span<const std::int32_t> source, std::int64_t batch,
                   std::int64_t source_len, bool use_gates = true) const;

  /// Output logits (batch*target_len, V) for teacher-forced decoder input.
  Tensor<T> decode(const Tensor<T>& memory, std::span<const std::int32_t> source,
                   std::int64_t batch, std::int64_t source_len,
                   std::span<const std::int32_t> target_in, std::int64_t target_len,
                   bool use_gates = true) const;

  Tensor<T> logits(const Batch& batch, bool use_gates = true) const;
  Tensor<T> forward_loss(const Batch& batch, bool use_gates = true) const;

 private:
  Tensor<T> embed(const Tensor<T>& table, std::span<const std::int32_t> ids, std::int64_t batch,
                  std::int64_t len) const;
  AttentionWeights<T> attention(const std::string& prefix) const;
  Tensor<T> feed_forward(const std::string& prefix, const Tensor<T>& x) const;
  Tensor<T> norm(const std::string& prefix, const Tensor<T>& x) const;
  void check_ids(std::span<const std::int32_t> ids, const char* what) const;

  TransformerConfig config_;
  NamedTensors<T> params_;
  HeadGates<T> gates_;
};

extern template class NamedTensors<float>;
extern template class NamedTensors<double>;
extern template class HeadGates<float>;
extern template class HeadGates<double>;
extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace xlt
