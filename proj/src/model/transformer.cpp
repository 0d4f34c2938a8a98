#include <cmath>
#include <stdexcept>

#include "xlt/model.hpp"
#include "xlt/ops.hpp"
#include "xlt/random.hpp"
#include "xlt/subword.hpp"

namespace xlt {

namespace {

constexpr double kMaskValue = -1e9;

}  // namespace

// ---------------------------------------------------------------------------
// NamedTensors

template <typename T>
void NamedTensors<T>::add(std::string name, Tensor<T> tensor) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_.emplace(name, items_.size());
  items_.emplace_back(std::move(name), std::move(tensor));
}

template <typename T>
const Tensor<T>& NamedTensors<T>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  return items_[it->second].second;
}

template <typename T>
Tensor<T>& NamedTensors<T>::at(std::string_view name) {
  return const_cast<Tensor<T>&>(std::as_const(*this).at(name));
}

template <typename T>
std::int64_t NamedTensors<T>::total_elements() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

// ---------------------------------------------------------------------------
// Attention building blocks

template <typename T>
Tensor<T> key_padding_mask(std::span<const std::int32_t> keys, std::int64_t batch,
                           std::int64_t key_len, int heads, std::int64_t query_len) {
  if (static_cast<std::int64_t>(keys.size()) != batch * key_len) {
    throw ShapeError("key_padding_mask: " + std::to_string(keys.size()) + " ids for batch " +
                     std::to_string(batch) + " x " + std::to_string(key_len));
  }
  std::vector<T> m(static_cast<std::size_t>(batch * heads * query_len * key_len), T(0));
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t h = 0; h < heads; ++h)
      for (std::int64_t q = 0; q < query_len; ++q) {
        T* row = m.data() + ((b * heads + h) * query_len + q) * key_len;
        for (std::int64_t k = 0; k < key_len; ++k) {
          if (keys[static_cast<std::size_t>(b * key_len + k)] == SubwordModel::kPad)
            row[k] = static_cast<T>(kMaskValue);
        }
      }
  return Tensor<T>::from_vector({batch, heads, query_len, key_len}, std::move(m));
}

template <typename T>
Tensor<T> causal_mask(std::int64_t batch, int heads, std::int64_t len) {
  std::vector<T> m(static_cast<std::size_t>(batch * heads * len * len), T(0));
  for (std::int64_t bh = 0; bh < batch * heads; ++bh)
    for (std::int64_t q = 0; q < len; ++q)
      for (std::int64_t k = q + 1; k < len; ++k)
        m[static_cast<std::size_t>((bh * len + q) * len + k)] = static_cast<T>(kMaskValue);
  return Tensor<T>::from_vector({batch, heads, len, len}, std::move(m));
}

template <typename T>
Tensor<T> gated_mhatt(const Tensor<T>& x, const Tensor<T>& context, const AttentionWeights<T>& w,
                      const Tensor<T>* gates, const Tensor<T>& mask, std::int64_t batch,
                      int heads) {
  if (x.rank() != 2 || context.rank() != 2 || x.dim(1) != context.dim(1)) {
    throw ShapeError("gated_mhatt: expected (rows, D) inputs, got " + shape_str(x.shape()) +
                     " and " + shape_str(context.shape()));
  }
  const std::int64_t d = x.dim(1);
  if (heads <= 0 || d % heads != 0) {
    throw ShapeError("gated_mhatt: model dim " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (batch <= 0 || x.dim(0) % batch != 0 || context.dim(0) % batch != 0) {
    throw ShapeError("gated_mhatt: rows not divisible by batch " + std::to_string(batch));
  }
  if (gates && gates->shape() != Shape{heads}) {
    throw std::invalid_argument("gated_mhatt: expected " + std::to_string(heads) +
                                " gates, got shape " + shape_str(gates->shape()));
  }
  const std::int64_t dh = d / heads;
  const std::int64_t tq = x.dim(0) / batch;
  const std::int64_t tk = context.dim(0) / batch;
  if (mask.shape() != Shape{batch, heads, tq, tk}) {
    throw ShapeError("gated_mhatt: mask shape " + shape_str(mask.shape()) + " != " +
                     shape_str({batch, heads, tq, tk}));
  }
  using namespace ops;
  auto q = permute(reshape(matmul(x, w.query), {batch, tq, heads, dh}), {0, 2, 1, 3});
  auto k = permute(reshape(matmul(context, w.key), {batch, tk, heads, dh}), {0, 2, 3, 1});
  auto v = permute(reshape(matmul(context, w.value), {batch, tk, heads, dh}), {0, 2, 1, 3});
  auto scores = add(scale(matmul(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)))), mask);
  auto ctx = matmul(softmax(scores), v);  // (B, H, Tq, dh)
  if (gates) {
    ctx = mul(ctx, tile(reshape(*gates, {1, heads, 1, 1}), {batch, 1, tq, dh}));
  }
  auto merged = reshape(permute(ctx, {0, 2, 1, 3}), {batch * tq, d});
  return matmul(merged, w.output);
}

template <typename T>
Tensor<T> label_smoothed_loss(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                              double epsilon, std::int32_t pad_id) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(targets.size())) {
    throw ShapeError("label_smoothed_loss: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::int64_t vocab = logits.dim(1);
  std::vector<T> weights(static_cast<std::size_t>(logits.numel()), T(0));
  std::int64_t count = 0;
  const T off = static_cast<T>(epsilon / static_cast<double>(vocab));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto t = targets[i];
    if (t == pad_id) continue;
    if (t < 0 || t >= vocab) {
      throw std::out_of_range("label_smoothed_loss: token id " + std::to_string(t) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    T* row = weights.data() + static_cast<std::int64_t>(i) * vocab;
    std::fill(row, row + vocab, off);
    row[t] = static_cast<T>(1.0 - epsilon + epsilon / static_cast<double>(vocab));
    ++count;
  }
  if (count == 0) throw std::invalid_argument("label_smoothed_loss: every target is padding");
  auto q = Tensor<T>::from_vector(logits.shape(), std::move(weights));
  auto total = ops::sum(ops::mul(ops::log_softmax(logits), q));
  return ops::scale(total, static_cast<T>(-1.0 / static_cast<double>(count)));
}

// ---------------------------------------------------------------------------
// HeadGates

template <typename T>
HeadGates<T>::HeadGates(HeadTopology topology) : topology_(topology) {
  for (std::size_t m = 0; m < topology_.module_count(); ++m) {
    modules_.push_back(Tensor<T>::full({topology_.heads}, T(1), true));
  }
}

template <typename T>
const Tensor<T>& HeadGates<T>::module(Section section, int layer) const {
  return modules_.at(topology_.module_index(section, layer));
}

template <typename T>
T HeadGates<T>::value(const HeadIndex& h) const {
  return module(h.section, h.layer).data()[static_cast<std::size_t>(h.head)];
}

template <typename T>
void HeadGates<T>::set(const HeadIndex& h, T v) {
  topology_.flat_index(h);
  modules_[topology_.module_index(h.section, h.layer)].mutable_data()[static_cast<std::size_t>(h.head)] = v;
}

template <typename T>
T HeadGates<T>::gradient(const HeadIndex& h) const {
  const auto& m = module(h.section, h.layer);
  if (!m.has_grad()) return T(0);
  return m.grad()[static_cast<std::size_t>(h.head)];
}

template <typename T>
void HeadGates<T>::zero_grad() {
  for (auto& m : modules_) m.zero_grad();
}

template <typename T>
void HeadGates<T>::reset() {
  for (auto& m : modules_) {
    for (auto& v : m.mutable_data()) v = T(1);
  }
}

template <typename T>
bool HeadGates<T>::all_ones() const {
  for (const auto& m : modules_)
    for (T v : m.data())
      if (v != T(1)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Transformer

namespace {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_vector(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> xavier(std::int64_t fan_in, std::int64_t fan_out, std::uint64_t seed) {
  return uniform_tensor<T>({fan_in, fan_out},
                           std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), seed);
}

}  // namespace

template <typename T>
NamedTensors<T> Transformer<T>::initial_parameters(const TransformerConfig& c, std::uint64_t seed) {
  c.validate();
  NamedTensors<T> p;
  const std::int64_t d = c.model_dim;
  const std::int64_t f = c.ffn_dim;
  const std::int64_t v = c.vocab_size;
  auto s = [seed](const std::string& name) { return derive_seed(seed, name); };
  auto add_norm = [&](const std::string& prefix) {
    p.add(prefix + ".gain", Tensor<T>::full({d}, T(1), true));
    p.add(prefix + ".bias", Tensor<T>::zeros({d}, true));
  };
  auto add_attention = [&](const std::string& prefix) {
    for (const char* w : {"query", "key", "value", "output"}) {
      const std::string name = prefix + "." + w;
      p.add(name, xavier<T>(d, d, s(name)));
    }
  };
  auto add_ffn = [&](const std::string& prefix) {
    p.add(prefix + ".w1", xavier<T>(d, f, s(prefix + ".w1")));
    p.add(prefix + ".b1", Tensor<T>::zeros({f}, true));
    p.add(prefix + ".w2", xavier<T>(f, d, s(prefix + ".w2")));
    p.add(prefix + ".b2", Tensor<T>::zeros({d}, true));
  };
  // Unit-variance rows after the sqrt(D) input scaling.
  const double embed_bound = std::sqrt(3.0 / static_cast<double>(d));

  p.add("src_embed.weight", uniform_tensor<T>({v, d}, embed_bound, s("src_embed.weight")));
  for (int l = 0; l < c.encoder_layers; ++l) {
    const std::string pre = "encoder.layers." + std::to_string(l);
    add_norm(pre + ".self_attn_norm");
    add_attention(pre + ".self_attn");
    add_norm(pre + ".ffn_norm");
    add_ffn(pre + ".ffn");
  }
  add_norm("encoder.final_norm");

  p.add("tgt_embed.weight", uniform_tensor<T>({v, d}, embed_bound, s("tgt_embed.weight")));
  for (int l = 0; l < c.decoder_layers; ++l) {
    const std::string pre = "decoder.layers." + std::to_string(l);
    add_norm(pre + ".self_attn_norm");
    add_attention(pre + ".self_attn");
    add_norm(pre + ".cross_attn_norm");
    add_attention(pre + ".cross_attn");
    add_norm(pre + ".ffn_norm");
    add_ffn(pre + ".ffn");
  }
  add_norm("decoder.final_norm");
  p.add("out_proj.weight", xavier<T>(d, v, s("out_proj.weight")));
  p.add("out_proj.bias", Tensor<T>::zeros({v}, true));
  return p;
}

template <typename T>
Transformer<T>::Transformer(TransformerConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      params_(initial_parameters(config_, seed)),
      gates_(HeadTopology::of(config_)) {}

template <typename T>
void Transformer<T>::set_parameters_require_grad(bool value) {
  for (auto& [name, t] : params_) t.set_requires_grad(value);
}

template <typename T>
void Transformer<T>::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
  gates_.zero_grad();
}

template <typename T>
void Transformer<T>::check_ids(std::span<const std::int32_t> ids, const char* what) const {
  for (auto id : ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw std::out_of_range(std::string(what) + ": token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(config_.vocab_size));
    }
  }
}

template <typename T>
Tensor<T> Transformer<T>::embed(const Tensor<T>& table, std::span<const std::int32_t> ids,
                                std::int64_t batch, std::int64_t len) const {
  if (len > config_.max_sequence_length) {
    throw ShapeError("sequence length " + std::to_string(len) + " exceeds max_sequence_length " +
                     std::to_string(config_.max_sequence_length));
  }
  const std::int64_t d = config_.model_dim;
  std::vector<T> pe(static_cast<std::size_t>(batch * len * d));
  for (std::int64_t pos = 0; pos < len; ++pos) {
    for (std::int64_t i = 0; i < d; i += 2) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe[static_cast<std::size_t>(pos * d + i)] = static_cast<T>(std::sin(angle));
      if (i + 1 < d) pe[static_cast<std::size_t>(pos * d + i + 1)] = static_cast<T>(std::cos(angle));
    }
  }
  for (std::int64_t b = 1; b < batch; ++b) {
    std::copy_n(pe.begin(), len * d, pe.begin() + b * len * d);
  }
  auto positions = Tensor<T>::from_vector({batch * len, d}, std::move(pe));
  auto scaled = ops::scale(ops::embedding(table, ids), static_cast<T>(std::sqrt(static_cast<double>(d))));
  return ops::add(scaled, positions);
}

template <typename T>
AttentionWeights<T> Transformer<T>::attention(const std::string& prefix) const {
  return {params_.at(prefix + ".query"), params_.at(prefix + ".key"), params_.at(prefix + ".value"),
          params_.at(prefix + ".output")};
}

template <typename T>
Tensor<T> Transformer<T>::norm(const std::string& prefix, const Tensor<T>& x) const {
  return ops::layer_norm(x, params_.at(prefix + ".gain"), params_.at(prefix + ".bias"));
}

template <typename T>
Tensor<T> Transformer<T>::feed_forward(const std::string& prefix, const Tensor<T>& x) const {
  using namespace ops;
  const std::int64_t rows = x.dim(0);
  auto bias = [&](const std::string& name) {
    const auto& b = params_.at(name);
    return tile(reshape(b, {1, b.numel()}), {rows, 1});
  };
  auto hidden = relu(add(matmul(x, params_.at(prefix + ".w1")), bias(prefix + ".b1")));
  return add(matmul(hidden, params_.at(prefix + ".w2")), bias(prefix + ".b2"));
}

template <typename T>
Tensor<T> Transformer<T>::encode(std::span<const std::int32_t> source, std::int64_t batch,
                                 std::int64_t source_len, bool use_gates) const {
  check_ids(source, "encode");
  const int h = config_.heads;
  auto x = embed(params_.at("src_embed.weight"), source, batch, source_len);
  const auto mask = key_padding_mask<T>(source, batch, source_len, h, source_len);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string pre = "encoder.layers." + std::to_string(l);
    auto normed = norm(pre + ".self_attn_norm", x);
    const Tensor<T>* g = use_gates ? &gates_.module(Section::encoder_self, l) : nullptr;
    x = ops::add(x, gated_mhatt(normed, normed, attention(pre + ".self_attn"), g, mask, batch, h));
    x = ops::add(x, feed_forward(pre + ".ffn", norm(pre + ".ffn_norm", x)));
  }
  return norm("encoder.final_norm", x);
}

template <typename T>
Tensor<T> Transformer<T>::decode(const Tensor<T>& memory, std::span<const std::int32_t> source,
                                 std::int64_t batch, std::int64_t source_len,
                                 std::span<const std::int32_t> target_in, std::int64_t target_len,
                                 bool use_gates) const {
  check_ids(target_in, "decode");
  const int h = config_.heads;
  auto y = embed(params_.at("tgt_embed.weight"), target_in, batch, target_len);
  const auto self_mask = causal_mask<T>(batch, h, target_len);
  const auto cross_mask = key_padding_mask<T>(source, batch, source_len, h, target_len);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string pre = "decoder.layers." + std::to_string(l);
    auto normed = norm(pre + ".self_attn_norm", y);
    const Tensor<T>* gs = use_gates ? &gates_.module(Section::decoder_self, l) : nullptr;
    y = ops::add(y, gated_mhatt(normed, normed, attention(pre + ".self_attn"), gs, self_mask, batch, h));
    normed = norm(pre + ".cross_attn_norm", y);
    const Tensor<T>* gc = use_gates ? &gates_.module(Section::decoder_cross, l) : nullptr;
    y = ops::add(y, gated_mhatt(normed, memory, attention(pre + ".cross_attn"), gc, cross_mask, batch, h));
    y = ops::add(y, feed_forward(pre + ".ffn", norm(pre + ".ffn_norm", y)));
  }
  y = norm("decoder.final_norm", y);
  const auto& bias = params_.at("out_proj.bias");
  return ops::add(ops::matmul(y, params_.at("out_proj.weight")),
                  ops::tile(ops::reshape(bias, {1, bias.numel()}), {batch * target_len, 1}));
}

template <typename T>
Tensor<T> Transformer<T>::logits(const Batch& batch, bool use_gates) const {
  auto memory = encode(batch.source, batch.size, batch.source_len, use_gates);
  return decode(memory, batch.source, batch.size, batch.source_len, batch.target_in,
                batch.target_len, use_gates);
}

template <typename T>
Tensor<T> Transformer<T>::forward_loss(const Batch& batch, bool use_gates) const {
  check_ids(batch.target_out, "forward_loss");
  return label_smoothed_loss(logits(batch, use_gates), batch.target_out, config_.label_smoothing,
                             SubwordModel::kPad);
}

template class NamedTensors<float>;
template class NamedTensors<double>;
template class HeadGates<float>;
template class HeadGates<double>;
template class Transformer<float>;
template class Transformer<double>;

#define XLT_INSTANTIATE_MODEL_FNS(T)                                                              \
  template Tensor<T> key_padding_mask<T>(std::span<const std::int32_t>, std::int64_t, std::int64_t, \
                                         int, std::int64_t);                                     \
  template Tensor<T> causal_mask<T>(std::int64_t, int, std::int64_t);                            \
  template Tensor<T> gated_mhatt(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&,  \
                                 const Tensor<T>*, const Tensor<T>&, std::int64_t, int);          \
  template Tensor<T> label_smoothed_loss(const Tensor<T>&, std::span<const std::int32_t>, double,  \
                                         std::int32_t);

XLT_INSTANTIATE_MODEL_FNS(float)
XLT_INSTANTIATE_MODEL_FNS(double)

#undef XLT_INSTANTIATE_MODEL_FNS

}  // namespace xlt
