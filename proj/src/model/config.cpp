#include <algorithm>
#include <charconv>
#include <cstdio>
#include <stdexcept>

#include "xlt/model.hpp"
#include "xlt/subword.hpp"

namespace xlt {

TransformerConfig TransformerConfig::full_scale(int vocab_size) {
  TransformerConfig c;
  c.encoder_layers = 6;
  c.decoder_layers = 6;
  c.heads = 8;
  c.model_dim = 512;
  c.ffn_dim = 2048;
  c.vocab_size = vocab_size;
  c.label_smoothing = 0.1;
  c.max_sequence_length = 256;
  return c;
}

TransformerConfig TransformerConfig::desk_scale(int vocab_size) {
  TransformerConfig c;
  c.vocab_size = vocab_size;
  return c;
}

void TransformerConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("config: ") + name + " must be positive");
  };
  positive(encoder_layers, "encoder_layers");
  positive(decoder_layers, "decoder_layers");
  positive(heads, "heads");
  positive(model_dim, "model_dim");
  positive(ffn_dim, "ffn_dim");
  positive(vocab_size, "vocab_size");
  positive(max_sequence_length, "max_sequence_length");
  if (model_dim % heads != 0) {
    throw std::invalid_argument("config: model_dim " + std::to_string(model_dim) +
                                " is not divisible by heads " + std::to_string(heads));
  }
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw std::invalid_argument("config: label_smoothing must lie in [0, 1)");
  }
}

bool TransformerConfig::same_shapes(const TransformerConfig& o) const {
  return encoder_layers == o.encoder_layers && decoder_layers == o.decoder_layers &&
         heads == o.heads && model_dim == o.model_dim && ffn_dim == o.ffn_dim &&
         vocab_size == o.vocab_size;
}

std::map<std::string, std::string> TransformerConfig::to_map() const {
  char smoothing[32];
  std::snprintf(smoothing, sizeof smoothing, "%.17g", label_smoothing);
  return {{"encoder_layers", std::to_string(encoder_layers)},
          {"decoder_layers", std::to_string(decoder_layers)},
          {"heads", std::to_string(heads)},
          {"model_dim", std::to_string(model_dim)},
          {"ffn_dim", std::to_string(ffn_dim)},
          {"vocab_size", std::to_string(vocab_size)},
          {"label_smoothing", smoothing},
          {"max_sequence_length", std::to_string(max_sequence_length)},
          {"precision", to_string(precision)}};
}

namespace {

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + value + "'");
  }
  return out;
}

}  // namespace

TransformerConfig TransformerConfig::from_map(const std::map<std::string, std::string>& kv) {
  TransformerConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "encoder_layers") c.encoder_layers = parse_int(key, value);
    else if (key == "decoder_layers") c.decoder_layers = parse_int(key, value);
    else if (key == "heads") c.heads = parse_int(key, value);
    else if (key == "model_dim") c.model_dim = parse_int(key, value);
    else if (key == "ffn_dim") c.ffn_dim = parse_int(key, value);
    else if (key == "vocab_size") c.vocab_size = parse_int(key, value);
    else if (key == "max_sequence_length") c.max_sequence_length = parse_int(key, value);
    else if (key == "label_smoothing") {
      try {
        std::size_t used = 0;
        c.label_smoothing = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw std::invalid_argument("config: label_smoothing expects a number, got '" + value + "'");
      }
    } else if (key == "precision") c.precision = parse_precision(value);
    else throw std::invalid_argument("config: unknown model key '" + key + "'");
  }
  return c;
}

std::string to_string(Section s) {
  switch (s) {
    case Section::encoder_self: return "encoder-self";
    case Section::decoder_self: return "decoder-self";
    case Section::decoder_cross: return "decoder-cross";
  }
  throw std::logic_error("unreachable section");
}

Section parse_section(std::string_view s) {
  if (s == "encoder-self") return Section::encoder_self;
  if (s == "decoder-self") return Section::decoder_self;
  if (s == "decoder-cross") return Section::decoder_cross;
  throw std::invalid_argument("unknown attention section '" + std::string(s) + "'");
}

std::size_t HeadTopology::module_index(Section section, int layer) const {
  const int layers = section == Section::encoder_self ? encoder_layers : decoder_layers;
  if (layer < 0 || layer >= layers) {
    throw std::out_of_range("head topology: layer " + std::to_string(layer) + " out of range for " +
                            to_string(section));
  }
  switch (section) {
    case Section::encoder_self: return static_cast<std::size_t>(layer);
    case Section::decoder_self: return static_cast<std::size_t>(encoder_layers + layer);
    case Section::decoder_cross:
      return static_cast<std::size_t>(encoder_layers + decoder_layers + layer);
  }
  throw std::logic_error("unreachable section");
}

std::size_t HeadTopology::flat_index(const HeadIndex& h) const {
  if (h.head < 0 || h.head >= heads) {
    throw std::out_of_range("head topology: head " + std::to_string(h.head) + " out of range");
  }
  return module_index(h.section, h.layer) * static_cast<std::size_t>(heads) +
         static_cast<std::size_t>(h.head);
}

HeadIndex HeadTopology::head_at(std::size_t flat) const {
  if (flat >= head_count()) throw std::out_of_range("head topology: flat index out of range");
  const int module = static_cast<int>(flat / static_cast<std::size_t>(heads));
  const int head = static_cast<int>(flat % static_cast<std::size_t>(heads));
  if (module < encoder_layers) return {Section::encoder_self, module, head};
  if (module < encoder_layers + decoder_layers)
    return {Section::decoder_self, module - encoder_layers, head};
  return {Section::decoder_cross, module - encoder_layers - decoder_layers, head};
}

std::vector<HeadIndex> HeadTopology::canonical_heads() const {
  std::vector<HeadIndex> out;
  out.reserve(head_count());
  for (std::size_t i = 0; i < head_count(); ++i) out.push_back(head_at(i));
  return out;
}

std::int64_t Batch::target_tokens() const {
  return std::count_if(target_out.begin(), target_out.end(),
                       [](std::int32_t t) { return t != SubwordModel::kPad; });
}

Batch collate(std::span<const EncodedPair* const> examples) {
  if (examples.empty()) throw std::invalid_argument("collate: empty batch");
  Batch b;
  b.size = static_cast<std::int64_t>(examples.size());
  for (const auto* ex : examples) {
    if (ex->source.empty() || ex->target.empty()) {
      throw std::invalid_argument("collate: empty source or target sequence");
    }
    b.source_len = std::max<std::int64_t>(b.source_len, static_cast<std::int64_t>(ex->source.size()));
    b.target_len = std::max<std::int64_t>(b.target_len, static_cast<std::int64_t>(ex->target.size()));
  }
  b.source.assign(static_cast<std::size_t>(b.size * b.source_len), SubwordModel::kPad);
  b.target_in.assign(static_cast<std::size_t>(b.size * b.target_len), SubwordModel::kPad);
  b.target_out.assign(static_cast<std::size_t>(b.size * b.target_len), SubwordModel::kPad);
  for (std::int64_t i = 0; i < b.size; ++i) {
    const auto& ex = *examples[static_cast<std::size_t>(i)];
    std::copy(ex.source.begin(), ex.source.end(), b.source.begin() + i * b.source_len);
    b.target_in[static_cast<std::size_t>(i * b.target_len)] = SubwordModel::kBos;
    std::copy(ex.target.begin(), ex.target.end() - 1, b.target_in.begin() + i * b.target_len + 1);
    std::copy(ex.target.begin(), ex.target.end(), b.target_out.begin() + i * b.target_len);
    b.pairs.push_back(ex.pair);
  }
  return b;
}

Batch collate(const std::vector<EncodedPair>& examples) {
  std::vector<const EncodedPair*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& ex : examples) ptrs.push_back(&ex);
  return collate(std::span<const EncodedPair* const>(ptrs));
}

std::string component_of(std::string_view name) {
  const auto dot = name.find('.');
  const std::string head(name.substr(0, dot));
  if (head == "encoder" || head == "decoder" || head == "src_embed" || head == "tgt_embed" ||
      head == "out_proj") {
    return head;
  }
  throw std::invalid_argument("parameter '" + std::string(name) + "' has no component prefix");
}

bool is_encoder_side(std::string_view name) {
  const auto c = component_of(name);
  return c == "encoder" || c == "src_embed";
}

}  // namespace xlt
