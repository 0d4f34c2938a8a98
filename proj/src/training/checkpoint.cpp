#include "xlt/training/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace xlt {

namespace {

constexpr char kMagic[4] = {'X', 'L', 'A', '1'};
constexpr std::uint8_t kKindParameter = 0;
constexpr std::uint8_t kKindOptimizer = 1;

std::size_t dtype_size(Precision p) { return p == Precision::f32 ? 4 : 8; }

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
  }
  void str(const std::string& s) {
    le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void map(const std::map<std::string, std::string>& m) {
    le<std::uint32_t>(static_cast<std::uint32_t>(m.size()));
    for (const auto& [k, v] : m) {
      str(k);
      str(v);
    }
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : p_(data), size_(size) {}

  void need(std::size_t n, const char* what) const {
    if (size_ - pos_ < n) {
      throw CheckpointCorruptError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string str(const char* what) {
    const auto n = le<std::uint32_t>(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::map<std::string, std::string> map(const char* what) {
    std::map<std::string, std::string> m;
    const auto n = le<std::uint32_t>(what);
    for (std::uint32_t i = 0; i < n; ++i) {
      auto k = str(what);
      m[k] = str(what);
    }
    return m;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* p_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

bool known_parameter_name(std::string_view name) {
  try {
    component_of(name);
    return name.find('.') != std::string_view::npos;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

bool known_optimizer_name(std::string_view name) {
  for (std::string_view prefix : {"adam.m.", "adam.v."}) {
    if (name.substr(0, prefix.size()) == prefix) return known_parameter_name(name.substr(prefix.size()));
  }
  return false;
}

void append_payload(std::vector<std::uint8_t>& out, const StoredTensor& t) {
  if (static_cast<std::int64_t>(t.values.size()) != numel(t.shape)) {
    throw CheckpointError("tensor " + t.name + " holds " + std::to_string(t.values.size()) +
                          " values for shape " + shape_str(t.shape));
  }
  for (double v : t.values) {
    if (t.dtype == Precision::f32) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    } else {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
}

std::vector<double> read_payload(const std::uint8_t* p, std::size_t count, Precision dtype) {
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (dtype == Precision::f32) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
      values[i] = static_cast<double>(std::bit_cast<float>(bits));
    } else {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[8 * i + b]) << (8 * b);
      values[i] = std::bit_cast<double>(bits);
    }
  }
  return values;
}

}  // namespace

const StoredTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : parameters) {
    if (t.name == name) return &t;
  }
  for (const auto& t : optimizer) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const StoredTensor& Checkpoint::at(std::string_view name) const {
  const auto* t = find(name);
  if (!t) throw CheckpointError("checkpoint has no tensor '" + std::string(name) + "'");
  return *t;
}

std::string Checkpoint::meta(const std::string& key, const std::string& fallback) const {
  const auto it = metadata.find(key);
  return it == metadata.end() ? fallback : it->second;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<const StoredTensor*> all;
  std::vector<std::uint8_t> kinds;
  for (const auto& t : ckpt.parameters) {
    all.push_back(&t);
    kinds.push_back(kKindParameter);
  }
  for (const auto& t : ckpt.optimizer) {
    all.push_back(&t);
    kinds.push_back(kKindOptimizer);
  }

  std::vector<std::uint8_t> payload;
  Writer header;
  header.map(ckpt.config.to_map());
  header.map(ckpt.metadata);
  header.le<std::uint32_t>(static_cast<std::uint32_t>(all.size()));
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& t = *all[i];
    const auto offset = payload.size();
    append_payload(payload, t);
    header.str(t.name);
    header.le<std::uint8_t>(t.dtype == Precision::f32 ? 0 : 1);
    header.le<std::uint8_t>(kinds[i]);
    header.le<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) header.le<std::int64_t>(d);
    header.le<std::uint64_t>(offset);
    header.le<std::uint64_t>(payload.size() - offset);
  }

  Writer out;
  out.bytes(kMagic, 4);
  out.le<std::uint32_t>(ckpt.version);
  out.le<std::uint64_t>(header.data().size());
  out.bytes(header.data().data(), header.data().size());
  out.bytes(payload.data(), payload.size());
  return std::move(out.data());
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointCorruptError("not a checkpoint file (bad magic bytes)");
  }
  r.le<std::uint32_t>("magic");
  Checkpoint ckpt;
  ckpt.version = r.le<std::uint32_t>("version");
  if (ckpt.version != Checkpoint::kFormatVersion) {
    throw CheckpointVersionError("checkpoint format version " + std::to_string(ckpt.version) +
                                 " is not supported (expected " +
                                 std::to_string(Checkpoint::kFormatVersion) + ")");
  }
  const auto header_len = r.le<std::uint64_t>("header length");
  r.need(header_len, "header");
  const std::size_t payload_start = r.pos() + header_len;
  const std::size_t payload_size = bytes.size() - payload_start;

  try {
    ckpt.config = TransformerConfig::from_map(r.map("config"));
  } catch (const std::invalid_argument& e) {
    throw CheckpointCorruptError(std::string("checkpoint config unreadable: ") + e.what());
  }
  ckpt.metadata = r.map("metadata");
  const auto count = r.le<std::uint32_t>("tensor count");
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.str("tensor name");
    const auto dtype = r.le<std::uint8_t>("dtype");
    const auto kind = r.le<std::uint8_t>("kind");
    if (dtype > 1 || kind > 1) throw CheckpointCorruptError("bad table entry for " + t.name);
    t.dtype = dtype == 0 ? Precision::f32 : Precision::f64;
    const auto rank = r.le<std::uint32_t>("rank");
    if (rank > 8) throw CheckpointCorruptError("implausible rank for " + t.name);
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.le<std::int64_t>("shape");
      if (dim < 0) throw CheckpointCorruptError("negative dimension in " + t.name);
      t.shape.push_back(dim);
    }
    const auto offset = r.le<std::uint64_t>("offset");
    const auto nbytes = r.le<std::uint64_t>("size");
    if (r.pos() > payload_start) throw CheckpointCorruptError("tensor table overruns header");

    const bool known = kind == kKindParameter ? known_parameter_name(t.name)
                                              : known_optimizer_name(t.name);
    if (!known) throw UnknownTensorError("checkpoint holds unknown tensor '" + t.name + "'");
    if (!seen.insert(t.name).second) throw CheckpointCorruptError("duplicate tensor " + t.name);

    const auto n = static_cast<std::uint64_t>(numel(t.shape));
    if (nbytes != n * dtype_size(t.dtype)) {
      throw CheckpointCorruptError("size of " + t.name + " disagrees with its shape");
    }
    if (offset > payload_size || nbytes > payload_size - offset) {
      throw CheckpointCorruptError("checkpoint truncated inside tensor " + t.name);
    }
    t.values = read_payload(bytes.data() + payload_start + offset, n, t.dtype);
    (kind == kKindParameter ? ckpt.parameters : ckpt.optimizer).push_back(std::move(t));
  }
  if (r.pos() != payload_start) throw CheckpointCorruptError("header length mismatch");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const CheckpointVersionError& e) {
    throw CheckpointVersionError(path.string() + ": " + e.what());
  } catch (const UnknownTensorError& e) {
    throw UnknownTensorError(path.string() + ": " + e.what());
  } catch (const CheckpointCorruptError& e) {
    throw CheckpointCorruptError(path.string() + ": " + e.what());
  }
}

template <typename T>
Checkpoint snapshot(const Transformer<T>& model) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  for (const auto& [name, tensor] : model.parameters()) {
    StoredTensor t;
    t.name = name;
    t.dtype = model.config().precision;
    t.shape = tensor.shape();
    t.values.assign(tensor.data().begin(), tensor.data().end());
    ckpt.parameters.push_back(std::move(t));
  }
  return ckpt;
}

template <typename T>
void restore(const Checkpoint& ckpt, Transformer<T>& model,
             const std::function<bool(std::string_view)>& select) {
  const auto& want = model.config();
  std::vector<std::string> offending;
  std::string fields;
  if (!ckpt.config.same_shapes(want)) {
    const auto have_map = ckpt.config.to_map();
    const auto want_map = want.to_map();
    for (const auto& [key, value] : want_map) {
      if (key == "label_smoothing" || key == "max_sequence_length" || key == "precision") continue;
      if (have_map.at(key) != value) {
        fields += (fields.empty() ? "" : ", ") + key + " " + have_map.at(key) + " vs " + value;
      }
    }
  }
  const bool heads_differ = ckpt.config.heads != want.heads;
  for (const auto& [name, tensor] : model.parameters()) {
    const auto* stored = ckpt.find(name);
    if (!stored) {
      offending.push_back(name + " (missing)");
    } else if (stored->shape != tensor.shape()) {
      offending.push_back(name + " " + shape_str(stored->shape) + " vs " + shape_str(tensor.shape()));
    } else if (heads_differ && name.find("attn.") != std::string::npos) {
      offending.push_back(name + " (head split " + std::to_string(ckpt.config.heads) + " vs " +
                          std::to_string(want.heads) + ")");
    }
  }
  if (!fields.empty() || !offending.empty()) {
    std::string msg = "checkpoint does not fit model";
    if (!fields.empty()) msg += " [" + fields + "]";
    msg += "; offending tensors:";
    for (const auto& o : offending) msg += "\n  " + o;
    throw CheckpointShapeError(msg, offending);
  }
  for (const auto& stored : ckpt.parameters) {
    if (!model.parameters().contains(stored.name)) {
      throw UnknownTensorError("checkpoint tensor '" + stored.name + "' does not exist in the model");
    }
  }
  for (auto& [name, tensor] : model.parameters()) {
    if (select && !select(name)) continue;
    const auto& stored = ckpt.at(name);
    auto out = tensor.mutable_data();
    for (std::size_t i = 0; i < stored.values.size(); ++i) out[i] = static_cast<T>(stored.values[i]);
  }
}

template Checkpoint snapshot(const Transformer<float>&);
template Checkpoint snapshot(const Transformer<double>&);
template void restore(const Checkpoint&, Transformer<float>&,
                      const std::function<bool(std::string_view)>&);
template void restore(const Checkpoint&, Transformer<double>&,
                      const std::function<bool(std::string_view)>&);

}  // namespace xlt
