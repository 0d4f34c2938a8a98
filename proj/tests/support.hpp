#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <stdlib.h>

#include "xlt/model.hpp"
#include "xlt/random.hpp"
#include "xlt/tensor.hpp"

namespace xlt::fixtures {

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Central difference of f in one scalar, restoring the value afterwards.
template <typename T>
double central_difference(T& slot, double eps, const std::function<double()>& f) {
  const T saved = slot;
  slot = static_cast<T>(saved + eps);
  const double up = f();
  slot = static_cast<T>(saved - eps);
  const double down = f();
  slot = saved;
  return (up - down) / (2.0 * eps);
}

inline TransformerConfig tiny_config(int vocab = 50) {
  TransformerConfig c;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.heads = 4;
  c.model_dim = 16;
  c.ffn_dim = 16;
  c.vocab_size = vocab;
  c.max_sequence_length = 32;
  c.precision = Precision::f64;
  return c;
}

/// Random pairs over ids [4, vocab), each side ending with eos.
inline std::vector<EncodedPair> random_pairs(int count, int vocab, std::uint64_t seed, int min_len = 2,
                                             int max_len = 6) {
  Rng rng(seed);
  std::vector<EncodedPair> out;
  for (int i = 0; i < count; ++i) {
    EncodedPair p;
    const auto ls = min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len - min_len + 1)));
    const auto lt = min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len - min_len + 1)));
    for (int j = 0; j < ls; ++j) p.source.push_back(4 + static_cast<std::int32_t>(rng.below(vocab - 4)));
    for (int j = 0; j < lt; ++j) p.target.push_back(4 + static_cast<std::int32_t>(rng.below(vocab - 4)));
    p.source.push_back(2);
    p.target.push_back(2);
    out.push_back(std::move(p));
  }
  return out;
}

/// Moves biases and gains off their initial constants so the check is not
/// run at a special point.
template <typename T>
void jitter_parameters(Transformer<T>& model, std::uint64_t seed, double amount = 0.1) {
  Rng rng(seed);
  for (auto& [name, t] : model.parameters()) {
    if (name.find("bias") == std::string::npos && name.find("gain") == std::string::npos &&
        name.find(".b1") == std::string::npos && name.find(".b2") == std::string::npos) {
      continue;
    }
    for (auto& v : t.mutable_data()) v = static_cast<T>(v + rng.uniform(-amount, amount));
  }
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::string pattern = (std::filesystem::temp_directory_path() / ("xlt-" + tag + "-XXXXXX")).string();
    if (::mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed for " + pattern);
    path = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace xlt::fixtures
