#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlt/model.hpp"

namespace xlt {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
/// Bad magic, truncated file or inconsistent table.
class CheckpointCorruptError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class UnknownTensorError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  CheckpointShapeError(const std::string& what, std::vector<std::string> tensors)
      : CheckpointError(what), tensors_(std::move(tensors)) {}
  const std::vector<std::string>& tensors() const { return tensors_; }

 private:
  std::vector<std::string> tensors_;
};

/// Values are held as double regardless of dtype; f32 -> f64 -> f32 is exact,
/// so the round trip stays bit-exact.
struct StoredTensor {
  std::string name;
  Precision dtype = Precision::f32;
  Shape shape;
  std::vector<double> values;

  bool operator==(const StoredTensor&) const = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  TransformerConfig config;
  std::vector<StoredTensor> parameters;
  /// Optimizer moments, named "adam.m.<param>" / "adam.v.<param>".
  std::vector<StoredTensor> optimizer;
  /// regime, step, seed, language_tags, subword, ...
  std::map<std::string, std::string> metadata;

  const StoredTensor* find(std::string_view name) const;
  const StoredTensor& at(std::string_view name) const;
  std::string meta(const std::string& key, const std::string& fallback = "") const;
};

template <typename T>
Checkpoint snapshot(const Transformer<T>& model);

/// Copies every parameter of `ckpt` into `model`. Throws CheckpointShapeError
/// listing offending tensors when configs or shapes disagree, and
/// UnknownTensorError for names the model does not have. With `select`,
/// only matching parameter names are copied.
template <typename T>
void restore(const Checkpoint& ckpt, Transformer<T>& model,
             const std::function<bool(std::string_view)>& select = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace xlt
