#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xlt/model.hpp"
#include "xlt/subword.hpp"
#include "xlt/training/checkpoint.hpp"
#include "xlt/training/corpus.hpp"

namespace xlt {

/// Which components start from a multilingual checkpoint and which stay fixed.
struct TransferPlan {
  bool load_encoder = false;
  bool load_decoder = false;
  bool freeze_encoder = false;
  bool freeze_decoder = false;

  bool loads_anything() const { return load_encoder || load_decoder; }
  /// Throws std::invalid_argument when a frozen component is not loaded.
  void validate() const;
  /// none, load-enc, load-dec, load-both, freeze-enc, freeze-dec, or a
  /// '+'-joined combination such as load-both+freeze-dec.
  std::string name() const;
  /// Inverse of name(). The shorthand freeze-enc means load-enc+freeze-enc.
  static TransferPlan parse(std::string_view text);

  bool loads(std::string_view parameter_name) const;
  bool freezes(std::string_view parameter_name) const;

  bool operator==(const TransferPlan&) const = default;
};

struct OptimizerSettings {
  double learning_rate = 1e-3;  // peak, reached at the end of warmup
  int warmup_steps = 400;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double clip_norm = 0.0;  // 0 disables clipping

  /// Inverse-square-root schedule with linear warmup; `step` counts from 1.
  double rate(std::int64_t step) const;
};

struct TrainSettings {
  std::int64_t steps = 1000;
  std::int64_t batch_tokens = 512;
  OptimizerSettings optimizer;
  bool keep_optimizer_state = true;
};

/// Everything a key=value training config file can set.
struct RunConfig {
  TransformerConfig model;
  TrainSettings train;
  int bpe_merges = 512;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  std::int64_t target_tokens = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> log;
  std::size_t skipped_examples = 0;
};

struct TrainRequest {
  const ParallelCorpus* corpus = nullptr;
  const SubwordModel* subword = nullptr;
  TransformerConfig model;  // vocab_size is taken from the subword model
  TransferPlan plan;
  const Checkpoint* source = nullptr;
  TrainSettings settings;
  std::uint64_t seed = 0;
  /// Defaults to the source checkpoint's choice, else to the corpus regime.
  std::optional<bool> language_tags;
  /// Called after every optimizer step.
  std::function<void(const StepRecord&)> on_step;
};

TrainResult train(const TrainRequest& request);

bool checkpoint_uses_tags(const Checkpoint& ckpt);
SubwordModel checkpoint_subword(const Checkpoint& ckpt);

template <typename T>
Transformer<T> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace xlt
