#pragma once

#include <cstdint>
#include <vector>

#include "xlt/model.hpp"
#include "xlt/random.hpp"

namespace xlt {

/// Endless stream of padded batches. Each epoch shuffles every example of
/// every pair together, so pairs are sampled in proportion to their size,
/// then packs consecutive examples while batch * max_len stays within the
/// token budget on both sides. Batches never straddle an epoch boundary.
class BatchStream {
 public:
  BatchStream(std::vector<EncodedPair> examples, std::int64_t batch_tokens,
              std::int64_t max_sequence_length, std::uint64_t seed);

  Batch next();

  /// Indices (into the kept examples) of each batch of the next epoch, without
  /// consuming it. Mostly for tests.
  std::vector<std::vector<std::size_t>> plan_epoch(std::size_t epoch) const;

  std::size_t epoch() const { return epoch_; }
  /// Examples dropped for exceeding max_sequence_length.
  std::size_t skipped() const { return skipped_; }
  const std::vector<EncodedPair>& examples() const { return examples_; }

 private:
  void start_epoch();

  std::vector<EncodedPair> examples_;
  std::int64_t batch_tokens_;
  std::uint64_t seed_;
  std::size_t skipped_ = 0;
  std::size_t epoch_ = 0;
  std::vector<std::vector<std::size_t>> current_;
  std::size_t cursor_ = 0;
};

}  // namespace xlt
