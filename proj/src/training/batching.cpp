#include "xlt/training/batching.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace xlt {

BatchStream::BatchStream(std::vector<EncodedPair> examples, std::int64_t batch_tokens,
                         std::int64_t max_sequence_length, std::uint64_t seed)
    : batch_tokens_(batch_tokens), seed_(seed) {
  std::int64_t longest = 0;
  for (auto& ex : examples) {
    const auto len = static_cast<std::int64_t>(std::max(ex.source.size(), ex.target.size()));
    if (len > max_sequence_length) {
      ++skipped_;
      continue;
    }
    longest = std::max(longest, len);
    examples_.push_back(std::move(ex));
  }
  if (examples_.empty()) throw std::invalid_argument("batch stream: no usable examples");
  if (batch_tokens_ < longest) {
    throw std::invalid_argument("batch stream: batch_tokens " + std::to_string(batch_tokens_) +
                                " is below the longest sentence (" + std::to_string(longest) +
                                " tokens)");
  }
  start_epoch();
}

std::vector<std::vector<std::size_t>> BatchStream::plan_epoch(std::size_t epoch) const {
  std::vector<std::size_t> order(examples_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::int64_t width = 0;
  for (auto idx : order) {
    const auto& ex = examples_[idx];
    const auto len = static_cast<std::int64_t>(std::max(ex.source.size(), ex.target.size()));
    const auto w = std::max(width, len);
    if (!cur.empty() && w * static_cast<std::int64_t>(cur.size() + 1) > batch_tokens_) {
      batches.push_back(std::move(cur));
      cur.clear();
      width = len;
    } else {
      width = w;
    }
    cur.push_back(idx);
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

void BatchStream::start_epoch() {
  current_ = plan_epoch(epoch_);
  cursor_ = 0;
}

Batch BatchStream::next() {
  if (cursor_ == current_.size()) {
    ++epoch_;
    start_epoch();
  }
  const auto& ids = current_[cursor_++];
  std::vector<const EncodedPair*> ptrs;
  ptrs.reserve(ids.size());
  for (auto i : ids) ptrs.push_back(&examples_[i]);
  return collate(std::span<const EncodedPair* const>(ptrs));
}

}  // namespace xlt
