#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "xlt/model.hpp"
#include "xlt/training/checkpoint.hpp"
#include "xlt/training/corpus.hpp"

namespace xlt {

struct DecodeOptions {
  /// 0 selects greedy search; otherwise the beam width.
  int beam = 0;
  /// Most tokens generated before <eos>; 0 means 2 * source length + 10.
  int max_len = 0;
};

/// Decodes each source id sequence independently. Returned sequences exclude
/// <bos> and <eos>. Beam search finalizes a hypothesis when <eos> ranks among
/// the top `beam` of the 2 * `beam` best expansions, stops once `beam`
/// hypotheses are final, and returns the best by per-token log-probability.
template <typename T>
std::vector<std::vector<std::int32_t>> decode_ids(const Transformer<T>& model,
                                                  const std::vector<std::vector<std::int32_t>>& sources,
                                                  const DecodeOptions& options);

/// Translates every source sentence of `corpus`, tagging sources the way
/// the checkpoint was trained. Returns detokenized text.
std::vector<std::string> translate(const Checkpoint& ckpt, const ParallelCorpus& corpus,
                                   const DecodeOptions& options);

struct BleuStats {
  std::array<std::int64_t, 4> matches{};
  std::array<std::int64_t, 4> totals{};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
  bool operator==(const BleuStats&) const = default;
};

/// Clipped n-gram counts for one whitespace-tokenized pair.
BleuStats sentence_stats(const std::string& hypothesis, const std::string& reference);

struct EvalResult {
  double bleu = 0.0;
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;
  std::string pair;

  /// One-line record: {"bleu", "p1".."p4", "bp", "hyp_len", "ref_len", "pair"}.
  std::string to_json() const;
};

struct BleuOptions {
  /// Add-one smoothing of the 2..4-gram precisions.
  bool smooth = false;
};

EvalResult bleu_from_stats(const BleuStats& stats, const BleuOptions& options = {});
EvalResult corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                       const BleuOptions& options = {});

}  // namespace xlt
