#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "xlt/model.hpp"
#include "xlt/training/checkpoint.hpp"
#include "xlt/training/corpus.hpp"

namespace xlt {

/// Per-head importance for one language pair, in canonical head order.
/// A full vector covers every head of `topology`; subsets keep a subsequence.
struct HeadScores {
  HeadTopology topology;
  std::vector<HeadIndex> heads;
  std::vector<double> scores;
  std::string pair;
  std::string model_id;
  std::size_t sample_count = 0;
  bool normalized = false;

  std::size_t size() const { return scores.size(); }
  double score(const HeadIndex& h) const;
};

struct ProbeSettings {
  std::size_t sample_cap = 100000;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Raw scores: mean over minibatches of |d loss / d gate_h|, with the
/// training loss. The sample is drawn without replacement and then sorted
/// canonically, so the result does not depend on input order. Parameters
/// are excluded from the graph while probing; gates are left at 1.
template <typename T>
HeadScores estimate_importance(Transformer<T>& model, const std::vector<EncodedPair>& examples,
                               const ProbeSettings& settings);

/// Loads the model in its stored precision and probes `slice`, encoded the
/// way the model was trained (tags included when it used them).
HeadScores estimate_importance(const Checkpoint& ckpt, const ParallelCorpus& slice,
                               const ProbeSettings& settings, const std::string& model_id = "");

/// Divides each attention module's scores by their L2 norm; all-zero
/// modules stay zero.
HeadScores normalize(const HeadScores& raw);

enum class HeadSubset { encoder, decoder, cross, self };
HeadSubset parse_subset(std::string_view name);
std::string to_string(HeadSubset s);
/// enc: encoder self-attention; dec: decoder self + cross; cross; self (decoder).
HeadScores subset(const HeadScores& scores, HeadSubset which);

/// Largest |norm - 1| over modules with any non-zero score.
double max_norm_deviation(const HeadScores& scores);

void write_scores_csv(const HeadScores& scores, const std::filesystem::path& path);
std::string scores_csv(const HeadScores& scores);
HeadScores read_scores_csv(const std::filesystem::path& path);
HeadScores parse_scores_csv(const std::string& text);

}  // namespace xlt
