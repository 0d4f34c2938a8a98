#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "xlt/evaluation.hpp"
#include "xlt/subword.hpp"
#include "xlt/training/trainer.hpp"

namespace xlt {

namespace {

struct Hypothesis {
  std::vector<std::int32_t> tokens;  // starts with <bos>
  double score = 0.0;                // summed log-probability
};

struct Candidate {
  double score;
  std::size_t beam;
  std::int32_t token;
};

/// Log-probabilities of the last position of every row; <pad> and <bos> are
/// never produced.
template <typename T>
std::vector<std::vector<double>> next_token_logprobs(const Transformer<T>& model, const Tensor<T>& memory,
                                                     const std::vector<std::int32_t>& source,
                                                     const std::vector<Hypothesis>& beams) {
  const auto rows = static_cast<std::int64_t>(beams.size());
  const auto slen = static_cast<std::int64_t>(source.size());
  const auto tlen = static_cast<std::int64_t>(beams.front().tokens.size());
  const auto dim = memory.shape()[1];

  std::vector<T> mem;
  std::vector<std::int32_t> src;
  std::vector<std::int32_t> tgt;
  for (const auto& b : beams) {
    mem.insert(mem.end(), memory.data().begin(), memory.data().end());
    src.insert(src.end(), source.begin(), source.end());
    tgt.insert(tgt.end(), b.tokens.begin(), b.tokens.end());
  }
  const auto wide = Tensor<T>::from_vector({rows * slen, dim}, std::move(mem));
  const auto logits = model.decode(wide, src, rows, slen, tgt, tlen, /*use_gates=*/false);
  const auto vocab = logits.shape()[1];
  const auto data = logits.data();

  std::vector<std::vector<double>> out(beams.size(), std::vector<double>(static_cast<std::size_t>(vocab)));
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto* row = data.data() + ((r + 1) * tlen - 1) * vocab;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t v = 0; v < vocab; ++v) mx = std::max(mx, static_cast<double>(row[v]));
    double z = 0.0;
    for (std::int64_t v = 0; v < vocab; ++v) z += std::exp(static_cast<double>(row[v]) - mx);
    const double lse = mx + std::log(z);
    auto& lp = out[static_cast<std::size_t>(r)];
    for (std::int64_t v = 0; v < vocab; ++v) lp[static_cast<std::size_t>(v)] = static_cast<double>(row[v]) - lse;
    lp[SubwordModel::kPad] = -std::numeric_limits<double>::infinity();
    lp[SubwordModel::kBos] = -std::numeric_limits<double>::infinity();
  }
  return out;
}

std::vector<std::int32_t> strip(const Hypothesis& h) {
  std::vector<std::int32_t> out(h.tokens.begin() + 1, h.tokens.end());
  if (!out.empty() && out.back() == SubwordModel::kEos) out.pop_back();
  return out;
}

template <typename T>
std::vector<std::int32_t> search(const Transformer<T>& model, const std::vector<std::int32_t>& source,
                                 const DecodeOptions& options) {
  const auto slen = static_cast<std::int64_t>(source.size());
  const int cap = model.config().max_sequence_length - 1;
  int max_len = options.max_len > 0 ? options.max_len : static_cast<int>(2 * slen + 10);
  max_len = std::min(max_len, cap);
  const auto memory = model.encode(source, 1, slen, /*use_gates=*/false);

  if (options.beam == 0) {
    Hypothesis h{{SubwordModel::kBos}, 0.0};
    for (int step = 0; step < max_len; ++step) {
      const auto lp = next_token_logprobs(model, memory, source, {h}).front();
      const auto best = static_cast<std::int32_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      h.tokens.push_back(best);
      h.score += lp[static_cast<std::size_t>(best)];
      if (best == SubwordModel::kEos) break;
    }
    return strip(h);
  }

  const auto width = static_cast<std::size_t>(options.beam);
  std::vector<Hypothesis> beams{{{SubwordModel::kBos}, 0.0}};
  std::vector<Hypothesis> finished;
  for (int step = 0; step < max_len && finished.size() < width; ++step) {
    const auto lps = next_token_logprobs(model, memory, source, beams);
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      for (std::size_t v = 0; v < lps[b].size(); ++v) {
        if (std::isinf(lps[b][v])) continue;
        cands.push_back({beams[b].score + lps[b][v], b, static_cast<std::int32_t>(v)});
      }
    }
    const auto take = std::min(cands.size(), 2 * width);
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.beam != b.beam) return a.beam < b.beam;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < take && next.size() < width; ++i) {
      Hypothesis h = beams[cands[i].beam];
      h.tokens.push_back(cands[i].token);
      h.score = cands[i].score;
      if (cands[i].token == SubwordModel::kEos) {
        if (i < width && finished.size() < width) finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    if (next.empty()) break;
    beams = std::move(next);
  }
  if (finished.size() < width) {
    for (auto& b : beams) {
      if (finished.size() >= width) break;
      finished.push_back(std::move(b));
    }
  }
  // Per-token normalization counts generated tokens including <eos>.
  const auto normalized = [](const Hypothesis& h) {
    return h.score / static_cast<double>(std::max<std::size_t>(1, h.tokens.size() - 1));
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (normalized(finished[i]) > normalized(finished[best])) best = i;
  }
  return strip(finished[best]);
}

}  // namespace

template <typename T>
std::vector<std::vector<std::int32_t>> decode_ids(const Transformer<T>& model,
                                                  const std::vector<std::vector<std::int32_t>>& sources,
                                                  const DecodeOptions& options) {
  if (options.beam < 0) throw std::invalid_argument("decode: beam width must be at least 1");
  if (options.max_len < 0) throw std::invalid_argument("decode: max_len must be non-negative");
  NoGradGuard no_grad;
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(sources.size());
  for (const auto& src : sources) {
    if (src.empty()) throw std::invalid_argument("decode: empty source sequence");
    out.push_back(search(model, src, options));
  }
  return out;
}

template std::vector<std::vector<std::int32_t>> decode_ids(const Transformer<float>&,
                                                           const std::vector<std::vector<std::int32_t>>&,
                                                           const DecodeOptions&);
template std::vector<std::vector<std::int32_t>> decode_ids(const Transformer<double>&,
                                                           const std::vector<std::vector<std::int32_t>>&,
                                                           const DecodeOptions&);

std::vector<std::string> translate(const Checkpoint& ckpt, const ParallelCorpus& corpus,
                                   const DecodeOptions& options) {
  const auto subword = checkpoint_subword(ckpt);
  const bool tags = checkpoint_uses_tags(ckpt);
  std::vector<std::vector<std::int32_t>> sources;
  for (const auto& e : corpus.entries()) {
    sources.push_back(tags ? subword.encode(e.source, e.target_lang) : subword.encode(e.source));
  }
  std::vector<std::vector<std::int32_t>> ids;
  if (ckpt.config.precision == Precision::f64) {
    ids = decode_ids(model_from_checkpoint<double>(ckpt), sources, options);
  } else {
    ids = decode_ids(model_from_checkpoint<float>(ckpt), sources, options);
  }
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& seq : ids) out.push_back(subword.decode(seq));
  return out;
}

}  // namespace xlt
