#include <cmath>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xlt/evaluation.hpp"
#include "xlt/subword.hpp"

namespace xlt {

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

namespace {

using Gram = std::vector<std::string_view>;

std::map<Gram, std::int64_t> count_ngrams(const std::vector<std::string_view>& toks, std::size_t n) {
  std::map<Gram, std::int64_t> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[Gram(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                                               toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

}  // namespace

BleuStats sentence_stats(const std::string& hypothesis, const std::string& reference) {
  const auto hyp = split_words(hypothesis);
  const auto ref = split_words(reference);
  BleuStats s;
  s.hyp_len = static_cast<std::int64_t>(hyp.size());
  s.ref_len = static_cast<std::int64_t>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto h = count_ngrams(hyp, n);
    const auto r = count_ngrams(ref, n);
    for (const auto& [gram, count] : h) {
      const auto it = r.find(gram);
      if (it != r.end()) s.matches[n - 1] += std::min(count, it->second);
    }
    s.totals[n - 1] = hyp.size() >= n ? static_cast<std::int64_t>(hyp.size() - n + 1) : 0;
  }
  return s;
}

EvalResult bleu_from_stats(const BleuStats& s, const BleuOptions& options) {
  EvalResult r;
  r.hyp_len = s.hyp_len;
  r.ref_len = s.ref_len;
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    double p = 0.0;
    if (options.smooth && n > 0) {
      p = (static_cast<double>(s.matches[n]) + 1.0) / (static_cast<double>(s.totals[n]) + 1.0);
    } else if (s.totals[n] > 0) {
      p = static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]);
    }
    r.precisions[n] = p;
    if (p <= 0.0) zero = true;
    else log_sum += std::log(p);
  }
  if (s.hyp_len == 0) {
    r.brevity_penalty = 0.0;
  } else if (s.hyp_len >= s.ref_len) {
    r.brevity_penalty = 1.0;
  } else {
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len));
  }
  r.bleu = zero || s.hyp_len == 0 ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

EvalResult corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                       const BleuOptions& options) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("bleu: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                                std::to_string(references.size()) + " references");
  }
  if (hypotheses.empty()) throw std::invalid_argument("bleu: empty corpus");
  BleuStats total;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) total += sentence_stats(hypotheses[i], references[i]);
  return bleu_from_stats(total, options);
}

std::string EvalResult::to_json() const {
  nlohmann::ordered_json j;
  j["bleu"] = bleu;
  j["p1"] = precisions[0];
  j["p2"] = precisions[1];
  j["p3"] = precisions[2];
  j["p4"] = precisions[3];
  j["bp"] = brevity_penalty;
  j["hyp_len"] = hyp_len;
  j["ref_len"] = ref_len;
  if (!pair.empty()) j["pair"] = pair;
  return j.dump();
}

}  // namespace xlt
