#include "xlt/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "xlt/random.hpp"
#include "xlt/training/trainer.hpp"

namespace xlt {

double HeadScores::score(const HeadIndex& h) const {
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i] == h) return scores[i];
  }
  throw std::out_of_range("head not present in score vector");
}

template <typename T>
HeadScores estimate_importance(Transformer<T>& model, const std::vector<EncodedPair>& examples,
                               const ProbeSettings& settings) {
  if (settings.batch_size == 0) throw std::invalid_argument("probe: batch size must be positive");
  if (!model.gates().all_ones()) throw std::invalid_argument("probe: all head gates must be 1.0");

  const auto max_len = static_cast<std::size_t>(model.config().max_sequence_length);
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].source.size() <= max_len && examples[i].target.size() <= max_len) usable.push_back(i);
  }
  if (usable.empty()) throw std::invalid_argument("probe: empty corpus slice");

  const auto cap = std::max<std::size_t>(1, settings.sample_cap);
  if (usable.size() > cap) {
    Rng rng(derive_seed(settings.seed, "probe-sample"));
    rng.shuffle(usable);
    usable.resize(cap);
  }
  std::vector<const EncodedPair*> sample;
  for (auto i : usable) sample.push_back(&examples[i]);
  std::sort(sample.begin(), sample.end(), [](const EncodedPair* a, const EncodedPair* b) {
    if (a->source != b->source) return a->source < b->source;
    if (a->target != b->target) return a->target < b->target;
    return a->pair < b->pair;
  });

  const auto topo = model.gates().topology();
  const auto heads = topo.canonical_heads();
  std::vector<double> sums(heads.size(), 0.0);
  std::size_t batches = 0;

  model.set_parameters_require_grad(false);
  try {
    for (std::size_t start = 0; start < sample.size(); start += settings.batch_size) {
      const auto end = std::min(sample.size(), start + settings.batch_size);
      const Batch batch = collate(std::span<const EncodedPair* const>(sample.data() + start, end - start));
      model.gates().zero_grad();
      model.forward_loss(batch, /*use_gates=*/true).backward();
      for (std::size_t h = 0; h < heads.size(); ++h) {
        sums[h] += std::abs(static_cast<double>(model.gates().gradient(heads[h])));
      }
      ++batches;
    }
  } catch (...) {
    model.gates().zero_grad();
    model.set_parameters_require_grad(true);
    throw;
  }
  model.gates().zero_grad();
  model.set_parameters_require_grad(true);

  HeadScores out;
  out.topology = topo;
  out.heads = heads;
  out.scores.resize(heads.size());
  for (std::size_t h = 0; h < heads.size(); ++h) out.scores[h] = sums[h] / static_cast<double>(batches);
  out.sample_count = sample.size();
  return out;
}

template HeadScores estimate_importance(Transformer<float>&, const std::vector<EncodedPair>&,
                                        const ProbeSettings&);
template HeadScores estimate_importance(Transformer<double>&, const std::vector<EncodedPair>&,
                                        const ProbeSettings&);

HeadScores estimate_importance(const Checkpoint& ckpt, const ParallelCorpus& slice,
                               const ProbeSettings& settings, const std::string& model_id) {
  if (slice.empty()) throw std::invalid_argument("probe: empty corpus slice");
  const auto pairs = slice.pairs();
  if (pairs.size() != 1) throw std::invalid_argument("probe: slice must hold exactly one language pair");
  const auto subword = checkpoint_subword(ckpt);
  const auto examples = encode_corpus(slice, subword, checkpoint_uses_tags(ckpt));
  HeadScores out;
  if (ckpt.config.precision == Precision::f64) {
    auto model = model_from_checkpoint<double>(ckpt);
    out = estimate_importance(model, examples, settings);
  } else {
    auto model = model_from_checkpoint<float>(ckpt);
    out = estimate_importance(model, examples, settings);
  }
  out.pair = pairs.front().label();
  out.model_id = model_id;
  return out;
}

HeadScores normalize(const HeadScores& raw) {
  HeadScores out = raw;
  std::map<std::pair<Section, int>, double> sq;
  for (std::size_t i = 0; i < raw.heads.size(); ++i) {
    if (raw.scores[i] < 0.0) throw std::invalid_argument("normalize: negative raw score");
    sq[{raw.heads[i].section, raw.heads[i].layer}] += raw.scores[i] * raw.scores[i];
  }
  for (std::size_t i = 0; i < raw.heads.size(); ++i) {
    const double norm = std::sqrt(sq[{raw.heads[i].section, raw.heads[i].layer}]);
    out.scores[i] = norm > 0.0 ? raw.scores[i] / norm : 0.0;
  }
  out.normalized = true;
  return out;
}

HeadSubset parse_subset(std::string_view name) {
  if (name == "enc") return HeadSubset::encoder;
  if (name == "dec") return HeadSubset::decoder;
  if (name == "cross") return HeadSubset::cross;
  if (name == "self") return HeadSubset::self;
  throw std::invalid_argument("unknown head subset '" + std::string(name) + "' (expected enc, dec, cross or self)");
}

std::string to_string(HeadSubset s) {
  switch (s) {
    case HeadSubset::encoder: return "enc";
    case HeadSubset::decoder: return "dec";
    case HeadSubset::cross: return "cross";
    case HeadSubset::self: return "self";
  }
  throw std::logic_error("unreachable subset");
}

HeadScores subset(const HeadScores& scores, HeadSubset which) {
  auto keep = [which](Section s) {
    switch (which) {
      case HeadSubset::encoder: return s == Section::encoder_self;
      case HeadSubset::decoder: return s != Section::encoder_self;
      case HeadSubset::cross: return s == Section::decoder_cross;
      case HeadSubset::self: return s == Section::decoder_self;
    }
    return false;
  };
  HeadScores out = scores;
  out.heads.clear();
  out.scores.clear();
  for (std::size_t i = 0; i < scores.heads.size(); ++i) {
    if (keep(scores.heads[i].section)) {
      out.heads.push_back(scores.heads[i]);
      out.scores.push_back(scores.scores[i]);
    }
  }
  return out;
}

double max_norm_deviation(const HeadScores& scores) {
  std::map<std::pair<Section, int>, double> sq;
  for (std::size_t i = 0; i < scores.heads.size(); ++i) {
    sq[{scores.heads[i].section, scores.heads[i].layer}] += scores.scores[i] * scores.scores[i];
  }
  double worst = 0.0;
  for (const auto& [module, s] : sq) {
    if (s > 0.0) worst = std::max(worst, std::abs(std::sqrt(s) - 1.0));
  }
  return worst;
}

std::string scores_csv(const HeadScores& s) {
  std::ostringstream out;
  out << "# pair=" << s.pair << '\n'
      << "# model=" << s.model_id << '\n'
      << "# sample_count=" << s.sample_count << '\n'
      << "# normalized=" << (s.normalized ? 1 : 0) << '\n'
      << "# encoder_layers=" << s.topology.encoder_layers << '\n'
      << "# decoder_layers=" << s.topology.decoder_layers << '\n'
      << "# heads=" << s.topology.heads << '\n'
      << "section,layer,head,score\n";
  char buf[40];
  for (std::size_t i = 0; i < s.heads.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", s.scores[i]);
    out << to_string(s.heads[i].section) << ',' << s.heads[i].layer << ',' << s.heads[i].head << ','
        << buf << '\n';
  }
  return out.str();
}

void write_scores_csv(const HeadScores& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << scores_csv(scores);
}

HeadScores parse_scores_csv(const std::string& text) {
  HeadScores s;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  int line_no = 0;
  auto to_int = [&](const std::string& v) {
    try {
      std::size_t used = 0;
      const long n = std::stol(v, &used);
      if (used == v.size()) return static_cast<int>(n);
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("score file line " + std::to_string(line_no) + ": bad integer '" + v + "'");
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const auto key = body.substr(0, eq);
      const auto value = body.substr(eq + 1);
      if (key == "pair") s.pair = value;
      else if (key == "model") s.model_id = value;
      else if (key == "sample_count") s.sample_count = static_cast<std::size_t>(to_int(value));
      else if (key == "normalized") s.normalized = value == "1";
      else if (key == "encoder_layers") s.topology.encoder_layers = to_int(value);
      else if (key == "decoder_layers") s.topology.decoder_layers = to_int(value);
      else if (key == "heads") s.topology.heads = to_int(value);
      continue;
    }
    if (!header) {
      if (line != "section,layer,head,score") {
        throw std::invalid_argument("score file: expected header 'section,layer,head,score'");
      }
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 4) throw std::invalid_argument("score file line " + std::to_string(line_no) + ": expected 4 fields");
    HeadIndex h{parse_section(f[0]), to_int(f[1]), to_int(f[2])};
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument(f[3]);
    } catch (const std::exception&) {
      throw std::invalid_argument("score file line " + std::to_string(line_no) + ": bad score '" + f[3] + "'");
    }
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("score file line " + std::to_string(line_no) + ": score must be finite and non-negative");
    }
    s.heads.push_back(h);
    s.scores.push_back(v);
  }
  if (!header) throw std::invalid_argument("score file: missing header");
  if (s.topology.heads <= 0) throw std::invalid_argument("score file: missing topology preamble");
  // Every head exactly once; rows come back in canonical order.
  std::vector<int> seen(s.topology.head_count(), 0);
  std::vector<double> ordered(s.topology.head_count(), 0.0);
  for (std::size_t i = 0; i < s.heads.size(); ++i) {
    const auto flat = s.topology.flat_index(s.heads[i]);
    if (seen[flat]++) {
      throw std::invalid_argument("score file: head " + to_string(s.heads[i].section) + "," +
                                  std::to_string(s.heads[i].layer) + "," + std::to_string(s.heads[i].head) +
                                  " listed twice");
    }
    ordered[flat] = s.scores[i];
  }
  if (s.heads.size() != s.topology.head_count()) {
    throw std::invalid_argument("score file: " + std::to_string(s.heads.size()) + " heads listed, topology has " +
                                std::to_string(s.topology.head_count()));
  }
  s.heads = s.topology.canonical_heads();
  s.scores = std::move(ordered);
  return s;
}

HeadScores read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scores_csv(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace xlt
