#include "xlt/training/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace xlt {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::many_to_one: return "many-to-one";
    case Regime::one_to_many: return "one-to-many";
    case Regime::many_to_many: return "many-to-many";
    case Regime::bilingual: return "bilingual";
  }
  throw std::logic_error("unreachable regime");
}

Regime parse_regime(std::string_view s) {
  if (s == "many-to-one") return Regime::many_to_one;
  if (s == "one-to-many") return Regime::one_to_many;
  if (s == "many-to-many") return Regime::many_to_many;
  if (s == "bilingual") return Regime::bilingual;
  throw std::invalid_argument("unknown regime '" + std::string(s) + "'");
}

bool regime_uses_tags(Regime r) { return r == Regime::one_to_many || r == Regime::many_to_many; }

LanguagePair LanguagePair::parse(std::string_view label) {
  const auto dash = label.find('-');
  if (dash == std::string_view::npos || dash == 0 || dash + 1 == label.size() ||
      label.find('-', dash + 1) != std::string_view::npos) {
    throw std::invalid_argument("language pair must look like 'src-tgt', got '" +
                                std::string(label) + "'");
  }
  return {std::string(label.substr(0, dash)), std::string(label.substr(dash + 1))};
}

Regime infer_regime(const std::vector<SentencePair>& entries) {
  std::set<std::string> sources;
  std::set<std::string> targets;
  for (const auto& e : entries) {
    sources.insert(e.source_lang);
    targets.insert(e.target_lang);
  }
  if (sources.size() <= 1 && targets.size() <= 1) return Regime::bilingual;
  if (targets.size() == 1) return Regime::many_to_one;
  if (sources.size() == 1) return Regime::one_to_many;
  return Regime::many_to_many;
}

ParallelCorpus::ParallelCorpus(std::vector<SentencePair> entries, std::optional<Regime> regime)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.source_lang.empty() || e.target_lang.empty()) {
      throw CorpusError("corpus entry " + std::to_string(i + 1) + ": empty language id");
    }
    if (split_words(e.source).empty() || split_words(e.target).empty()) {
      throw CorpusError("corpus entry " + std::to_string(i + 1) + ": empty sentence");
    }
  }
  const Regime actual = infer_regime(entries_);
  regime_ = regime.value_or(actual);
  const bool ok = [&] {
    switch (regime_) {
      case Regime::bilingual: return actual == Regime::bilingual;
      case Regime::many_to_one: return actual == Regime::many_to_one || actual == Regime::bilingual;
      case Regime::one_to_many: return actual == Regime::one_to_many || actual == Regime::bilingual;
      case Regime::many_to_many: return true;
    }
    return false;
  }();
  if (!ok) {
    throw CorpusError("corpus languages fit regime " + to_string(actual) + ", not " +
                      to_string(regime_));
  }
}

std::vector<LanguagePair> ParallelCorpus::pairs() const {
  std::set<LanguagePair> seen;
  for (const auto& e : entries_) seen.insert({e.source_lang, e.target_lang});
  return {seen.begin(), seen.end()};
}

ParallelCorpus ParallelCorpus::slice(const LanguagePair& pair) const {
  std::vector<SentencePair> out;
  for (const auto& e : entries_) {
    if (e.source_lang == pair.source && e.target_lang == pair.target) out.push_back(e);
  }
  return ParallelCorpus(std::move(out), Regime::bilingual);
}

std::vector<std::string> ParallelCorpus::target_languages() const {
  std::set<std::string> langs;
  for (const auto& e : entries_) langs.insert(e.target_lang);
  return {langs.begin(), langs.end()};
}

ParallelCorpus ParallelCorpus::read_tsv(const std::filesystem::path& path,
                                        std::optional<Regime> regime) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read corpus " + path.string());
  std::vector<SentencePair> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                        std::to_string(fields.size()));
    }
    entries.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  try {
    return ParallelCorpus(std::move(entries), regime);
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

void ParallelCorpus::write_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write corpus " + path.string());
  for (const auto& e : entries_) {
    out << e.source_lang << '\t' << e.target_lang << '\t' << e.source << '\t' << e.target << '\n';
  }
}

std::vector<EncodedPair> encode_corpus(const ParallelCorpus& corpus, const SubwordModel& subword,
                                       bool use_tags) {
  if (regime_uses_tags(corpus.regime()) && !use_tags) {
    throw CorpusError("regime " + to_string(corpus.regime()) + " requires target-language tags");
  }
  const auto pairs = corpus.pairs();
  std::map<LanguagePair, std::int32_t> pair_index;
  for (std::size_t i = 0; i < pairs.size(); ++i) pair_index[pairs[i]] = static_cast<std::int32_t>(i);

  std::vector<EncodedPair> out;
  out.reserve(corpus.size());
  for (const auto& e : corpus.entries()) {
    EncodedPair p;
    p.source = use_tags ? subword.encode(e.source, e.target_lang) : subword.encode(e.source);
    p.target = subword.encode(e.target);
    p.pair = pair_index.at({e.source_lang, e.target_lang});
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace xlt
