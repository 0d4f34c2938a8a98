#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xlt/model.hpp"
#include "xlt/subword.hpp"

namespace xlt {

enum class Regime { many_to_one, one_to_many, many_to_many, bilingual };

std::string to_string(Regime r);
Regime parse_regime(std::string_view s);
/// One-to-many and many-to-many corpora carry a target-language tag.
bool regime_uses_tags(Regime r);

struct LanguagePair {
  std::string source;
  std::string target;

  std::string label() const { return source + "-" + target; }
  static LanguagePair parse(std::string_view label);
  auto operator<=>(const LanguagePair&) const = default;
};

struct SentencePair {
  std::string source_lang;
  std::string target_lang;
  std::string source;
  std::string target;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Language-tagged sentence pairs. The regime is checked against the
/// language ids on construction.
class ParallelCorpus {
 public:
  ParallelCorpus() = default;
  explicit ParallelCorpus(std::vector<SentencePair> entries,
                          std::optional<Regime> regime = std::nullopt);

  Regime regime() const { return regime_; }
  const std::vector<SentencePair>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Distinct language pairs, sorted.
  std::vector<LanguagePair> pairs() const;
  /// Entries of one pair as a bilingual corpus (may be empty).
  ParallelCorpus slice(const LanguagePair& pair) const;
  std::vector<std::string> target_languages() const;

  /// `src_lang<TAB>tgt_lang<TAB>source<TAB>target` per line.
  static ParallelCorpus read_tsv(const std::filesystem::path& path,
                                 std::optional<Regime> regime = std::nullopt);
  void write_tsv(const std::filesystem::path& path) const;

 private:
  std::vector<SentencePair> entries_;
  Regime regime_ = Regime::bilingual;
};

Regime infer_regime(const std::vector<SentencePair>& entries);

/// Tokenizes every entry; `pair` indexes into corpus.pairs(). Tags are
/// required for one-to-many/many-to-many; elsewhere they are kept only when
/// fine-tuning a model that was trained with them.
std::vector<EncodedPair> encode_corpus(const ParallelCorpus& corpus, const SubwordModel& subword,
                                       bool use_tags);

}  // namespace xlt
