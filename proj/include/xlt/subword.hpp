#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace xlt {

struct MergeRule {
  std::string left;
  std::string right;

  auto operator<=>(const MergeRule&) const = default;
};

class UnknownLanguageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Byte-pair-encoding vocabulary shared by all languages.
///
/// Ids are dense: <pad>, <bos>, <eos>, <unk> take 0..3, then one `<2xx>` tag
/// per target language, then single characters, then merged symbols. A
/// symbol carrying the `</w>` suffix is followed by a space in the text, so
/// the last word of a sentence has no marker.
class SubwordModel {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kBos = 1;
  static constexpr std::int32_t kEos = 2;
  static constexpr std::int32_t kUnk = 3;
  static constexpr std::string_view kEndOfWord = "</w>";

  SubwordModel() = default;
  /// `tokens` is the full id-ordered vocabulary.
  SubwordModel(std::vector<MergeRule> merges, std::vector<std::string> tokens);

  /// Vocabulary built from scratch: specials, tags, alphabet, merge results.
  static SubwordModel build(std::vector<MergeRule> merges, const std::vector<std::string>& alphabet,
                            std::vector<std::string> languages);

  const std::vector<MergeRule>& merges() const { return merges_; }
  std::size_t vocab_size() const { return tokens_.size(); }
  const std::vector<std::string>& languages() const { return languages_; }

  std::optional<std::int32_t> find(std::string_view token) const;
  const std::string& token(std::int32_t id) const;

  std::int32_t language_tag(std::string_view language) const;
  bool is_language_tag(std::int32_t id) const;
  static std::string tag_token(std::string_view language);

  /// Subword strings for a whitespace-normalized sentence.
  std::vector<std::string> segment(std::string_view sentence) const;

  /// Ids of `sentence` followed by <eos>, prefixed by the target tag if given.
  std::vector<std::int32_t> encode(std::string_view sentence,
                                   std::optional<std::string_view> target_tag = std::nullopt) const;

  /// Text for `ids`; special and tag tokens are dropped.
  std::string decode(std::span<const std::int32_t> ids) const;

  std::string to_text() const;
  static SubwordModel from_text(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static SubwordModel load(const std::filesystem::path& path);

 private:
  std::vector<std::string> apply_merges(std::vector<std::string> symbols) const;

  std::vector<MergeRule> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
  std::vector<std::string> languages_;
};

/// Splits UTF-8 text into code points (invalid bytes become single units).
std::vector<std::string> utf8_chars(std::string_view text);

/// Splits on runs of ASCII whitespace.
std::vector<std::string_view> split_words(std::string_view text);

/// Learns up to `merge_count` merges; ties on frequency go to the
/// lexicographically smallest (left, right) pair.
SubwordModel learn_bpe(const std::vector<std::string>& corpus, std::size_t merge_count,
                       const std::vector<std::string>& languages = {});

}  // namespace xlt
