#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlt/training/corpus.hpp"

namespace xlt {

/// Toy language family derived from one random "English" corpus. Each member
/// language applies its own letter substitution to every word plus one local
/// word-reordering rule, so it is an invertible transform of the base text.
/// Members with nearby indices share more of their substitution.
struct FamilySpec {
  int languages = 5;
  int train_sentences = 2000;
  int test_sentences = 100;
  int lexicon_size = 60;
  int min_words = 3;
  int max_words = 7;
  /// Share of the base training sentences kept for the low-resource member.
  double low_resource_fraction = 0.05;
  int low_resource_index = 0;
  Regime regime = Regime::many_to_one;
  std::uint64_t seed = 1;
};

struct LanguageFamily {
  std::string pivot = "en";
  std::vector<std::string> languages;
  std::string low_resource;
  ParallelCorpus train;
  ParallelCorpus test;
};

LanguageFamily make_language_family(const FamilySpec& spec);

/// Name of family member i: "xa", "xb", ...
std::string family_language_name(int index);

/// Sentence-level transform of member `index` (exposed for tests).
std::string family_transform(const std::string& base_sentence, int index, std::uint64_t seed);

}  // namespace xlt
