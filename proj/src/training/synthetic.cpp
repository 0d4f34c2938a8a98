#include "xlt/training/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>

#include "xlt/random.hpp"

namespace xlt {

namespace {

constexpr int kLetters = 16;  // 'a' .. 'p'

std::array<int, kLetters> substitution(int index, std::uint64_t seed) {
  std::array<int, kLetters> perm{};
  for (int i = 0; i < kLetters; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, "substitution"));
  rng.shuffle(perm);
  // Each further member differs from its predecessor by two transpositions.
  for (int step = 1; step <= index; ++step) {
    for (int t = 0; t < 2; ++t) {
      const auto a = rng.below(kLetters);
      auto b = rng.below(kLetters - 1);
      if (b >= a) ++b;
      std::swap(perm[a], perm[b]);
    }
  }
  return perm;
}

std::vector<std::string> reorder(std::vector<std::string> words, int rule) {
  switch (rule) {
    case 1:
      for (std::size_t i = 0; i + 1 < words.size(); i += 2) std::swap(words[i], words[i + 1]);
      break;
    case 2:
      if (words.size() > 1) std::rotate(words.rbegin(), words.rbegin() + 1, words.rend());
      break;
    default:
      break;
  }
  return words;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

std::string family_language_name(int index) {
  if (index < 0 || index >= 26) throw std::out_of_range("family member index out of range");
  return std::string("x") + static_cast<char>('a' + index);
}

std::string family_transform(const std::string& base_sentence, int index, std::uint64_t seed) {
  const auto perm = substitution(index, seed);
  std::vector<std::string> words;
  for (auto w : split_words(base_sentence)) {
    std::string out(w);
    for (auto& c : out) {
      if (c < 'a' || c >= 'a' + kLetters) throw std::invalid_argument("family transform: letter outside a..p");
      c = static_cast<char>('a' + perm[c - 'a']);
    }
    words.push_back(std::move(out));
  }
  return join(reorder(std::move(words), index % 3));
}

LanguageFamily make_language_family(const FamilySpec& spec) {
  if (spec.languages < 1 || spec.languages > 26) throw std::invalid_argument("family: 1..26 languages");
  if (spec.low_resource_index < 0 || spec.low_resource_index >= spec.languages) {
    throw std::invalid_argument("family: low-resource index out of range");
  }
  if (spec.min_words < 1 || spec.max_words < spec.min_words) throw std::invalid_argument("family: bad sentence lengths");
  if (spec.train_sentences < 1 || spec.test_sentences < 0 || spec.lexicon_size < 2) {
    throw std::invalid_argument("family: bad corpus sizes");
  }
  if (spec.regime == Regime::bilingual) throw std::invalid_argument("family: regime must be multilingual");

  Rng rng(derive_seed(spec.seed, "lexicon"));
  std::set<std::string> seen;
  std::vector<std::string> lexicon;
  while (static_cast<int>(lexicon.size()) < spec.lexicon_size) {
    const auto len = 2 + rng.below(4);
    std::string w;
    for (std::uint64_t i = 0; i < len; ++i) w += static_cast<char>('a' + rng.below(kLetters));
    if (seen.insert(w).second) lexicon.push_back(w);
  }
  // Mildly Zipfian word frequencies.
  std::vector<double> cdf;
  double total = 0.0;
  for (int r = 0; r < spec.lexicon_size; ++r) {
    total += 1.0 / std::pow(r + 1.0, 0.8);
    cdf.push_back(total);
  }

  Rng sent_rng(derive_seed(spec.seed, "sentences"));
  std::set<std::string> used;
  auto sentence = [&] {
    for (;;) {
      const auto n = spec.min_words + static_cast<int>(sent_rng.below(static_cast<std::uint64_t>(spec.max_words - spec.min_words + 1)));
      std::vector<std::string> words;
      for (int i = 0; i < n; ++i) {
        const double u = sent_rng.uniform() * total;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        words.push_back(lexicon[std::min<std::size_t>(it - cdf.begin(), lexicon.size() - 1)]);
      }
      auto s = join(words);
      if (used.insert(s).second) return s;
    }
  };
  std::vector<std::string> base_train;
  for (int i = 0; i < spec.train_sentences; ++i) base_train.push_back(sentence());
  std::vector<std::string> base_test;
  for (int i = 0; i < spec.test_sentences; ++i) base_test.push_back(sentence());

  LanguageFamily fam;
  for (int i = 0; i < spec.languages; ++i) fam.languages.push_back(family_language_name(i));
  fam.low_resource = fam.languages[static_cast<std::size_t>(spec.low_resource_index)];

  std::vector<std::size_t> lrl_keep(base_train.size());
  for (std::size_t i = 0; i < lrl_keep.size(); ++i) lrl_keep[i] = i;
  Rng keep_rng(derive_seed(spec.seed, "low-resource"));
  keep_rng.shuffle(lrl_keep);
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.low_resource_fraction * static_cast<double>(base_train.size()))));
  lrl_keep.resize(std::min(keep, lrl_keep.size()));
  std::sort(lrl_keep.begin(), lrl_keep.end());

  auto emit = [&](std::vector<SentencePair>& out, const std::string& lang, const std::string& text,
                  const std::string& english) {
    if (spec.regime == Regime::many_to_one || spec.regime == Regime::many_to_many) {
      out.push_back({lang, fam.pivot, text, english});
    }
    if (spec.regime == Regime::one_to_many || spec.regime == Regime::many_to_many) {
      out.push_back({fam.pivot, lang, english, text});
    }
  };

  std::vector<SentencePair> train;
  std::vector<SentencePair> test;
  for (int li = 0; li < spec.languages; ++li) {
    const auto& lang = fam.languages[static_cast<std::size_t>(li)];
    if (li == spec.low_resource_index) {
      for (auto idx : lrl_keep) emit(train, lang, family_transform(base_train[idx], li, spec.seed), base_train[idx]);
    } else {
      for (const auto& s : base_train) emit(train, lang, family_transform(s, li, spec.seed), s);
    }
    for (const auto& s : base_test) emit(test, lang, family_transform(s, li, spec.seed), s);
  }
  fam.train = ParallelCorpus(std::move(train), spec.regime);
  fam.test = ParallelCorpus(std::move(test), spec.regime);
  return fam;
}

}  // namespace xlt
