#include "xlt/subword.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace xlt {

namespace {

const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool ends_with_marker(std::string_view s) {
  return s.size() >= SubwordModel::kEndOfWord.size() &&
         s.substr(s.size() - SubwordModel::kEndOfWord.size()) == SubwordModel::kEndOfWord;
}

// Character symbols of one word; `marked` appends the end-of-word marker.
std::vector<std::string> word_symbols(std::string_view word, bool marked) {
  auto chars = utf8_chars(word);
  if (marked && !chars.empty()) chars.back() += SubwordModel::kEndOfWord;
  return chars;
}

std::vector<std::string> merge_pair(const std::vector<std::string>& symbols, const std::string& left,
                                    const std::string& right) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      out.push_back(left + right);
      ++i;
    } else {
      out.push_back(symbols[i]);
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) len = 4;
    else if (lead >= 0xE0) len = lead < 0xF0 ? 3 : 1;
    else if (lead >= 0xC0) len = 2;
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

SubwordModel::SubwordModel(std::vector<MergeRule> merges, std::vector<std::string> tokens)
    : merges_(std::move(merges)), tokens_(std::move(tokens)) {
  if (tokens_.size() < kSpecials.size() ||
      !std::equal(kSpecials.begin(), kSpecials.end(), tokens_.begin())) {
    throw std::invalid_argument("subword: vocabulary must start with <pad> <bos> <eos> <unk>");
  }
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    merge_rank_.emplace(std::make_pair(merges_[i].left, merges_[i].right), i);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw std::invalid_argument("subword: duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
  for (std::size_t i = kSpecials.size(); i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.size() > 3 && t.starts_with("<2") && t.back() == '>') {
      languages_.push_back(t.substr(2, t.size() - 3));
    } else {
      break;
    }
  }
}

SubwordModel SubwordModel::build(std::vector<MergeRule> merges,
                                 const std::vector<std::string>& alphabet,
                                 std::vector<std::string> languages) {
  std::sort(languages.begin(), languages.end());
  languages.erase(std::unique(languages.begin(), languages.end()), languages.end());
  std::vector<std::string> tokens(kSpecials);
  std::set<std::string> seen(tokens.begin(), tokens.end());
  auto push = [&](std::string t) {
    if (seen.insert(t).second) tokens.push_back(std::move(t));
  };
  for (const auto& lang : languages) {
    if (lang.empty() || lang.find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("subword: invalid language id '" + lang + "'");
    }
    push(tag_token(lang));
  }
  std::set<std::string> chars(alphabet.begin(), alphabet.end());
  for (const auto& c : chars) {
    if (ends_with_marker(c)) continue;
    push(c);
    push(c + std::string(kEndOfWord));
  }
  for (const auto& m : merges) push(m.left + m.right);
  return SubwordModel(std::move(merges), std::move(tokens));
}

std::optional<std::int32_t> SubwordModel::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& SubwordModel::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("subword: id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string SubwordModel::tag_token(std::string_view language) {
  return "<2" + std::string(language) + ">";
}

std::int32_t SubwordModel::language_tag(std::string_view language) const {
  if (std::find(languages_.begin(), languages_.end(), language) == languages_.end()) {
    throw UnknownLanguageError("subword: no language tag for '" + std::string(language) + "'");
  }
  return ids_.at(tag_token(language));
}

bool SubwordModel::is_language_tag(std::int32_t id) const {
  return id >= static_cast<std::int32_t>(kSpecials.size()) &&
         id < static_cast<std::int32_t>(kSpecials.size() + languages_.size());
}

std::vector<std::string> SubwordModel::apply_merges(std::vector<std::string> symbols) const {
  while (symbols.size() > 1) {
    std::size_t best_rank = merges_.size();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == merges_.size()) break;
    symbols = merge_pair(symbols, merges_[best_rank].left, merges_[best_rank].right);
  }
  return symbols;
}

std::vector<std::string> SubwordModel::segment(std::string_view sentence) const {
  std::vector<std::string> out;
  const auto words = split_words(sentence);
  for (std::size_t w = 0; w < words.size(); ++w) {
    auto pieces = apply_merges(word_symbols(words[w], w + 1 < words.size()));
    out.insert(out.end(), std::make_move_iterator(pieces.begin()),
               std::make_move_iterator(pieces.end()));
  }
  return out;
}

std::vector<std::int32_t> SubwordModel::encode(std::string_view sentence,
                                               std::optional<std::string_view> target_tag) const {
  std::vector<std::int32_t> ids;
  if (target_tag) ids.push_back(language_tag(*target_tag));
  for (const auto& piece : segment(sentence)) {
    // Text never maps onto reserved tokens.
    auto id = find(piece);
    const bool reserved = id && (*id < static_cast<std::int32_t>(kSpecials.size()) || is_language_tag(*id));
    ids.push_back(id && !reserved ? *id : kUnk);
  }
  ids.push_back(kEos);
  return ids;
}

std::string SubwordModel::decode(std::span<const std::int32_t> ids) const {
  std::string text;
  for (auto id : ids) {
    if (id == kPad || id == kBos || id == kEos || is_language_tag(id)) continue;
    const std::string& t = token(id);
    if (ends_with_marker(t)) {
      text.append(t, 0, t.size() - kEndOfWord.size());
      text.push_back(' ');
    } else {
      text += t;
    }
  }
  while (!text.empty() && text.back() == ' ') text.pop_back();
  return text;
}

std::string SubwordModel::to_text() const {
  std::ostringstream os;
  os << "xlt-bpe 1 merges=" << merges_.size() << " vocab=" << tokens_.size()
     << " languages=" << languages_.size() << '\n';
  for (const auto& m : merges_) os << m.left << ' ' << m.right << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) os << tokens_[i] << '\t' << i << '\n';
  return os.str();
}

SubwordModel SubwordModel::from_text(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string magic, version, merges_kv, vocab_kv, langs_kv;
  if (!(is >> magic >> version >> merges_kv >> vocab_kv >> langs_kv) || magic != "xlt-bpe" ||
      version != "1") {
    throw std::runtime_error("subword: bad model header");
  }
  auto count = [](const std::string& kv, std::string_view key) {
    if (!kv.starts_with(std::string(key) + "=")) {
      throw std::runtime_error("subword: expected '" + std::string(key) + "=' in header");
    }
    return static_cast<std::size_t>(std::stoull(kv.substr(key.size() + 1)));
  };
  const std::size_t n_merges = count(merges_kv, "merges");
  const std::size_t n_vocab = count(vocab_kv, "vocab");
  const std::size_t n_langs = count(langs_kv, "languages");
  std::string line;
  std::getline(is, line);
  std::vector<MergeRule> merges;
  for (std::size_t i = 0; i < n_merges; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("subword: truncated merge list");
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 == line.size()) {
      throw std::runtime_error("subword: malformed merge rule '" + line + "'");
    }
    merges.push_back({line.substr(0, sp), line.substr(sp + 1)});
  }
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n_vocab; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("subword: truncated vocabulary");
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw std::runtime_error("subword: malformed vocabulary line");
    if (std::stoull(line.substr(tab + 1)) != i) {
      throw std::runtime_error("subword: vocabulary ids must be dense and ordered");
    }
    tokens.push_back(line.substr(0, tab));
  }
  SubwordModel model(std::move(merges), std::move(tokens));
  if (model.languages().size() != n_langs) {
    throw std::runtime_error("subword: language tag count does not match header");
  }
  return model;
}

void SubwordModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("subword: cannot write " + path.string());
  out << to_text();
}

SubwordModel SubwordModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("subword: cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

SubwordModel learn_bpe(const std::vector<std::string>& corpus, std::size_t merge_count,
                       const std::vector<std::string>& languages) {
  if (corpus.empty()) throw std::invalid_argument("learn_bpe: empty corpus");

  std::map<std::vector<std::string>, std::int64_t> word_counts;
  std::set<std::string> alphabet;
  for (const auto& sentence : corpus) {
    const auto words = split_words(sentence);
    for (std::size_t w = 0; w < words.size(); ++w) {
      for (auto& c : utf8_chars(words[w])) alphabet.insert(std::move(c));
      ++word_counts[word_symbols(words[w], w + 1 < words.size())];
    }
  }
  std::vector<std::pair<std::vector<std::string>, std::int64_t>> words(word_counts.begin(),
                                                                       word_counts.end());

  std::set<std::string> reserved(kSpecials.begin(), kSpecials.end());
  for (const auto& lang : languages) reserved.insert(SubwordModel::tag_token(lang));

  std::vector<MergeRule> merges;
  while (merges.size() < merge_count) {
    std::map<std::pair<std::string, std::string>, std::int64_t> pairs;
    for (const auto& [symbols, n] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pairs[{symbols[i], symbols[i + 1]}] += n;
    }
    // std::map iterates in lexicographic order, so the first maximum wins ties.
    auto best = pairs.end();
    for (auto it = pairs.begin(); it != pairs.end(); ++it) {
      if (reserved.count(it->first.first + it->first.second)) continue;
      if (best == pairs.end() || it->second > best->second) best = it;
    }
    if (best == pairs.end()) break;
    const auto [left, right] = best->first;
    merges.push_back({left, right});
    for (auto& [symbols, n] : words) symbols = merge_pair(symbols, left, right);
  }
  return SubwordModel::build(std::move(merges),
                             std::vector<std::string>(alphabet.begin(), alphabet.end()), languages);
}

}  // namespace xlt
