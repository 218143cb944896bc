#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lccn/rng.hpp"
#include "lccn/unicode.hpp"
#include "lccn/vocab.hpp"

namespace lccn {

struct CorpusPair {
  std::u32string source;
  std::u32string summary;

  friend bool operator==(const CorpusPair& a, const CorpusPair& b) {
    return a.source == b.source && a.summary == b.summary;
  }
};

// TSV corpus: UTF-8, one `source\tsummary` pair per line. CRLF tolerated.
inline std::vector<CorpusPair> load_tsv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<CorpusPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing tab separator");
    CorpusPair p;
    p.source = utf8_decode(std::string_view(line).substr(0, tab));
    p.summary = utf8_decode(std::string_view(line).substr(tab + 1));
    if (p.source.empty() || p.summary.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty source or summary");
    out.push_back(std::move(p));
  }
  return out;
}

inline void save_tsv(const std::string& path, const std::vector<CorpusPair>& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& p : corpus)
    os << utf8_encode(p.source) << '\t' << utf8_encode(p.summary) << '\n';
}

inline CharVocab build_char_vocab(const std::vector<CorpusPair>& corpus, std::size_t max_chars) {
  std::vector<std::u32string> texts;
  texts.reserve(corpus.size() * 2);
  for (const auto& p : corpus) {
    texts.push_back(p.source);
    texts.push_back(p.summary);
  }
  return CharVocab::build(texts, max_chars);
}

// Keyword sidecar: `pair_index\tkeyword` lines, one keyword per line.
inline void save_keywords(const std::string& path,
                          const std::vector<std::vector<std::u32string>>& keywords) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write keyword file: " + path);
  for (std::size_t i = 0; i < keywords.size(); ++i)
    for (const auto& w : keywords[i]) os << i << '\t' << utf8_encode(w) << '\n';
}

inline std::vector<std::vector<std::u32string>> load_keywords(const std::string& path,
                                                              std::size_t n_pairs) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open keyword file: " + path);
  std::vector<std::vector<std::u32string>> out(n_pairs);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing tab separator");
    const std::size_t idx = std::stoul(line.substr(0, tab));
    if (idx >= n_pairs)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": pair index out of range");
    out[idx].push_back(utf8_decode(std::string_view(line).substr(tab + 1)));
  }
  return out;
}

// ---- synthetic copy-task corpus -----------------------------------------
//
// Sources are dictionary words over {a..p} separated by filler runs over
// {s,t}. A word is "marked" when the character right before it is a marker
// ('q', or 'r' for the double-glue variant). The summary is a deterministic
// function of the source:
//
//   for each marked word, in source order:
//     emit the word,
//     emit the character following the word iff the following run has
//       length >= 2 (that first run character is the one copied),
//     emit glue 'v', and a second glue 'x' iff the marker was 'r'.
//
// Marking and run lengths are drawn so that summary tokens hit a target
// copied-word / copied-char / generated mix; since every choice is written
// into the source, the mapping stays exactly reconstructable.

struct SynthConfig {
  std::size_t pairs = 2000;
  std::uint64_t seed = 1;
  std::size_t dict_words = 40;
  double word_len3_prob = 0.21;  // remaining words have length 2
  int min_words = 3;             // words per source, marked + unmarked
  int max_words = 7;
  int min_marked = 2;
  int max_marked = 4;
  double mix_copied_word = 0.37;
  double mix_copied_char = 0.22;
  double mix_generated = 0.41;
  std::size_t max_source_chars = 140;
};

struct SynthCorpus {
  std::vector<CorpusPair> pairs;
  std::vector<std::vector<std::u32string>> keywords;  // gold, per pair
  std::vector<std::u32string> dictionary;
  std::vector<std::u32string> dict_a, dict_b;  // two segmenter "domains"
  std::size_t copied_word_tokens = 0;
  std::size_t copied_char_tokens = 0;
  std::size_t generated_tokens = 0;

  std::size_t total_tokens() const {
    return copied_word_tokens + copied_char_tokens + generated_tokens;
  }
};

namespace synth_detail {

constexpr char32_t kWordLo = U'a';
constexpr char32_t kWordHi = U'p';
constexpr char32_t kFiller[2] = {U's', U't'};
constexpr char32_t kMark1 = U'q';  // marked word, single glue
constexpr char32_t kMark2 = U'r';  // marked word, double glue
constexpr char32_t kGlue = U'v';
constexpr char32_t kGlue2 = U'x';

inline bool is_word_char(char32_t c) { return c >= kWordLo && c <= kWordHi; }
inline bool is_marker(char32_t c) { return c == kMark1 || c == kMark2; }

// Substring-free word set: no word contains another. Keeps potential-word
// extraction aligned with the words actually placed.
inline std::vector<std::u32string> make_dictionary(Rng& rng, const SynthConfig& cfg) {
  std::vector<std::u32string> words;
  std::set<std::u32string> seen;
  int guard = 0;
  while (words.size() < cfg.dict_words) {
    if (++guard > 100000) throw std::runtime_error("dictionary generation did not converge");
    const std::size_t len = rng.bernoulli(cfg.word_len3_prob) ? 3 : 2;
    std::u32string w;
    for (std::size_t i = 0; i < len; ++i)
      w.push_back(static_cast<char32_t>(kWordLo + rng.uniform_int(0, static_cast<int>(kWordHi - kWordLo))));
    if (seen.count(w)) continue;
    bool clash = false;
    for (const auto& other : words) {
      if (other.find(w) != std::u32string::npos || w.find(other) != std::u32string::npos) {
        clash = true;
        break;
      }
    }
    if (clash) continue;
    seen.insert(w);
    words.push_back(std::move(w));
  }
  return words;
}

}  // namespace synth_detail

// The deterministic source -> summary rule the corpus is built from. Needs
// no dictionary: word-character runs are exactly the placed words.
inline std::u32string reconstruct_summary(const std::u32string& source) {
  using namespace synth_detail;
  std::u32string out;
  std::size_t i = 0;
  while (i < source.size()) {
    if (!is_word_char(source[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < source.size() && is_word_char(source[j])) ++j;
    const bool marked = i > 0 && is_marker(source[i - 1]);
    if (marked) {
      out.append(source, i, j - i);
      // run after the word: length >= 2 means its first character is copied
      std::size_t k = j;
      while (k < source.size() && !is_word_char(source[k])) ++k;
      if (k - j >= 2) out.push_back(source[j]);
      out.push_back(kGlue);
      if (source[i - 1] == kMark2) out.push_back(kGlue2);
    }
    i = j;
  }
  return out;
}

inline SynthCorpus generate_synthetic_corpus(const SynthConfig& cfg) {
  using namespace synth_detail;
  if (cfg.min_words < 1 || cfg.max_words < cfg.min_words)
    throw std::invalid_argument("bad word count range");
  if (cfg.min_marked < 1 || cfg.max_marked < cfg.min_marked)
    throw std::invalid_argument("bad marked count range");
  if (cfg.max_words < cfg.max_marked + 1)
    throw std::invalid_argument("max_words must exceed max_marked (unmarked words are needed)");
  const double mix_sum = cfg.mix_copied_word + cfg.mix_copied_char + cfg.mix_generated;
  if (std::abs(mix_sum - 1.0) > 1e-9) throw std::invalid_argument("mix fractions must sum to 1");
  // Per marked word the summary always has the word itself and one glue;
  // the copied-char and second-glue rates follow from the target mix.
  const double p_single = cfg.mix_copied_char / cfg.mix_copied_word;
  const double p_glue2 = cfg.mix_generated / cfg.mix_copied_word - 1.0;
  if (p_single < 0.0 || p_single > 1.0 || p_glue2 < 0.0 || p_glue2 > 1.0)
    throw std::invalid_argument("mix fractions are not representable by the template grammar");

  Rng rng(cfg.seed);
  SynthCorpus corpus;
  corpus.dictionary = make_dictionary(rng, cfg);
  for (const auto& w : corpus.dictionary) {
    const int bucket = rng.uniform_int(0, 4);
    if (bucket <= 1)
      corpus.dict_a.push_back(w);
    else if (bucket <= 3)
      corpus.dict_b.push_back(w);
    else {  // both domains know this word
      corpus.dict_a.push_back(w);
      corpus.dict_b.push_back(w);
    }
  }

  auto filler = [&rng]() { return kFiller[rng.uniform_int(0, 1)]; };

  corpus.pairs.reserve(cfg.pairs);
  corpus.keywords.reserve(cfg.pairs);
  while (corpus.pairs.size() < cfg.pairs) {
    const int n_marked = rng.uniform_int(cfg.min_marked, cfg.max_marked);
    const int n_words = rng.uniform_int(std::max(cfg.min_words, n_marked + 1), cfg.max_words);

    std::vector<std::size_t> word_ids;
    while (word_ids.size() < static_cast<std::size_t>(n_words)) {
      const std::size_t id = rng.index(corpus.dictionary.size());
      if (std::find(word_ids.begin(), word_ids.end(), id) == word_ids.end())
        word_ids.push_back(id);
    }
    const std::size_t n = word_ids.size();
    std::vector<bool> marked(n, false);
    {
      std::vector<std::size_t> slots(n);
      for (std::size_t i = 0; i < n; ++i) slots[i] = i;
      rng.shuffle(slots);
      for (int i = 0; i < n_marked; ++i) marked[slots[static_cast<std::size_t>(i)]] = true;
    }
    std::vector<bool> single(n, false), glue2(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (!marked[i]) continue;
      single[i] = rng.bernoulli(p_single);
      glue2[i] = rng.bernoulli(p_glue2);
    }

    // The gap before word i carries two encodings at once: its length says
    // whether the previous marked word copies its following character
    // (>= 2 iff it does), and its last character is a marker iff word i is
    // marked. Unmarked words are preceded by filler only.
    std::u32string source;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t gap;
      if (i == 0)
        gap = static_cast<std::size_t>(marked[0] ? rng.uniform_int(1, 2) : rng.uniform_int(0, 2));
      else if (marked[i - 1])
        gap = single[i - 1] ? static_cast<std::size_t>(rng.uniform_int(2, 3)) : 1;
      else
        gap = static_cast<std::size_t>(rng.uniform_int(1, 3));
      if (marked[i]) {
        for (std::size_t k = 1; k < gap; ++k) source.push_back(filler());
        source.push_back(glue2[i] ? kMark2 : kMark1);
      } else {
        for (std::size_t k = 0; k < gap; ++k) source.push_back(filler());
      }
      source += corpus.dictionary[word_ids[i]];
    }
    {
      const std::size_t tail = marked[n - 1]
                                   ? (single[n - 1] ? static_cast<std::size_t>(rng.uniform_int(2, 3)) : 1)
                                   : static_cast<std::size_t>(rng.uniform_int(1, 2));
      for (std::size_t k = 0; k < tail; ++k) source.push_back(filler());
    }
    if (source.size() > cfg.max_source_chars) continue;

    std::u32string summary = reconstruct_summary(source);
    std::vector<std::u32string> gold;
    for (std::size_t i = 0; i < n; ++i) {
      if (!marked[i]) continue;
      gold.push_back(corpus.dictionary[word_ids[i]]);
      corpus.copied_word_tokens += 1;
      corpus.generated_tokens += 1 + (glue2[i] ? 1 : 0);
      corpus.copied_char_tokens += single[i] ? 1 : 0;
    }

    corpus.pairs.push_back({std::move(source), std::move(summary)});
    corpus.keywords.push_back(std::move(gold));
  }
  return corpus;
}

}  // namespace lccn
