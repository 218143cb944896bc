#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lccn/unicode.hpp"

namespace lccn {

// 1-based inclusive character span over a source text.
struct Span {
  int start = 1;
  int end = 1;

  int length() const { return end - start + 1; }

  friend bool operator==(const Span& a, const Span& b) {
    return a.start == b.start && a.end == b.end;
  }
  friend auto operator<=>(const Span& a, const Span& b) = default;
};

enum class TokenKind { Char, Word };

// A lattice token: one character or one multi-character word of the source.
struct Token {
  Span span;
  std::u32string chars;
  TokenKind kind = TokenKind::Char;

  friend bool operator==(const Token& a, const Token& b) {
    return a.span == b.span && a.chars == b.chars && a.kind == b.kind;
  }
};

// Category of span B relative to span A. Categories live in [0, 2r+3]:
// distances clamp into [0, 2r], r means identical spans, and the three
// top categories mark containment (either direction) and proper overlap.
inline int relative_position(Span s, Span t, int r) {
  const int a = s.start, b = s.end, c = t.start, d = t.end;
  if (d < a) return std::max(0, r - a + d);
  if (a == c && b == d) return r;
  if (b < c) return std::min(2 * r, r + c - b);
  if ((c <= a && b < d) || (c < a && b <= d)) return 2 * r + 1;  // t contains s
  if ((a <= c && d < b) || (a < c && d <= b)) return 2 * r + 2;  // s contains t
  return 2 * r + 3;                                              // proper overlap
}

inline int relpos_categories(int r) { return 2 * r + 4; }

// Dictionary-driven forward maximum matching. Single characters always
// match, so segmentation is total; the output concatenates back to the
// input exactly.
class Segmenter {
 public:
  explicit Segmenter(std::set<std::u32string> dictionary) : dict_(std::move(dictionary)) {
    for (const auto& w : dict_) max_len_ = std::max(max_len_, w.size());
  }

  static Segmenter from_words(const std::vector<std::string>& words) {
    std::set<std::u32string> d;
    for (const auto& w : words) d.insert(utf8_decode(w));
    return Segmenter(std::move(d));
  }

  // One word per line, UTF-8. Blank lines ignored.
  static Segmenter from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dictionary file: " + path);
    std::set<std::u32string> d;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) d.insert(utf8_decode(line));
    }
    return Segmenter(std::move(d));
  }

  const std::set<std::u32string>& dictionary() const { return dict_; }

  std::vector<Token> segment(const std::u32string& text) const {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
      std::size_t best = 1;
      const std::size_t cap = std::min(max_len_, text.size() - i);
      for (std::size_t len = cap; len >= 2; --len) {
        if (dict_.count(text.substr(i, len))) {
          best = len;
          break;
        }
      }
      Token t;
      t.span = {static_cast<int>(i + 1), static_cast<int>(i + best)};
      t.chars = text.substr(i, best);
      t.kind = best == 1 ? TokenKind::Char : TokenKind::Word;
      out.push_back(std::move(t));
      i += best;
    }
    return out;
  }

 private:
  std::set<std::u32string> dict_;
  std::size_t max_len_ = 1;
};

inline std::vector<Token> segment(const std::u32string& text, const Segmenter& seg) {
  return seg.segment(text);
}

// Potential words: multi-character tokens appearing in any segmenter's
// segmentation of the text. Distinct by span, sorted by (start, end).
inline std::vector<Token> extract_potential_words(const std::u32string& text,
                                                  const std::vector<Segmenter>& segmenters) {
  if (segmenters.empty()) throw std::invalid_argument("at least one segmenter required");
  std::map<Span, Token> by_span;
  for (const auto& seg : segmenters) {
    for (auto& tok : seg.segment(text)) {
      if (tok.kind == TokenKind::Word) by_span.emplace(tok.span, std::move(tok));
    }
  }
  std::vector<Token> out;
  out.reserve(by_span.size());
  for (auto& [span, tok] : by_span) out.push_back(std::move(tok));
  return out;
}

// Restriction of copy attention to a kept subset of lattice tokens.
// Every Char token is always kept; only Word tokens can be masked out.
enum class MaskMode { Hard, ZeroLogit };

struct KeywordMask {
  std::vector<bool> keep;  // aligned with lattice token order
  MaskMode mode = MaskMode::Hard;
};

// The multi-granularity token lattice of one source text: every character
// as a Char token plus all potential words, with absolute positions and
// the pairwise relative-position category matrix.
class SourceLattice {
 public:
  SourceLattice() = default;

  const std::u32string& chars() const { return chars_; }
  const std::vector<Token>& tokens() const { return tokens_; }
  const Token& token(std::size_t m) const { return tokens_[m]; }
  std::size_t size() const { return tokens_.size(); }
  int r() const { return r_; }

  int abs_pos(std::size_t m) const { return tokens_[m].span.start; }

  int relpos(std::size_t i, std::size_t j) const { return relpos_[i * tokens_.size() + j]; }
  const std::vector<int>& relpos_flat() const { return relpos_; }

  // Lattice indices of Char tokens whose character equals c (type-level).
  const std::vector<int>& char_occurrences(char32_t c) const {
    auto it = char_occ_.find(c);
    return it == char_occ_.end() ? empty_ : it->second;
  }

  // Lattice indices of Word tokens with this exact string.
  const std::vector<int>& word_occurrences(const std::u32string& w) const {
    auto it = word_occ_.find(w);
    return it == word_occ_.end() ? empty_ : it->second;
  }

  bool has_word(const std::u32string& w) const { return word_occ_.count(w) > 0; }
  bool has_char(char32_t c) const { return char_occ_.count(c) > 0; }

  const std::map<std::u32string, std::vector<int>>& words_by_string() const { return word_occ_; }

  std::size_t max_word_len() const { return max_word_len_; }

  friend SourceLattice build_lattice(const std::u32string& text, const std::vector<Token>& words,
                                     int r);

 private:
  std::u32string chars_;
  std::vector<Token> tokens_;
  std::vector<int> relpos_;
  int r_ = 8;
  std::map<char32_t, std::vector<int>> char_occ_;
  std::map<std::u32string, std::vector<int>> word_occ_;
  std::size_t max_word_len_ = 1;
  inline static const std::vector<int> empty_{};
};

inline SourceLattice build_lattice(const std::u32string& text, const std::vector<Token>& words,
                                   int r) {
  if (text.empty()) throw std::invalid_argument("cannot build a lattice over empty text");
  if (r < 1) throw std::invalid_argument("relative-position constant r must be positive");

  SourceLattice lat;
  lat.chars_ = text;
  lat.r_ = r;

  const int n = static_cast<int>(text.size());
  std::set<Span> seen;
  for (const auto& w : words) {
    if (w.span.start < 1 || w.span.end > n || w.span.length() < 2)
      throw std::invalid_argument("word span out of range or not multi-character");
    if (text.substr(static_cast<std::size_t>(w.span.start - 1),
                    static_cast<std::size_t>(w.span.length())) != w.chars)
      throw std::invalid_argument("word chars do not match the source substring at its span");
    if (!seen.insert(w.span).second)
      throw std::invalid_argument("duplicate word span in lattice input");
  }

  lat.tokens_.reserve(text.size() + words.size());
  for (int i = 0; i < n; ++i) {
    Token t;
    t.span = {i + 1, i + 1};
    t.chars = text.substr(static_cast<std::size_t>(i), 1);
    t.kind = TokenKind::Char;
    lat.tokens_.push_back(std::move(t));
  }
  for (const auto& w : words) {
    Token t = w;
    t.kind = TokenKind::Word;
    lat.tokens_.push_back(std::move(t));
  }
  std::sort(lat.tokens_.begin(), lat.tokens_.end(),
            [](const Token& a, const Token& b) { return a.span < b.span; });

  const std::size_t m = lat.tokens_.size();
  lat.relpos_.resize(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      lat.relpos_[i * m + j] = relative_position(lat.tokens_[i].span, lat.tokens_[j].span, r);

  for (std::size_t i = 0; i < m; ++i) {
    const Token& t = lat.tokens_[i];
    if (t.kind == TokenKind::Char) {
      lat.char_occ_[t.chars[0]].push_back(static_cast<int>(i));
    } else {
      lat.word_occ_[t.chars].push_back(static_cast<int>(i));
      lat.max_word_len_ = std::max(lat.max_word_len_, t.chars.size());
    }
  }
  return lat;
}

inline SourceLattice build_lattice(const std::u32string& text,
                                   const std::vector<Segmenter>& segmenters, int r) {
  return build_lattice(text, extract_potential_words(text, segmenters), r);
}

// One candidate token ending at a given position of a target string: either
// the single character itself or a source word matching the suffix. Word
// strings are reported once each, with every lattice occurrence index.
struct SuffixCandidate {
  std::u32string chars;
  bool is_word = false;
  std::vector<int> token_indices;  // lattice occurrences of this string

  std::size_t length() const { return chars.size(); }
};

inline std::vector<SuffixCandidate> match_suffix_tokens(const SourceLattice& lattice,
                                                        const std::u32string& y, std::size_t j) {
  if (j < 1 || j > y.size()) throw std::out_of_range("suffix position out of range");
  std::vector<SuffixCandidate> out;
  SuffixCandidate ch;
  ch.chars = y.substr(j - 1, 1);
  ch.is_word = false;
  ch.token_indices = lattice.char_occurrences(y[j - 1]);
  out.push_back(std::move(ch));

  const std::size_t cap = std::min(lattice.max_word_len(), j);
  for (std::size_t len = 2; len <= cap; ++len) {
    std::u32string suffix = y.substr(j - len, len);
    const auto& occ = lattice.word_occurrences(suffix);
    if (!occ.empty()) {
      SuffixCandidate w;
      w.chars = std::move(suffix);
      w.is_word = true;
      w.token_indices = occ;
      out.push_back(std::move(w));
    }
  }
  return out;
}

// Debug dump: one token per line as `start\tend\tkind\tstring`.
inline std::string dump_lattice(const SourceLattice& lattice) {
  std::ostringstream os;
  for (const auto& t : lattice.tokens()) {
    os << t.span.start << '\t' << t.span.end << '\t'
       << (t.kind == TokenKind::Char ? "char" : "word") << '\t' << utf8_encode(t.chars) << '\n';
  }
  return os.str();
}

}  // namespace lccn
