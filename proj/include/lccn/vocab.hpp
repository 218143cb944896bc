#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lccn/unicode.hpp"

namespace lccn {

// Character vocabulary with three reserved rows that are never displaced:
// UNK (any out-of-vocabulary token), EPS (sentence boundary), BOS (decoder
// start, input side only).
class CharVocab {
 public:
  static constexpr int kUnkId = 0;
  static constexpr int kEpsId = 1;
  static constexpr int kBosId = 2;
  static constexpr int kReserved = 3;

  CharVocab() = default;

  explicit CharVocab(std::vector<char32_t> chars_in_id_order) : chars_(std::move(chars_in_id_order)) {
    for (std::size_t i = 0; i < chars_.size(); ++i)
      if (!ids_.emplace(chars_[i], static_cast<int>(i) + kReserved).second)
        throw std::invalid_argument("duplicate character in vocabulary");
  }

  // Top-`max_chars` characters by frequency; ties broken by lower codepoint.
  static CharVocab build(const std::vector<std::u32string>& texts, std::size_t max_chars) {
    std::map<char32_t, std::size_t> freq;
    for (const auto& t : texts)
      for (char32_t c : t) ++freq[c];
    std::vector<std::pair<char32_t, std::size_t>> entries(freq.begin(), freq.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (entries.size() > max_chars) entries.resize(max_chars);
    std::vector<char32_t> chars;
    chars.reserve(entries.size());
    for (const auto& [c, f] : entries) chars.push_back(c);
    return CharVocab(std::move(chars));
  }

  // Total rows including the reserved ids.
  std::size_t size() const { return chars_.size() + kReserved; }

  bool contains(char32_t c) const { return ids_.count(c) > 0; }

  // OOV characters fall back to UNK.
  int id_of(char32_t c) const {
    auto it = ids_.find(c);
    return it == ids_.end() ? kUnkId : it->second;
  }

  char32_t char_at(int id) const {
    if (id < kReserved || static_cast<std::size_t>(id) >= size())
      throw std::out_of_range("no character at vocabulary id " + std::to_string(id));
    return chars_[static_cast<std::size_t>(id - kReserved)];
  }

  std::vector<int> encode(const std::u32string& s) const {
    std::vector<int> out;
    out.reserve(s.size());
    for (char32_t c : s) out.push_back(id_of(c));
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write vocabulary file: " + path);
    for (char32_t c : chars_) os << utf8_encode(c) << '\n';
  }

  static CharVocab load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open vocabulary file: " + path);
    std::vector<char32_t> chars;
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::u32string u = utf8_decode(line);
      if (u.size() != 1)
        throw std::runtime_error("vocabulary line is not a single character: " + line);
      chars.push_back(u[0]);
    }
    return CharVocab(std::move(chars));
  }

 private:
  std::vector<char32_t> chars_;  // id = index + kReserved
  std::map<char32_t, int> ids_;
};

}  // namespace lccn
