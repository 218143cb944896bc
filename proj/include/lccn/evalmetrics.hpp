#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "lccn/unicode.hpp"

namespace lccn {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace eval_detail {

inline RougeScore pr_to_score(double overlap, double cand_count, double ref_count) {
  RougeScore s;
  if (cand_count > 0.0) s.precision = overlap / cand_count;
  if (ref_count > 0.0) s.recall = overlap / ref_count;
  if (s.precision + s.recall > 0.0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

inline std::map<std::u32string, std::size_t> ngram_counts(const std::u32string& s, std::size_t n) {
  std::map<std::u32string, std::size_t> counts;
  if (s.size() >= n)
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[s.substr(i, n)];
  return counts;
}

}  // namespace eval_detail

// Character-level n-gram overlap with clipped counts.
inline RougeScore rouge_n(const std::u32string& candidate, const std::u32string& reference,
                          std::size_t n) {
  const auto cand = eval_detail::ngram_counts(candidate, n);
  const auto ref = eval_detail::ngram_counts(reference, n);
  double overlap = 0.0, cand_total = 0.0, ref_total = 0.0;
  for (const auto& [g, c] : cand) cand_total += static_cast<double>(c);
  for (const auto& [g, c] : ref) ref_total += static_cast<double>(c);
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) overlap += static_cast<double>(std::min(c, it->second));
  }
  return eval_detail::pr_to_score(overlap, cand_total, ref_total);
}

// Longest common subsequence over characters.
inline std::size_t lcs_length(const std::u32string& a, const std::u32string& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline RougeScore rouge_l(const std::u32string& candidate, const std::u32string& reference) {
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  return eval_detail::pr_to_score(lcs, static_cast<double>(candidate.size()),
                                  static_cast<double>(reference.size()));
}

// Fraction of n-gram occurrences whose gram appears at least twice.
// The alternative counts 1 - distinct/total instead.
inline double duplicate_rate(const std::u32string& summary, std::size_t n,
                             bool distinct_ratio = false) {
  if (summary.size() < n) return 0.0;
  const auto counts = eval_detail::ngram_counts(summary, n);
  double total = 0.0, duplicated = 0.0, distinct = 0.0;
  for (const auto& [g, c] : counts) {
    total += static_cast<double>(c);
    distinct += 1.0;
    if (c >= 2) duplicated += static_cast<double>(c);
  }
  if (total == 0.0) return 0.0;
  return distinct_ratio ? (total - distinct) / total : duplicated / total;
}

// Corpus-level means (candidate line i scored against reference line i).
struct CorpusRouge {
  RougeScore rouge1, rouge2, rougel;
  double dup2 = 0.0;
};

inline CorpusRouge evaluate_corpus(const std::vector<std::u32string>& candidates,
                                   const std::vector<std::u32string>& references) {
  if (candidates.size() != references.size())
    throw std::invalid_argument("candidate/reference counts differ");
  if (candidates.empty()) throw std::invalid_argument("empty evaluation set");
  CorpusRouge out;
  auto acc = [](RougeScore& a, const RougeScore& s) {
    a.precision += s.precision;
    a.recall += s.recall;
    a.f1 += s.f1;
  };
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    acc(out.rouge1, rouge_n(candidates[i], references[i], 1));
    acc(out.rouge2, rouge_n(candidates[i], references[i], 2));
    acc(out.rougel, rouge_l(candidates[i], references[i]));
    out.dup2 += duplicate_rate(candidates[i], 2);
  }
  const double n = static_cast<double>(candidates.size());
  for (RougeScore* s : {&out.rouge1, &out.rouge2, &out.rougel}) {
    s->precision /= n;
    s->recall /= n;
    s->f1 /= n;
  }
  out.dup2 /= n;
  return out;
}

}  // namespace lccn
