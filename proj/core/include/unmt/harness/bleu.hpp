#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "unmt/common.hpp"
#include "unmt/corpus.hpp"
#include "unmt/embeddings.hpp"

namespace unmt::harness {

struct BleuReport {
  double bleu = 0.0;  ///< 0..100
  std::array<double, 4> precisions{};
  std::array<std::int64_t, 4> matches{};
  std::array<std::int64_t, 4> totals{};
  double brevity_penalty = 1.0;
  std::int64_t hyp_length = 0;
  std::int64_t ref_length = 0;
};

/// Corpus BLEU-4 with multi-bleu conventions: clipped counts, no smoothing (a
/// zero precision at any order gives 0), exponential brevity penalty, exact
/// token comparison.
BleuReport bleu(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references);

struct LengthBucket {
  /// Reference lengths in (lo, hi]; hi < 0 means unbounded.
  int lo = 0;
  int hi = -1;
};

/// Default grouping: (0,15], (15,30], (30,inf).
std::vector<LengthBucket> default_buckets();

/// Corpus BLEU per bucket of reference length; empty buckets yield nullopt.
std::vector<std::optional<BleuReport>> bleu_by_length(const std::vector<Tokens>& hypotheses,
                                                      const std::vector<Tokens>& references,
                                                      const std::vector<LengthBucket>& buckets);

/// Precision@1 of the table over the n most frequent non-special source words
/// (by vocabulary id) that the gold dictionary covers.
double word_translation_accuracy(const WordTranslationTable& table, const GoldDictionary& gold, std::size_t n);

}  // namespace unmt::harness
