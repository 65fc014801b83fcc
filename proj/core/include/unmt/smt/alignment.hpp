#pragma once

#include <cstdint>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "unmt/common.hpp"

namespace unmt::smt {

/// A sentence pair of a (pseudo-)parallel corpus.
struct SentencePair {
  Sentence src;
  Sentence tgt;
};

/// Word links between positions of a sentence pair, 0-based, kept sorted and
/// unique.
class AlignmentMatrix {
 public:
  AlignmentMatrix() = default;
  AlignmentMatrix(int src_len, int tgt_len) : src_len_(src_len), tgt_len_(tgt_len) {}

  int src_len() const { return src_len_; }
  int tgt_len() const { return tgt_len_; }
  /// Throws if the link is out of bounds; duplicates are ignored.
  void add(int s, int t);
  bool contains(int s, int t) const;
  const std::vector<std::pair<int, int>>& links() const { return links_; }
  bool empty() const { return links_.empty(); }

  friend bool operator==(const AlignmentMatrix&, const AlignmentMatrix&) = default;

 private:
  int src_len_ = 0;
  int tgt_len_ = 0;
  std::vector<std::pair<int, int>> links_;
};

/// Source id used for the empty word of IBM-1.
inline constexpr WordId kNullWord = -1;

/// IBM-1 lexicon t(f | e). Every conditioning word e (including kNullWord)
/// carries a distribution over the f it co-occurred with.
class Lexicon {
 public:
  double prob(WordId e, WordId f) const;
  void set(WordId e, WordId f, double p) { table_[key(e, f)] = p; }
  std::size_t size() const { return table_.size(); }

  /// Sum over f of t(f | e).
  double total(WordId e) const;
  /// (e, f, t) triples sorted by (e, f).
  std::vector<std::tuple<WordId, WordId, double>> entries() const;

  static std::uint64_t key(WordId e, WordId f) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(e)) << 32) |
           static_cast<std::uint32_t>(f);
  }

 private:
  std::unordered_map<std::uint64_t, double> table_;
};

/// EM for IBM Model 1 generating `tgt` from `src` plus the empty word,
/// starting from uniform t(f|e).
Lexicon train_ibm1(const std::vector<SentencePair>& pairs, int iterations);

/// Per target word, the source position with the highest t(f|e); the empty
/// word wins ties and leaves the target unaligned.
AlignmentMatrix viterbi_ibm1(const Lexicon& lex, const Sentence& src, const Sentence& tgt);

/// Intersection of the two directions grown with neighbouring union links
/// (grow-diag).
AlignmentMatrix symmetrize(const AlignmentMatrix& src_to_tgt, const AlignmentMatrix& tgt_to_src);

struct WordAlignment {
  /// t(tgt word | src word).
  Lexicon forward;
  /// t(src word | tgt word).
  Lexicon inverse;
  std::vector<AlignmentMatrix> alignments;
};

/// Trains IBM-1 in both directions and symmetrizes the Viterbi alignments.
WordAlignment ibm1_align(const std::vector<SentencePair>& pairs, int iterations);

}  // namespace unmt::smt
