#pragma once

#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "unmt/corpus.hpp"
#include "unmt/embeddings.hpp"
#include "unmt/lm.hpp"
#include "unmt/smt/alignment.hpp"

namespace unmt::smt {

/// Half-open source and target spans of one consistent phrase pair.
struct PhraseSpan {
  int src_begin = 0;
  int src_end = 0;
  int tgt_begin = 0;
  int tgt_end = 0;

  friend auto operator<=>(const PhraseSpan&, const PhraseSpan&) = default;
};

/// All phrase pairs consistent with the alignment with both sides at most
/// max_len words and at least one link inside. Sorted.
std::vector<PhraseSpan> extract_phrases(const AlignmentMatrix& alignment, int max_len);

struct PhraseEntry {
  Sentence target;
  double p_fwd = 1.0;  ///< phi(target | source)
  double p_inv = 1.0;  ///< phi(source | target)
  double lex_fwd = 1.0;
  double lex_inv = 1.0;
  std::int64_t count = 0;
};

/// Source phrase -> scored target options, sorted by descending p_fwd with
/// ties broken by target token order.
class PhraseTable {
 public:
  PhraseTable() = default;
  PhraseTable(VocabPtr src_vocab, VocabPtr tgt_vocab, bool has_lexical, int max_phrase_len);

  const Vocabulary& src_vocab() const { return *src_vocab_; }
  const Vocabulary& tgt_vocab() const { return *tgt_vocab_; }
  VocabPtr src_vocab_ptr() const { return src_vocab_; }
  VocabPtr tgt_vocab_ptr() const { return tgt_vocab_; }
  /// False for word-level tables seeded from embeddings.
  bool has_lexical() const { return has_lexical_; }
  int max_phrase_len() const { return max_phrase_len_; }

  /// Options for a source phrase, or nullptr.
  const std::vector<PhraseEntry>* find(std::span<const WordId> source) const;
  const PhraseEntry* find(std::span<const WordId> source, std::span<const WordId> target) const;

  /// Appends an option; call sort() once all options are in.
  void add(const Sentence& source, PhraseEntry entry);
  void sort();
  /// Keeps the best n options per source phrase.
  void truncate(std::size_t n);

  std::size_t size() const;
  std::size_t source_count() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  /// Source phrases in token-string order.
  std::vector<Sentence> sources() const;

  /// "src ||| tgt ||| p_fwd p_inv lex_fwd lex_inv ||| count" per line, sources
  /// in token-string order.
  void save(const std::filesystem::path& path) const;
  static PhraseTable load(const std::filesystem::path& path, VocabPtr src_vocab, VocabPtr tgt_vocab);

 private:
  struct Source {
    Sentence words;
    std::vector<PhraseEntry> options;
  };

  VocabPtr src_vocab_;
  VocabPtr tgt_vocab_;
  bool has_lexical_ = true;
  int max_phrase_len_ = 1;
  std::unordered_map<NGramKey, Source, NGramKeyHash> entries_;
};

struct PhraseTableConfig {
  int max_phrase_len = 4;
  /// Pairs seen fewer times are dropped before probabilities are estimated.
  int min_count = 2;
  std::size_t max_targets = 20;
  int ibm1_iterations = 5;
};

/// Relative-frequency phrase table over the consistent pairs of every
/// sentence pair. Lexical weights use the IBM-1 lexicons; of several
/// alignments seen for one pair, the highest weight is kept.
PhraseTable build_phrase_table(const std::vector<SentencePair>& pairs, const WordAlignment& alignment,
                               VocabPtr src_vocab, VocabPtr tgt_vocab, const PhraseTableConfig& config);

/// Alignment + build in one call.
PhraseTable train_phrase_table(const std::vector<SentencePair>& pairs, VocabPtr src_vocab,
                               VocabPtr tgt_vocab, const PhraseTableConfig& config);

/// Word-level table carrying the two embedding-induced features.
PhraseTable phrase_table_from_words(const WordTranslationTable& table);

}  // namespace unmt::smt
