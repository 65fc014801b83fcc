#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "unmt/lm.hpp"
#include "unmt/smt/phrase_table.hpp"

namespace unmt::smt {

/// Weights of the log-linear model. Penalty features are negative counts, so
/// a positive weight penalizes and a negative one rewards.
struct LogLinearWeights {
  double p_fwd = 0.2;
  double p_inv = 0.2;
  double lex_fwd = 0.1;
  double lex_inv = 0.1;
  double lm = 0.5;
  double distortion = 0.3;
  double word = -0.2;
  double phrase = 0.1;
  /// Per passed-through source word.
  double oov = 1.0;

  LogLinearWeights scaled(double alpha) const;

  /// "name value" per line; every feature must be present once.
  static LogLinearWeights load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Feature names in file order, and mutable access by index (for tuning).
  static const std::vector<std::string>& names();
  double& at(std::size_t i);
  double at(std::size_t i) const;
};

struct DecoderConfig {
  /// Largest allowed jump between consecutive phrases; negative = unlimited.
  int distortion_limit = 3;
  /// Translation options kept per source span.
  std::size_t beam_width = 16;
  /// Hypotheses kept per stack (histogram pruning).
  std::size_t stack_size = 64;
  std::size_t max_source_len = 64;
};

struct SMTModel {
  std::shared_ptr<const PhraseTable> table;
  std::shared_ptr<const NGramLM> lm;
  LogLinearWeights weights;
  DecoderConfig decoder;

  const Vocabulary& src_vocab() const { return table->src_vocab(); }
  const Vocabulary& tgt_vocab() const { return table->tgt_vocab(); }
};

/// SMT0: word-level table from the embedding-induced translation table; the
/// lexical-weight features do not exist for it and get weight 0.
SMTModel init_smt(const WordTranslationTable& table, std::shared_ptr<const NGramLM> lm,
                  LogLinearWeights weights = {}, DecoderConfig decoder = {});

SMTModel make_smt(std::shared_ptr<const PhraseTable> table, std::shared_ptr<const NGramLM> lm,
                  LogLinearWeights weights = {}, DecoderConfig decoder = {});

/// One phrase application. A pass-through step copies a single source word
/// that has no one-word translation; its target is the unknown id.
struct DerivationStep {
  int src_begin = 0;
  int src_end = 0;
  Sentence target;
  bool passthrough = false;

  friend bool operator==(const DerivationStep&, const DerivationStep&) = default;
};

using Derivation = std::vector<DerivationStep>;

/// Weighted feature sum of a complete derivation: phrase features, LM over the
/// whole target (with end marker), distortion -sum |begin_i - end_{i-1}|, word
/// penalty -|target|, phrase penalty -#phrases, OOV penalty -#pass-throughs.
/// Throws "unknown phrase" for a pair missing from the table.
double smt_score(const SMTModel& model, const Sentence& src, const Derivation& derivation);

struct Translation {
  /// Target ids; passed-through words appear as the unknown id.
  Sentence target;
  /// Output tokens with passed-through words copied from the source.
  Tokens surface;
  Derivation derivation;
  double score = 0.0;
};

/// Stack decoding over coverage sets. Ties between equal scores go to the
/// lexicographically smaller target token sequence. If pruning leaves no
/// complete hypothesis the sentence is re-decoded monotonically.
Translation decode(const SMTModel& model, const Sentence& src);
std::vector<Translation> decode_nbest(const SMTModel& model, const Sentence& src, std::size_t n);

/// Decodes many sentences; `threads` > 1 splits the work, results are
/// identical to sequential decoding.
std::vector<Translation> decode_all(const SMTModel& model, const std::vector<Sentence>& sources,
                                    int threads = 1);

}  // namespace unmt::smt
