#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unmt/corpus.hpp"
#include "unmt/embeddings.hpp"
#include "unmt/lm.hpp"
#include "unmt/nmt/model.hpp"
#include "unmt/smt/model.hpp"
#include "unmt/trainer/config.hpp"

namespace unmt::trainer {

enum class Origin { kSmtDenoised, kNmtBacktranslated, kR2L };
const char* origin_name(Origin origin);
Origin parse_origin(const std::string& name);

struct PseudoPair {
  Sentence src;
  Sentence tgt;
  Origin origin = Origin::kSmtDenoised;
};

/// Pseudo-parallel data for one translation direction.
struct PseudoCorpus {
  Direction direction = Direction::kXToY;
  std::vector<PseudoPair> pairs;

  std::size_t size() const { return pairs.size(); }
  void add(Sentence src, Sentence tgt, Origin origin) {
    pairs.push_back({std::move(src), std::move(tgt), origin});
  }
  /// Removes repeated (src, tgt) pairs of the same origin, first one kept.
  void dedup();
  std::size_t count(Origin origin) const;

  std::vector<smt::SentencePair> sentence_pairs() const;
  nmt::ParallelData parallel() const;

  /// "src TAB tgt TAB origin" per line.
  void save_tsv(const std::filesystem::path& path, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) const;
  static PseudoCorpus load_tsv(const std::filesystem::path& path, Direction direction,
                               const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);
};

/// Concatenation; duplicates are only removed within an origin.
PseudoCorpus merge(const PseudoCorpus& a, const PseudoCorpus& b);

/// Monolingual training data plus the harness-only dev set and dictionary.
struct EMCorpora {
  MonolingualCorpus x;
  MonolingualCorpus y;
  std::vector<Tokens> dev_x;
  std::vector<Tokens> dev_y;
  GoldDictionary gold;
};

/// Reads the corpus files named in the config, or generates the synthetic
/// cipher pair when none are given.
EMCorpora prepare_corpora(const EMConfig& config);

/// Everything the loop needs before t = 0.
struct Initialization {
  EmbeddingMatrix emb_x;  ///< mapped into the y space
  EmbeddingMatrix emb_y;
  double align_objective = 0.0;
  WordTranslationTable t_xy;
  WordTranslationTable t_yx;
  std::shared_ptr<const NGramLM> lm_x;
  std::shared_ptr<const NGramLM> lm_y;
};

Initialization initialize(const EMCorpora& corpora, const EMConfig& config);
/// Translation tables from already aligned embeddings.
WordTranslationTable induce_table(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt, const EMConfig& config);
smt::LogLinearWeights smt_weights(const EMConfig& config);

struct ReportRow {
  std::string step;  ///< SMT0, NMT0, SMT1, ...
  Direction direction = Direction::kXToY;
  double bleu = 0.0;
};

struct EMState {
  int t = 0;
  std::uint64_t seed = 1;
  std::optional<smt::SMTModel> smt_xy;
  std::optional<smt::SMTModel> smt_yx;
  std::optional<nmt::NMTModel> nmt_xy;
  std::optional<nmt::NMTModel> nmt_yx;
  std::vector<ReportRow> history;
  /// Phase-B training data of the latest M-step.
  PseudoCorpus data_xy{Direction::kXToY, {}};
  PseudoCorpus data_yx{Direction::kYToX, {}};

  smt::SMTModel& smt(Direction d) { return d == Direction::kXToY ? *smt_xy : *smt_yx; }
  nmt::NMTModel& nmt(Direction d) { return d == Direction::kXToY ? *nmt_xy : *nmt_yx; }
  PseudoCorpus& data(Direction d) { return d == Direction::kXToY ? data_xy : data_yx; }
  /// Latest dev BLEU recorded for a step prefix ("SMT" or "NMT").
  std::optional<double> last_bleu(const std::string& prefix, Direction d) const;
};

/// Monolingual sentences drawn for iteration t.
struct Samples {
  std::vector<Sentence> x;
  std::vector<Sentence> y;
};

Samples draw_samples(const EMCorpora& corpora, std::size_t size, std::uint64_t seed, int t);

/// Dev BLEU of a model on the harness dev set.
double evaluate_smt(const smt::SMTModel& model, const std::vector<Tokens>& src, const std::vector<Tokens>& ref,
                    int threads = 1);
double evaluate_nmt(const nmt::NMTModel& model, const std::vector<Tokens>& src, const std::vector<Tokens>& ref,
                    int max_len);

/// SMT pseudo data of the E-step: NMT outputs for the samples, per direction.
PseudoCorpus nmt_pseudo_data(const nmt::NMTModel& model, Direction d, const std::vector<Sentence>& sources,
                             int max_len);
/// Fresh phrase-based model trained on NMT pseudo data (count-pruned).
smt::SMTModel train_smt(const PseudoCorpus& data, VocabPtr src_vocab, std::shared_ptr<const NGramLM> lm,
                        const EMConfig& config);

/// E-step (t >= 1): replaces both SMT models. Returns the pseudo data used.
std::pair<PseudoCorpus, PseudoCorpus> e_step(EMState& state, const Samples& samples, const Initialization& init,
                                             const EMConfig& config);

/// M-step data of one phase for logging/inspection.
struct MStepLog {
  PseudoCorpus denoised_xy, denoised_yx;
  PseudoCorpus union_xy, union_yx;
};

/// Phase A on SMT (or word-by-word) outputs, then phase B on back-translations
/// from the phase-A models united with the phase-A data.
MStepLog m_step(EMState& state, const Samples& samples, const Initialization& init, const EMConfig& config);

/// Reversed copy of a sentence.
Sentence reversed(const Sentence& s);

/// Right-to-left regularization of both NMT models after the final iteration.
void r2l_regularize(EMState& state, const Samples& samples, const EMConfig& config);

/// The whole loop. With a non-empty `out`, writes step_<t>/ artifacts and
/// report.tsv there (report rewritten after every row).
EMState run_em(const EMCorpora& corpora, const Initialization& init, const EMConfig& config,
               const std::filesystem::path& out = {});
EMState run_em(const EMCorpora& corpora, const EMConfig& config, const std::filesystem::path& out = {});

std::string format_report(const std::vector<ReportRow>& rows);
void save_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
std::vector<ReportRow> load_report(const std::filesystem::path& path);

}  // namespace unmt::trainer
