#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "unmt/corpus.hpp"

namespace unmt {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One row per vocabulary entry. Special-token rows may be zero when the
/// matrix was loaded from a file that does not list them.
struct EmbeddingMatrix {
  VocabPtr vocab;
  RowMatrix values;

  Eigen::Index dim() const { return values.cols(); }
  Eigen::Index rows() const { return values.rows(); }
};

/// Text format: "count dim" header, then "token v1 ... vd" per line.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& emb);

struct SkipGramConfig {
  int dim = 64;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double learning_rate = 0.025;
  /// Frequent-word subsampling threshold; 0 disables.
  double subsample = 1e-3;
  std::uint64_t seed = 1;
  /// More than one thread uses lock-free updates and gives up bitwise
  /// reproducibility.
  int threads = 1;
};

EmbeddingMatrix train_skipgram(const MonolingualCorpus& corpus, const SkipGramConfig& config);

/// Unit length, mean-centered, unit length again. Zero rows are left as-is.
void normalize_embeddings(EmbeddingMatrix& emb);

enum class AlignInit {
  /// First dictionary from nearest neighbours under W = I.
  kIdentity,
  /// Seed dictionaries from sorted similarity profiles against the most
  /// frequent words, which do not depend on the rotation of either space.
  kSimilarityProfile,
};

struct AlignConfig {
  /// Refinement rounds per restart (stops early once the dictionary is stable).
  int rounds = 30;
  std::size_t dict_size = 2000;
  AlignInit init = AlignInit::kSimilarityProfile;
  /// Most frequent words used for the restarts.
  std::size_t search_vocab = 2000;
  /// Profile anchor counts and seed truncations tried (0 = keep every pair).
  std::vector<std::size_t> anchor_sizes{25, 50, 75, 100, 150, 200, 300};
  std::vector<std::size_t> seed_sizes{16, 32, 48, 64, 128, 0};
};

struct AlignmentResult {
  /// src.values * map.
  EmbeddingMatrix mapped;
  /// Orthogonal dim x dim map.
  Eigen::MatrixXd map;
  /// Induced (src id, tgt id) dictionary of the final round.
  std::vector<std::pair<WordId, WordId>> dictionary;
  /// Mean mutual-nearest-neighbour cosine of the selected restart.
  double objective = 0.0;
};

/// Self-learning orthogonal mapping: alternate mutual-nearest-neighbour
/// dictionary induction and Procrustes, restarted from several seed
/// dictionaries; the restart with the highest mean MNN cosine wins. Rows are length-normalized and
/// centered internally for the search; the returned map applies to the raw
/// input rows.
AlignmentResult align_embeddings(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                                 const AlignConfig& config = {});

/// Solves min ||X W - Z||_F over orthogonal W.
Eigen::MatrixXd procrustes(const RowMatrix& x, const RowMatrix& z);

/// Mutual nearest neighbours by cosine between the given rows (ids refer to
/// the row indices of the matrices).
std::vector<std::pair<WordId, WordId>> mutual_nearest_neighbors(
    const RowMatrix& src, const std::vector<WordId>& src_rows,
    const RowMatrix& tgt, const std::vector<WordId>& tgt_rows);

struct WordTranslationTable {
  struct Entry {
    WordId target = 0;
    double forward = 0.0;  ///< p(target | source)
    double inverse = 0.0;  ///< p(source | target)
  };

  VocabPtr src_vocab;
  VocabPtr tgt_vocab;
  /// Indexed by source id; entries sorted by descending forward probability.
  std::vector<std::vector<Entry>> entries;
  double lambda = 0.0;
  int k = 0;

  const std::vector<Entry>& candidates(WordId src) const;
  std::size_t size() const;
};

struct InduceConfig {
  double lambda = 20.0;
  int k = 10;
  /// Restrict both sides to the most frequent words (0 = whole vocabulary).
  std::size_t max_src_words = 0;
  std::size_t max_tgt_words = 0;
};

/// p(y|x) = softmax over all target words of lambda * cos(e_x, e_y), kept for
/// the top-k targets without renormalization; p(x|y) is the softmax over all
/// source words for the same target.
WordTranslationTable induce_translation_table(const EmbeddingMatrix& src,
                                              const EmbeddingMatrix& tgt,
                                              const InduceConfig& config);

/// File format: "src ||| tgt ||| p_fwd p_inv" per line.
void save_translation_table(const std::filesystem::path& path, const WordTranslationTable& table);
WordTranslationTable load_translation_table(const std::filesystem::path& path, VocabPtr src_vocab,
                                            VocabPtr tgt_vocab);

/// Full pre-truncation forward distribution p(. | src) over the target words
/// considered by induce_translation_table, in target-id order.
std::vector<std::pair<WordId, double>> forward_distribution(const EmbeddingMatrix& src,
                                                            const EmbeddingMatrix& tgt,
                                                            const InduceConfig& config,
                                                            WordId src_id);

/// Word-by-word top-1 translation; words without candidates become <unk>.
Sentence word_by_word(const WordTranslationTable& table, const Sentence& src);

}  // namespace unmt
