#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "unmt/corpus.hpp"

namespace unmt::nmt {

/// Parameter and gradient storage. Eigen's vectorized reductions peel a
/// scalar prologue that depends on the buffer address, so an unaligned
/// buffer would make results depend on the heap layout.
template <typename S>
using ParamVector = std::vector<S, Eigen::aligned_allocator<S>>;

struct NMTConfig {
  int emb = 64;
  int hidden = 128;  ///< decoder state; each encoder direction gets hidden / 2
  std::uint64_t seed = 1;
};

/// Padded batch in model ids (already mapped into the shared embedding space
/// for the source side). Column b is one sentence.
struct TrainBatch {
  Eigen::MatrixXi src;      ///< max_src_len x B, padded with 0
  Eigen::MatrixXi tgt_in;   ///< max_tgt_len+1 x B: <s> y_1 .. y_m
  Eigen::MatrixXi tgt_out;  ///< max_tgt_len+1 x B: y_1 .. y_m </s>
  std::vector<int> src_len;
  std::vector<int> tgt_len;  ///< m + 1 (includes the end marker)
  std::vector<double> weight;

  int size() const { return static_cast<int>(src_len.size()); }
};

struct ParamInfo {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t offset = 0;
};

/// GRU encoder-decoder: bidirectional encoder, GRU decoder, additive
/// attention over the encoder states, tanh readout and a softmax over the
/// target vocabulary. One embedding table covers the union of both
/// vocabularies (tokens with equal spelling share a row).
template <typename S>
class BasicNMT {
 public:
  using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  BasicNMT(VocabPtr src_vocab, VocabPtr tgt_vocab, NMTConfig config = {});

  const NMTConfig& config() const { return config_; }
  const Vocabulary& src_vocab() const { return *src_vocab_; }
  const Vocabulary& tgt_vocab() const { return *tgt_vocab_; }
  VocabPtr src_vocab_ptr() const { return src_vocab_; }
  VocabPtr tgt_vocab_ptr() const { return tgt_vocab_; }
  Eigen::Index union_size() const { return union_size_; }
  WordId embed_src(WordId w) const;
  WordId embed_tgt(WordId w) const;

  /// Flat parameter storage and the tensor layout over it (tensors start on
  /// 64-byte boundaries).
  ParamVector<S>& params() { return params_; }
  const ParamVector<S>& params() const { return params_; }
  const std::vector<ParamInfo>& layout() const { return layout_; }
  MatrixMap param(std::size_t i) { return {params_.data() + layout_[i].offset, layout_[i].rows, layout_[i].cols}; }
  ConstMatrixMap param(std::size_t i) const {
    return {params_.data() + layout_[i].offset, layout_[i].rows, layout_[i].cols};
  }

  TrainBatch make_batch(const std::vector<Sentence>& src, const std::vector<Sentence>& tgt,
                        const std::vector<double>& weights = {}) const;

  /// Weighted token-level negative log-likelihood divided by the weighted
  /// number of target tokens. Adds d(loss)/d(params) into `grad` when given.
  double loss(const TrainBatch& batch, ParamVector<S>* grad = nullptr) const;

  /// Per-sentence decoding state.
  struct State {
    Matrix annotations;  ///< hidden x src_len
    Matrix keys;         ///< U_a * annotations
    Vector s;
  };
  State encode(const Sentence& src) const;
  /// Log-softmax over the target vocabulary after feeding `prev`; advances
  /// the state.
  Vector step(State& state, WordId prev) const;

  /// Teacher-forced log p(y|x) through the same step() path used for search.
  double forward_logprob(const Sentence& x, const Sentence& y) const;
  /// Argmax token per step; at most max_len tokens, end marker excluded.
  Sentence greedy(const Sentence& x, int max_len) const;
  /// Length-normalized beam search (score / (tokens + end marker)). Never
  /// returns a worse normalized score than greedy.
  Sentence beam(const Sentence& x, int beam, int max_len) const;
  /// Normalized score used by beam().
  double normalized_score(const Sentence& x, const Sentence& y, int max_len) const;
  /// Greedy decoding of many sentences in padded batches.
  std::vector<Sentence> greedy_batch(const std::vector<Sentence>& xs, int max_len, int batch_size = 64) const;

  void save(const std::filesystem::path& path) const;
  static BasicNMT load(const std::filesystem::path& path, VocabPtr src_vocab, VocabPtr tgt_vocab);

 private:
  void build_layout();
  void init_params();

  VocabPtr src_vocab_;
  VocabPtr tgt_vocab_;
  NMTConfig config_;
  std::vector<WordId> src_to_union_;
  std::vector<WordId> tgt_to_union_;
  Eigen::Index union_size_ = 0;
  std::vector<ParamInfo> layout_;
  ParamVector<S> params_;
};

using NMTModel = BasicNMT<float>;

extern template class BasicNMT<float>;
extern template class BasicNMT<double>;

}  // namespace unmt::nmt
