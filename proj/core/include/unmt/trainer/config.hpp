#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unmt/corpus.hpp"
#include "unmt/embeddings.hpp"
#include "unmt/nmt/model.hpp"
#include "unmt/nmt/train.hpp"
#include "unmt/smt/model.hpp"

namespace unmt::trainer {

/// How NMT0 is warmed up at t = 0 (phase A data).
enum class Warmup { kSmt, kWordByWord };

struct EMConfig {
  std::uint64_t seed = 1;

  // Data. Without x_corpus/y_corpus a synthetic cipher pair is generated.
  std::filesystem::path x_corpus, y_corpus, dev_x, dev_y, gold_dictionary;
  /// 500 dev lines plus two disjoint 50k halves.
  BaseLanguageSpec base{.sentences = 100500};
  SyntheticPairSpec pair;  ///< `base` field unused; filled from `base`
  std::size_t max_sentence_len = 30;
  std::size_t vocab_cap = 5000;  ///< words per side in the induced tables (0 = all)

  // Initialization.
  SkipGramConfig skipgram{.epochs = 10};
  AlignConfig align;
  InduceConfig induce;
  int lm_order = 3;
  smt::LogLinearWeights weights;
  std::filesystem::path weights_file;
  smt::DecoderConfig decoder;
  Warmup warmup = Warmup::kSmt;

  // EM loop.
  std::size_t sample_size = 20000;
  /// Iterations after the t = 0 initialization.
  int max_iterations = 2;
  /// Stop once neither direction gains this much NMT BLEU; 0 disables.
  double convergence_bleu = 0.5;
  smt::PhraseTableConfig phrase;
  int decode_threads = 1;

  // NMT.
  nmt::NMTConfig nmt;
  nmt::OptimizerConfig optimizer;
  /// Adam rate at the end of each training phase, as a fraction of the start.
  double lr_final_scale = 0.1;
  int batch_size = 64;
  int init_phase_a_steps = 3000;
  int init_phase_b_steps = 2000;
  int phase_a_steps = 1000;
  int phase_b_steps = 1000;
  int max_decode_len = 40;

  // R2L extension.
  bool enable_r2l = false;
  int r2l_aux_steps = 1000;
  int r2l_finetune_steps = 500;
};

/// Parses "key = value" lines ('#' starts a comment) on top of the
/// defaults. Unknown keys and malformed values throw.
EMConfig parse_config(const std::string& text, EMConfig base = {});
EMConfig load_config(const std::filesystem::path& path, EMConfig base = {});
/// Writes every key with its current value; parse_config reads it back.
std::string format_config(const EMConfig& config);

/// Every accepted key, in file order.
const std::vector<std::string>& config_keys();

}  // namespace unmt::trainer
