#pragma once

#include <string>
#include <vector>

#include "unmt/smt/model.hpp"
#include "unmt/trainer/em.hpp"

namespace unmt::harness {

struct SweepResult {
  std::string param;  ///< lambda, k or vocab_cap
  std::vector<double> grid;
  std::vector<double> bleu;  ///< SMT0 dev BLEU (x2y) per grid value
};

/// Rebuilds the x2y translation table for each grid value with everything else
/// fixed (embeddings, LM, weights), then decodes the dev set with SMT0.
SweepResult sweep_init(const std::string& param, const std::vector<double>& grid, const trainer::EMConfig& config,
                       const trainer::EMCorpora& corpora, const trainer::Initialization& init);

/// "param TAB value TAB bleu" rows.
std::string format_sweep(const SweepResult& result);

struct TuneConfig {
  int rounds = 3;
  /// Multipliers tried for each weight in turn.
  std::vector<double> factors{0.0, 0.5, 0.8, 1.25, 2.0};
};

/// Coordinate ascent on dev BLEU against pseudo references. A change is kept
/// only when it strictly improves BLEU. Not used by the EM loop.
smt::LogLinearWeights tune_weights(const smt::SMTModel& model, const std::vector<Sentence>& sources,
                                   const std::vector<Tokens>& references, const TuneConfig& config = {});

}  // namespace unmt::harness
