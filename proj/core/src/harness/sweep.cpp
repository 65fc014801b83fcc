#include "unmt/harness/sweep.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "unmt/harness/bleu.hpp"
#include "unmt/log.hpp"

namespace unmt::harness {

SweepResult sweep_init(const std::string& param, const std::vector<double>& grid, const trainer::EMConfig& config,
                       const trainer::EMCorpora& corpora, const trainer::Initialization& init) {
  if (grid.empty()) throw Error("sweep: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end())) throw Error("sweep: grid must be sorted ascending");
  if (param != "lambda" && param != "k" && param != "vocab_cap")
    throw Error("sweep: parameter must be lambda, k or vocab_cap");
  if (corpora.dev_x.empty()) throw Error("sweep: a dev set is required");
  SweepResult result{param, grid, {}};
  const auto weights = trainer::smt_weights(config);
  for (double v : grid) {
    trainer::EMConfig c = config;
    if (param == "lambda") {
      if (v <= 0.0) throw Error("sweep: lambda must be positive");
      c.induce.lambda = v;
    } else {
      if (v < 1.0 || v != std::floor(v)) throw Error(fmt::format("sweep: {} needs positive integers", param));
      if (param == "k") c.induce.k = static_cast<int>(v);
      else c.vocab_cap = static_cast<std::size_t>(v);
    }
    auto table = trainer::induce_table(init.emb_x, init.emb_y, c);
    auto model = smt::init_smt(table, init.lm_y, weights, c.decoder);
    result.bleu.push_back(trainer::evaluate_smt(model, corpora.dev_x, corpora.dev_y, c.decode_threads));
    log::info("sweep {}={}: {:.2f}", param, v, result.bleu.back());
  }
  return result;
}

std::string format_sweep(const SweepResult& result) {
  std::string out;
  for (std::size_t i = 0; i < result.grid.size(); ++i)
    out += fmt::format("{}\t{}\t{:.2f}\n", result.param, result.grid[i], result.bleu[i]);
  return out;
}

smt::LogLinearWeights tune_weights(const smt::SMTModel& model, const std::vector<Sentence>& sources,
                                   const std::vector<Tokens>& references, const TuneConfig& config) {
  if (sources.size() != references.size() || sources.empty()) throw Error("tune: need matching non-empty dev data");
  auto score = [&](const smt::LogLinearWeights& w) {
    smt::SMTModel m = model;
    m.weights = w;
    if (!m.table->has_lexical()) m.weights.lex_fwd = m.weights.lex_inv = 0.0;
    std::vector<Tokens> hyp;
    for (const auto& s : sources) hyp.push_back(smt::decode(m, s).surface);
    return bleu(hyp, references).bleu;
  };
  smt::LogLinearWeights best = model.weights;
  double best_bleu = score(best);
  for (int round = 0; round < config.rounds; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < smt::LogLinearWeights::names().size(); ++i) {
      for (double f : config.factors) {
        smt::LogLinearWeights w = best;
        w.at(i) *= f;
        if (w.at(i) == best.at(i)) continue;
        double b = score(w);
        if (b > best_bleu) {
          best_bleu = b;
          best = w;
          changed = true;
        }
      }
    }
    log::debug("tune round {}: {:.2f}", round, best_bleu);
    if (!changed) break;
  }
  return best;
}

}  // namespace unmt::harness
