#include "unmt/smt/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "unmt/log.hpp"
#include "scoring.hpp"

namespace unmt::smt {

LogLinearWeights LogLinearWeights::scaled(double alpha) const {
  LogLinearWeights w = *this;
  for (std::size_t i = 0; i < names().size(); ++i) w.at(i) *= alpha;
  return w;
}

const std::vector<std::string>& LogLinearWeights::names() {
  static const std::vector<std::string> kNames = {"p_fwd",      "p_inv", "lex_fwd", "lex_inv", "lm",
                                                  "distortion", "word",  "phrase",  "oov"};
  return kNames;
}

double& LogLinearWeights::at(std::size_t i) {
  switch (i) {
    case 0: return p_fwd;
    case 1: return p_inv;
    case 2: return lex_fwd;
    case 3: return lex_inv;
    case 4: return lm;
    case 5: return distortion;
    case 6: return word;
    case 7: return phrase;
    case 8: return oov;
    default: throw Error("weight index out of range");
  }
}

double LogLinearWeights::at(std::size_t i) const { return const_cast<LogLinearWeights*>(this)->at(i); }

LogLinearWeights LogLinearWeights::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  LogLinearWeights w;
  std::vector<bool> seen(names().size(), false);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string name;
    double value = 0.0;
    if (!(ls >> name)) continue;
    if (!(ls >> value) || !std::isfinite(value)) throw Error("weights: bad value for " + name);
    auto it = std::find(names().begin(), names().end(), name);
    if (it == names().end()) throw Error("weights: unknown feature " + name);
    auto idx = static_cast<std::size_t>(it - names().begin());
    if (seen[idx]) throw Error("weights: duplicate feature " + name);
    seen[idx] = true;
    w.at(idx) = value;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw Error("weights: missing feature " + names()[i]);
  }
  return w;
}

void LogLinearWeights::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < names().size(); ++i) out << fmt::format("{} {:.10g}\n", names()[i], at(i));
}

SMTModel make_smt(std::shared_ptr<const PhraseTable> table, std::shared_ptr<const NGramLM> lm,
                  LogLinearWeights weights, DecoderConfig decoder) {
  if (!table || !lm) throw Error("smt: table and language model required");
  if (lm->vocab().fingerprint() != table->tgt_vocab().fingerprint()) {
    throw Error("smt: language model vocabulary does not match the phrase table target side");
  }
  if (!table->has_lexical()) {
    weights.lex_fwd = 0.0;
    weights.lex_inv = 0.0;
  }
  return SMTModel{std::move(table), std::move(lm), weights, decoder};
}

SMTModel init_smt(const WordTranslationTable& table, std::shared_ptr<const NGramLM> lm,
                  LogLinearWeights weights, DecoderConfig decoder) {
  auto pt = std::make_shared<const PhraseTable>(phrase_table_from_words(table));
  return make_smt(std::move(pt), std::move(lm), weights, decoder);
}

namespace detail {

double static_score(const LogLinearWeights& w, const PhraseEntry* e, std::size_t target_len) {
  double s = 0.0;
  if (e) {
    s += w.p_fwd * std::log(e->p_fwd);
    s += w.p_inv * std::log(e->p_inv);
    s += w.lex_fwd * std::log(e->lex_fwd);
    s += w.lex_inv * std::log(e->lex_inv);
  } else {
    s += w.oov * -1.0;
  }
  s += w.word * -static_cast<double>(target_len);
  s += w.phrase * -1.0;
  return s;
}

double step_score(const SMTModel& m, double static_part, int begin, int prev_end, NGramLM::State& state,
                  std::span<const WordId> target) {
  double lm = 0.0;
  for (WordId t : target) lm += m.lm->score_word(state, t);
  return static_part + m.weights.distortion * -static_cast<double>(std::abs(begin - prev_end)) + m.weights.lm * lm;
}

double end_score(const SMTModel& m, NGramLM::State& state) {
  return m.weights.lm * m.lm->score_word(state, Vocabulary::kEos);
}

bool has_word_option(const PhraseTable& t, WordId w) {
  const auto* opts = t.find(std::span<const WordId>(&w, 1));
  return opts && !opts->empty();
}

}  // namespace detail

double smt_score(const SMTModel& m, const Sentence& src, const Derivation& d) {
  std::vector<char> covered(src.size(), 0);
  double score = 0.0;
  int prev_end = 0;
  NGramLM::State state = m.lm->begin_state();
  for (const auto& step : d) {
    if (step.src_begin < 0 || step.src_end <= step.src_begin || step.src_end > static_cast<int>(src.size())) {
      throw Error("derivation span out of range");
    }
    for (int i = step.src_begin; i < step.src_end; ++i) {
      if (covered[static_cast<std::size_t>(i)]) throw Error("derivation covers a source word twice");
      covered[static_cast<std::size_t>(i)] = 1;
    }
    std::span<const WordId> source(src.data() + step.src_begin, static_cast<std::size_t>(step.src_end - step.src_begin));
    const PhraseEntry* entry = nullptr;
    if (step.passthrough) {
      if (source.size() != 1 || detail::has_word_option(*m.table, source[0]) ||
          step.target != Sentence{Vocabulary::kUnk}) {
        throw Error("unknown phrase");
      }
    } else {
      entry = m.table->find(source, step.target);
      if (!entry) throw Error("unknown phrase");
    }
    score += detail::step_score(m, detail::static_score(m.weights, entry, step.target.size()), step.src_begin,
                                prev_end, state, step.target);
    prev_end = step.src_end;
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end()) {
    throw Error("derivation does not cover the source");
  }
  score += detail::end_score(m, state);
  return score;
}

std::vector<Translation> decode_all(const SMTModel& model, const std::vector<Sentence>& sources, int threads) {
  std::vector<Translation> out(sources.size());
  const auto n = static_cast<std::size_t>(std::max(1, threads));
  if (n == 1 || sources.size() < 2) {
    for (std::size_t i = 0; i < sources.size(); ++i) out[i] = decode(model, sources[i]);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < sources.size(); i += n) out[i] = decode(model, sources[i]);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace unmt::smt
