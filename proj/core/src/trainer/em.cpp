#include "unmt/trainer/em.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "unmt/harness/bleu.hpp"
#include "unmt/log.hpp"
#include "unmt/nmt/train.hpp"
#include "unmt/smt/phrase_table.hpp"

namespace unmt::trainer {

namespace {

constexpr Direction kBoth[] = {Direction::kXToY, Direction::kYToX};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream per (iteration, purpose, direction).
std::uint64_t derive_seed(std::uint64_t seed, int t, int purpose, Direction d) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ static_cast<std::uint64_t>(t + 1));
  h = splitmix(h ^ static_cast<std::uint64_t>(purpose));
  return splitmix(h ^ (d == Direction::kXToY ? 0u : 1u));
}

enum Purpose { kSample = 1, kNmtInit, kPhaseA, kPhaseB, kR2LAux, kR2LFinetune };

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

nmt::TrainStats train_nmt(nmt::NMTModel& model, const PseudoCorpus& data, int steps, std::uint64_t seed,
                          const EMConfig& config) {
  if (steps <= 0) return {};
  if (data.size() == 0) throw Error(fmt::format("{}: no training data for the NMT model", direction_name(data.direction)));
  nmt::TrainConfig tc;
  tc.steps = steps;
  tc.batch_size = config.batch_size;
  tc.optimizer = config.optimizer;
  tc.final_lr_scale = config.lr_final_scale;
  tc.seed = seed;
  return nmt::train(model, data.parallel(), tc);
}

std::string step_label(const char* prefix, int t) { return fmt::format("{}{}", prefix, t); }

const std::vector<Sentence>& sources_for(const Samples& s, Direction d) {
  return d == Direction::kXToY ? s.x : s.y;
}

}  // namespace

const char* origin_name(Origin origin) {
  switch (origin) {
    case Origin::kSmtDenoised: return "smt-denoised";
    case Origin::kNmtBacktranslated: return "nmt-backtranslated";
    case Origin::kR2L: return "r2l";
  }
  return "?";
}

Origin parse_origin(const std::string& name) {
  for (Origin o : {Origin::kSmtDenoised, Origin::kNmtBacktranslated, Origin::kR2L})
    if (name == origin_name(o)) return o;
  throw Error("unknown origin tag '" + name + "'");
}

void PseudoCorpus::dedup() {
  std::set<std::tuple<int, Sentence, Sentence>> seen;
  std::vector<PseudoPair> kept;
  kept.reserve(pairs.size());
  for (auto& p : pairs)
    if (seen.emplace(static_cast<int>(p.origin), p.src, p.tgt).second) kept.push_back(std::move(p));
  pairs = std::move(kept);
}

std::size_t PseudoCorpus::count(Origin origin) const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [&](const PseudoPair& p) { return p.origin == origin; }));
}

std::vector<smt::SentencePair> PseudoCorpus::sentence_pairs() const {
  std::vector<smt::SentencePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.src, p.tgt});
  return out;
}

nmt::ParallelData PseudoCorpus::parallel() const {
  nmt::ParallelData out;
  for (const auto& p : pairs) out.add(p.src, p.tgt);
  return out;
}

void PseudoCorpus::save_tsv(const std::filesystem::path& path, const Vocabulary& src_vocab,
                            const Vocabulary& tgt_vocab) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& p : pairs)
    out << src_vocab.join(p.src) << '\t' << tgt_vocab.join(p.tgt) << '\t' << origin_name(p.origin) << '\n';
}

PseudoCorpus PseudoCorpus::load_tsv(const std::filesystem::path& path, Direction direction,
                                    const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  auto words = [](const std::string& s) {
    Tokens t;
    std::istringstream ss(s);
    for (std::string w; ss >> w;) t.push_back(w);
    return t;
  };
  PseudoCorpus pc{direction, {}};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto a = line.find('\t');
    auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) throw Error(fmt::format("{}:{}: expected 3 columns", path.string(), lineno));
    pc.add(src_vocab.encode(words(line.substr(0, a))), tgt_vocab.encode(words(line.substr(a + 1, b - a - 1))),
           parse_origin(line.substr(b + 1)));
  }
  return pc;
}

PseudoCorpus merge(const PseudoCorpus& a, const PseudoCorpus& b) {
  if (a.direction != b.direction) throw Error("merge: direction mismatch");
  PseudoCorpus out = a;
  out.pairs.insert(out.pairs.end(), b.pairs.begin(), b.pairs.end());
  out.dedup();
  return out;
}

EMCorpora prepare_corpora(const EMConfig& config) {
  EMCorpora c;
  if (config.x_corpus.empty() != config.y_corpus.empty())
    throw Error("x_corpus and y_corpus must be given together");
  if (!config.x_corpus.empty()) {
    auto load = [&](const std::filesystem::path& p, const std::string& lang) {
      auto lines = read_token_lines(p);
      filter_by_length(lines, config.max_sentence_len);
      auto vocab = std::make_shared<const Vocabulary>(Vocabulary::build(lines, config.pair.min_count, config.pair.max_words));
      return make_corpus(lang, lines, vocab, p.string());
    };
    c.x = load(config.x_corpus, "x");
    c.y = load(config.y_corpus, "y");
    if (!config.dev_x.empty()) c.dev_x = read_token_lines(config.dev_x);
    if (!config.dev_y.empty()) c.dev_y = read_token_lines(config.dev_y);
    if (c.dev_x.size() != c.dev_y.size()) throw Error("dev_x and dev_y differ in length");
    if (!config.gold_dictionary.empty()) c.gold = load_gold_dictionary(config.gold_dictionary);
    return c;
  }
  SyntheticPairSpec spec = config.pair;
  spec.base = generate_base_corpus(config.base);
  auto pair = generate_synthetic_pair(spec);
  c.x = std::move(pair.x);
  c.y = std::move(pair.y);
  c.dev_x = std::move(pair.dev_x);
  c.dev_y = std::move(pair.dev_y);
  c.gold = std::move(pair.gold);
  return c;
}

WordTranslationTable induce_table(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt, const EMConfig& config) {
  InduceConfig ic = config.induce;
  ic.max_src_words = config.vocab_cap;
  ic.max_tgt_words = config.vocab_cap;
  return induce_translation_table(src, tgt, ic);
}

smt::LogLinearWeights smt_weights(const EMConfig& config) {
  return config.weights_file.empty() ? config.weights : smt::LogLinearWeights::load(config.weights_file);
}

Initialization initialize(const EMCorpora& corpora, const EMConfig& config) {
  Initialization init;
  Timer timer;
  SkipGramConfig sg = config.skipgram;
  sg.seed = config.seed;
  auto ex = train_skipgram(corpora.x, sg);
  sg.seed = config.seed + 1;
  init.emb_y = train_skipgram(corpora.y, sg);
  log::info("embeddings trained ({:.1f}s)", timer.seconds());
  auto aligned = align_embeddings(ex, init.emb_y, config.align);
  init.emb_x = std::move(aligned.mapped);
  init.align_objective = aligned.objective;
  log::info("embeddings aligned, objective {:.4f} ({:.1f}s)", aligned.objective, timer.seconds());
  init.t_xy = induce_table(init.emb_x, init.emb_y, config);
  init.t_yx = induce_table(init.emb_y, init.emb_x, config);
  init.lm_x = std::make_shared<const NGramLM>(NGramLM::train(corpora.x, config.lm_order));
  init.lm_y = std::make_shared<const NGramLM>(NGramLM::train(corpora.y, config.lm_order));
  log::info("tables and language models ready ({:.1f}s)", timer.seconds());
  return init;
}

std::optional<double> EMState::last_bleu(const std::string& prefix, Direction d) const {
  for (auto it = history.rbegin(); it != history.rend(); ++it)
    if (it->direction == d && it->step.rfind(prefix, 0) == 0) return it->bleu;
  return std::nullopt;
}

Samples draw_samples(const EMCorpora& corpora, std::size_t size, std::uint64_t seed, int t) {
  auto draw = [&](const MonolingualCorpus& c, Direction d) {
    if (size >= c.size()) return c.sentences;
    std::vector<std::size_t> idx(c.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, t, kSample, d));
    // Partial Fisher-Yates; std::shuffle's output is library-specific.
    for (std::size_t i = 0; i < size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(size);
    std::sort(idx.begin(), idx.end());
    std::vector<Sentence> out;
    out.reserve(size);
    for (auto i : idx) out.push_back(c.sentences[i]);
    return out;
  };
  return {draw(corpora.x, Direction::kXToY), draw(corpora.y, Direction::kYToX)};
}

double evaluate_smt(const smt::SMTModel& model, const std::vector<Tokens>& src, const std::vector<Tokens>& ref,
                    int threads) {
  std::vector<Sentence> ids;
  ids.reserve(src.size());
  for (const auto& s : src) ids.push_back(model.src_vocab().encode(s));
  auto out = smt::decode_all(model, ids, threads);
  std::vector<Tokens> hyp;
  hyp.reserve(out.size());
  for (auto& tr : out) hyp.push_back(std::move(tr.surface));
  return harness::bleu(hyp, ref).bleu;
}

double evaluate_nmt(const nmt::NMTModel& model, const std::vector<Tokens>& src, const std::vector<Tokens>& ref,
                    int max_len) {
  std::vector<Sentence> ids;
  ids.reserve(src.size());
  for (const auto& s : src) ids.push_back(model.src_vocab().encode(s));
  auto out = model.greedy_batch(ids, max_len);
  std::vector<Tokens> hyp;
  hyp.reserve(out.size());
  for (const auto& o : out) hyp.push_back(model.tgt_vocab().decode(o));
  return harness::bleu(hyp, ref).bleu;
}

PseudoCorpus nmt_pseudo_data(const nmt::NMTModel& model, Direction d, const std::vector<Sentence>& sources,
                             int max_len) {
  auto out = model.greedy_batch(sources, max_len);
  PseudoCorpus pc{d, {}};
  for (std::size_t i = 0; i < sources.size(); ++i)
    if (!sources[i].empty() && !out[i].empty()) pc.add(sources[i], std::move(out[i]), Origin::kNmtBacktranslated);
  pc.dedup();
  return pc;
}

smt::SMTModel train_smt(const PseudoCorpus& data, VocabPtr src_vocab, std::shared_ptr<const NGramLM> lm,
                        const EMConfig& config) {
  auto table = smt::train_phrase_table(data.sentence_pairs(), src_vocab, lm->vocab_ptr(), config.phrase);
  if (table.empty())
    throw Error(fmt::format("{}: phrase table empty after pruning at min_count {}", direction_name(data.direction),
                            config.phrase.min_count));
  return smt::make_smt(std::make_shared<const smt::PhraseTable>(std::move(table)), std::move(lm),
                       smt_weights(config), config.decoder);
}

std::pair<PseudoCorpus, PseudoCorpus> e_step(EMState& state, const Samples& samples, const Initialization& init,
                                             const EMConfig& config) {
  if (state.t < 1) throw Error("e_step: t must be at least 1");
  Timer timer;
  auto xy = nmt_pseudo_data(*state.nmt_xy, Direction::kXToY, samples.x, config.max_decode_len);
  auto yx = nmt_pseudo_data(*state.nmt_yx, Direction::kYToX, samples.y, config.max_decode_len);
  state.smt_xy = train_smt(xy, state.nmt_xy->src_vocab_ptr(), init.lm_y, config);
  state.smt_yx = train_smt(yx, state.nmt_yx->src_vocab_ptr(), init.lm_x, config);
  log::info("t={} e-step: {} / {} pseudo pairs, {} / {} phrase pairs ({:.1f}s)", state.t, xy.size(), yx.size(),
            state.smt_xy->table->size(), state.smt_yx->table->size(), timer.seconds());
  return {std::move(xy), std::move(yx)};
}

MStepLog m_step(EMState& state, const Samples& samples, const Initialization& init, const EMConfig& config) {
  if (!state.smt_xy || !state.smt_yx) throw Error("m_step: SMT models missing");
  const int t = state.t;
  const bool word_level = t == 0 && config.warmup == Warmup::kWordByWord;
  MStepLog log;
  Timer timer;

  // Phase A: denoised pseudo data from the SMT models.
  for (Direction d : kBoth) {
    const auto& src = sources_for(samples, d);
    PseudoCorpus& pc = d == Direction::kXToY ? log.denoised_xy : log.denoised_yx;
    pc.direction = d;
    if (word_level) {
      const auto& table = d == Direction::kXToY ? init.t_xy : init.t_yx;
      for (const auto& s : src) pc.add(s, word_by_word(table, s), Origin::kSmtDenoised);
    } else {
      auto out = smt::decode_all(state.smt(d), src, config.decode_threads);
      for (std::size_t i = 0; i < src.size(); ++i)
        if (!out[i].target.empty()) pc.add(src[i], std::move(out[i].target), Origin::kSmtDenoised);
    }
    pc.dedup();
  }
  log::info("t={} m-step: decoded {} + {} sentences ({:.1f}s)", t, log.denoised_xy.size(), log.denoised_yx.size(),
            timer.seconds());

  if (t == 0 || !state.nmt_xy) {
    nmt::NMTConfig nc = config.nmt;
    nc.seed = derive_seed(config.seed, 0, kNmtInit, Direction::kXToY);
    state.nmt_xy.emplace(state.smt_xy->table->src_vocab_ptr(), state.smt_xy->table->tgt_vocab_ptr(), nc);
    nc.seed = derive_seed(config.seed, 0, kNmtInit, Direction::kYToX);
    state.nmt_yx.emplace(state.smt_yx->table->src_vocab_ptr(), state.smt_yx->table->tgt_vocab_ptr(), nc);
  }
  const int steps_a = t == 0 ? config.init_phase_a_steps : config.phase_a_steps;
  const int steps_b = t == 0 ? config.init_phase_b_steps : config.phase_b_steps;
  for (Direction d : kBoth) {
    auto stats = train_nmt(state.nmt(d), d == Direction::kXToY ? log.denoised_xy : log.denoised_yx, steps_a,
                           derive_seed(config.seed, t, kPhaseA, d), config);
    log::debug("t={} phase A {}: loss {:.3f} -> {:.3f}", t, direction_name(d), stats.first_loss, stats.last_loss);
  }
  log::info("t={} phase A done ({:.1f}s)", t, timer.seconds());

  // Phase B: back-translations from the phase-A snapshots, both generated
  // before either model moves on.
  PseudoCorpus bt_xy{Direction::kXToY, {}}, bt_yx{Direction::kYToX, {}};
  {
    auto x_plus = state.nmt_yx->greedy_batch(samples.y, config.max_decode_len);
    auto y_plus = state.nmt_xy->greedy_batch(samples.x, config.max_decode_len);
    for (std::size_t i = 0; i < samples.y.size(); ++i)
      if (!x_plus[i].empty()) bt_xy.add(std::move(x_plus[i]), samples.y[i], Origin::kNmtBacktranslated);
    for (std::size_t i = 0; i < samples.x.size(); ++i)
      if (!y_plus[i].empty()) bt_yx.add(std::move(y_plus[i]), samples.x[i], Origin::kNmtBacktranslated);
  }
  log.union_xy = merge(bt_xy, log.denoised_xy);
  log.union_yx = merge(bt_yx, log.denoised_yx);
  for (Direction d : kBoth) {
    auto stats = train_nmt(state.nmt(d), d == Direction::kXToY ? log.union_xy : log.union_yx, steps_b,
                           derive_seed(config.seed, t, kPhaseB, d), config);
    log::debug("t={} phase B {}: loss {:.3f} -> {:.3f}", t, direction_name(d), stats.first_loss, stats.last_loss);
  }
  log::info("t={} phase B done on {} / {} pairs ({:.1f}s)", t, log.union_xy.size(), log.union_yx.size(),
            timer.seconds());
  state.data_xy = log.union_xy;
  state.data_yx = log.union_yx;
  return log;
}

Sentence reversed(const Sentence& s) { return Sentence(s.rbegin(), s.rend()); }

void r2l_regularize(EMState& state, const Samples& samples, const EMConfig& config) {
  if (!state.nmt_xy || !state.nmt_yx) throw Error("r2l: NMT models missing");
  std::vector<PseudoCorpus> r2l;
  for (Direction d : kBoth) {
    // The auxiliary model starts from the main one; only the target order differs.
    nmt::NMTModel aux = state.nmt(d);
    PseudoCorpus rev = state.data(d);
    for (auto& p : rev.pairs) p.tgt = reversed(p.tgt);
    train_nmt(aux, rev, config.r2l_aux_steps, derive_seed(config.seed, state.t, kR2LAux, d), config);
    const auto& src = sources_for(samples, d);
    auto out = aux.greedy_batch(src, config.max_decode_len);
    PseudoCorpus pc{d, {}};
    for (std::size_t i = 0; i < src.size(); ++i)
      if (!out[i].empty()) pc.add(src[i], reversed(out[i]), Origin::kR2L);
    pc.dedup();
    r2l.push_back(std::move(pc));
  }
  for (std::size_t i = 0; i < 2; ++i) {
    Direction d = kBoth[i];
    PseudoCorpus mixed = merge(state.data(d), r2l[i]);
    train_nmt(state.nmt(d), mixed, config.r2l_finetune_steps, derive_seed(config.seed, state.t, kR2LFinetune, d),
              config);
    state.data(d) = std::move(mixed);
  }
}

std::string format_report(const std::vector<ReportRow>& rows) {
  std::string out;
  for (const auto& r : rows) out += fmt::format("{}\t{}\t{:.2f}\n", r.step, direction_name(r.direction), r.bleu);
  return out;
}

void save_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << format_report(rows);
}

std::vector<ReportRow> load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<ReportRow> rows;
  std::string step, dir, bleu;
  while (std::getline(in, step, '\t') && std::getline(in, dir, '\t') && std::getline(in, bleu)) {
    ReportRow r;
    r.step = step;
    if (dir == "x2y") r.direction = Direction::kXToY;
    else if (dir == "y2x") r.direction = Direction::kYToX;
    else throw Error("report: bad direction '" + dir + "'");
    r.bleu = std::stod(bleu);
    rows.push_back(r);
  }
  return rows;
}

namespace {

struct RunDir {
  std::filesystem::path root;

  std::filesystem::path step(int t) const {
    auto p = root / fmt::format("step_{}", t);
    std::filesystem::create_directories(p);
    return p;
  }
  explicit operator bool() const { return !root.empty(); }
};

void save_tables(const RunDir& dir, EMState& s) {
  if (!dir) return;
  auto p = dir.step(s.t);
  for (Direction d : kBoth) s.smt(d).table->save(p / fmt::format("phrase_table.{}.txt", direction_name(d)));
}

void save_nmt(const RunDir& dir, EMState& s) {
  if (!dir) return;
  auto p = dir.step(s.t);
  for (Direction d : kBoth) {
    s.nmt(d).save(p / fmt::format("nmt.{}.bin", direction_name(d)));
    s.data(d).save_tsv(p / fmt::format("mstep.{}.tsv", direction_name(d)), s.nmt(d).src_vocab(),
                       s.nmt(d).tgt_vocab());
  }
}

}  // namespace

EMState run_em(const EMCorpora& corpora, const Initialization& init, const EMConfig& config,
               const std::filesystem::path& out) {
  if (corpora.dev_x.empty()) throw Error("run_em: a dev set is required for the per-step report");
  RunDir dir{out};
  EMState s;
  s.seed = config.seed;
  auto record = [&](const char* prefix, Direction d, double bleu) {
    s.history.push_back({step_label(prefix, s.t), d, bleu});
    log::info("{}\t{}\t{:.2f}", s.history.back().step, direction_name(d), bleu);
    if (dir) save_report(dir.root / "report.tsv", s.history);
  };
  auto eval_smt = [&] {
    record("SMT", Direction::kXToY, evaluate_smt(*s.smt_xy, corpora.dev_x, corpora.dev_y, config.decode_threads));
    record("SMT", Direction::kYToX, evaluate_smt(*s.smt_yx, corpora.dev_y, corpora.dev_x, config.decode_threads));
  };
  auto eval_nmt = [&](const char* label) {
    record(label, Direction::kXToY, evaluate_nmt(*s.nmt_xy, corpora.dev_x, corpora.dev_y, config.max_decode_len));
    record(label, Direction::kYToX, evaluate_nmt(*s.nmt_yx, corpora.dev_y, corpora.dev_x, config.max_decode_len));
  };
  auto step_error = [&](const std::exception& e, const char* what) {
    return Error(fmt::format("step {} ({}): {}", s.t, what, e.what()));
  };

  const auto weights = smt_weights(config);
  Samples samples = draw_samples(corpora, config.sample_size, config.seed, 0);
  try {
    s.smt_xy = smt::init_smt(init.t_xy, init.lm_y, weights, config.decoder);
    s.smt_yx = smt::init_smt(init.t_yx, init.lm_x, weights, config.decoder);
  } catch (const std::exception& e) {
    throw step_error(e, "init");
  }
  save_tables(dir, s);
  eval_smt();
  try {
    m_step(s, samples, init, config);
  } catch (const std::exception& e) {
    throw step_error(e, "m-step");
  }
  save_nmt(dir, s);
  eval_nmt("NMT");

  for (int t = 1; t <= config.max_iterations; ++t) {
    s.t = t;
    samples = draw_samples(corpora, config.sample_size, config.seed, t);
    try {
      auto [xy, yx] = e_step(s, samples, init, config);
      if (dir) {
        auto p = dir.step(t);
        xy.save_tsv(p / "estep.x2y.tsv", s.smt_xy->src_vocab(), s.smt_xy->tgt_vocab());
        yx.save_tsv(p / "estep.y2x.tsv", s.smt_yx->src_vocab(), s.smt_yx->tgt_vocab());
      }
    } catch (const std::exception& e) {
      throw step_error(e, "e-step");
    }
    save_tables(dir, s);
    eval_smt();
    const double prev_xy = *s.last_bleu("NMT", Direction::kXToY);
    const double prev_yx = *s.last_bleu("NMT", Direction::kYToX);
    try {
      m_step(s, samples, init, config);
    } catch (const std::exception& e) {
      throw step_error(e, "m-step");
    }
    save_nmt(dir, s);
    eval_nmt("NMT");
    const double gain_xy = *s.last_bleu("NMT", Direction::kXToY) - prev_xy;
    const double gain_yx = *s.last_bleu("NMT", Direction::kYToX) - prev_yx;
    if (config.convergence_bleu > 0.0 && gain_xy < config.convergence_bleu && gain_yx < config.convergence_bleu) {
      log::info("converged at t={} (gains {:.2f} / {:.2f})", t, gain_xy, gain_yx);
      break;
    }
  }

  if (config.enable_r2l) {
    try {
      r2l_regularize(s, samples, config);
    } catch (const std::exception& e) {
      throw step_error(e, "r2l");
    }
    if (dir) {
      auto p = dir.root / "r2l";
      std::filesystem::create_directories(p);
      for (Direction d : kBoth) s.nmt(d).save(p / fmt::format("nmt.{}.bin", direction_name(d)));
    }
    eval_nmt("R2L");
    // R2L rows carry the final iteration number.
  }
  return s;
}

EMState run_em(const EMCorpora& corpora, const EMConfig& config, const std::filesystem::path& out) {
  auto init = initialize(corpora, config);
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream(out / "config.cfg", std::ios::binary) << format_config(config);
    corpora.x.vocab->save(out / "vocab.x.txt");
    corpora.y.vocab->save(out / "vocab.y.txt");
    save_translation_table(out / "table.x2y.txt", init.t_xy);
    save_translation_table(out / "table.y2x.txt", init.t_yx);
    init.lm_x->save_arpa(out / "lm.x.arpa");
    init.lm_y->save_arpa(out / "lm.y.arpa");
    smt_weights(config).save(out / "weights.txt");
  }
  if (!corpora.gold.empty())
    log::info("word translation accuracy (top 200): {:.3f}",
              harness::word_translation_accuracy(init.t_xy, corpora.gold, 200));
  return run_em(corpora, init, config, out);
}

}  // namespace unmt::trainer
