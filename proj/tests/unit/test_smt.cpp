#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <map>
#include <random>

#include "../oracles.hpp"
#include "helpers.hpp"
#include "unmt/smt/alignment.hpp"
#include "unmt/smt/model.hpp"
#include "unmt/smt/phrase_table.hpp"

using namespace unmt;
using namespace unmt::smt;

namespace {

AlignmentMatrix random_alignment(std::mt19937_64& rng, int max_len = 6) {
  std::uniform_int_distribution<int> len(1, max_len);
  AlignmentMatrix a(len(rng), len(rng));
  std::bernoulli_distribution link(0.3);
  for (int s = 0; s < a.src_len(); ++s)
    for (int t = 0; t < a.tgt_len(); ++t)
      if (link(rng)) a.add(s, t);
  return a;
}

std::vector<SentencePair> random_pairs(std::mt19937_64& rng, int n, int vocab, int max_len) {
  std::uniform_int_distribution<int> len(1, max_len), word(Vocabulary::kNumSpecial, Vocabulary::kNumSpecial + vocab - 1);
  std::vector<SentencePair> out;
  for (int i = 0; i < n; ++i) {
    SentencePair p;
    for (int j = len(rng); j > 0; --j) p.src.push_back(word(rng));
    for (int j = len(rng); j > 0; --j) p.tgt.push_back(word(rng));
    out.push_back(std::move(p));
  }
  return out;
}

VocabPtr letters(const std::string& prefix, int n) {
  std::vector<std::string> w;
  for (int i = 0; i < n; ++i) w.push_back(prefix + std::to_string(i));
  return std::make_shared<const Vocabulary>(Vocabulary::from_words(w));
}

// Four source words a b c d, target words x y z w. d only exists inside
// the phrase "d a", so it also gets a pass-through.
struct Toy {
  VocabPtr sv = std::make_shared<const Vocabulary>(Vocabulary::from_words({"a", "b", "c", "d"}));
  VocabPtr tv = std::make_shared<const Vocabulary>(Vocabulary::from_words({"x", "y", "z", "w"}));
  std::shared_ptr<PhraseTable> table = std::make_shared<PhraseTable>(sv, tv, true, 3);
  std::shared_ptr<const NGramLM> lm;

  Toy() {
    auto add = [&](const std::string& s, const std::string& t, double pf, double pi, double lf, double li) {
      table->add(sv->encode(tokenize(s)), PhraseEntry{tv->encode(tokenize(t)), pf, pi, lf, li, 1});
    };
    add("a", "x", 0.7, 0.6, 0.5, 0.4);
    add("a", "y", 0.3, 0.2, 0.3, 0.3);
    add("b", "y", 0.6, 0.7, 0.6, 0.5);
    add("b", "z", 0.4, 0.3, 0.2, 0.4);
    add("c", "z", 1.0, 0.6, 0.9, 0.8);
    add("a b", "y x", 0.5, 0.5, 0.4, 0.3);
    add("b c", "z", 0.2, 0.4, 0.3, 0.1);
    add("c a", "x x w", 0.6, 0.3, 0.2, 0.2);
    add("d a", "w", 0.9, 0.8, 0.7, 0.6);
    table->sort();
    auto lines = test::lines({"x y z", "y x z w", "x x w", "z y x", "w x y z", "x z"});
    lm = std::make_shared<const NGramLM>(NGramLM::train(make_corpus("y", lines, tv), 3));
  }

  SMTModel model(int distortion_limit, LogLinearWeights w = {}) const {
    DecoderConfig d;
    d.distortion_limit = distortion_limit;
    d.beam_width = 1000;
    d.stack_size = 1000000;
    return make_smt(table, lm, w, d);
  }
};

std::vector<Sentence> all_sources(int n_words, int max_len) {
  std::vector<Sentence> out, frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<Sentence> next;
    for (const auto& s : frontier)
      for (int w = 0; w < n_words; ++w) {
        Sentence t = s;
        t.push_back(Vocabulary::kNumSpecial + w);
        next.push_back(t);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("extraction on a 2x2 diagonal") {
  AlignmentMatrix a(2, 2);
  a.add(0, 0);
  a.add(1, 1);
  auto spans = extract_phrases(a, 4);
  std::vector<PhraseSpan> expect = {{0, 1, 0, 1}, {0, 2, 0, 2}, {1, 2, 1, 2}};
  CHECK(spans == expect);
}

TEST_CASE("extraction of an empty alignment is empty") {
  CHECK(extract_phrases(AlignmentMatrix(3, 2), 4).empty());
}

TEST_CASE("extraction matches brute force on random alignments") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    auto a = random_alignment(rng);
    for (int max_len : {1, 2, 4}) {
      auto got = extract_phrases(a, max_len);
      auto want = oracle::extract(a, max_len);
      REQUIRE(got == std::vector<PhraseSpan>(want.begin(), want.end()));
    }
  }
}

TEST_CASE("alignment matrix bounds") {
  AlignmentMatrix a(2, 2);
  CHECK_THROWS_AS(a.add(2, 0), Error);
  a.add(1, 0);
  a.add(1, 0);
  CHECK(a.links().size() == 1);
}

TEST_CASE("IBM-1 on one pair converges to the only target") {
  std::vector<SentencePair> pairs = {{{3}, {3}}};
  auto lex = train_ibm1(pairs, 1);
  CHECK(lex.prob(3, 3) == doctest::Approx(1.0));
}

TEST_CASE("IBM-1 matches brute-force EM") {
  std::mt19937_64 rng(11);
  std::vector<std::vector<SentencePair>> corpora = {{{{3, 4}, {5, 6}}, {{3}, {5}}}};
  for (int i = 0; i < 5; ++i) corpora.push_back(random_pairs(rng, 8, 5, 4));
  for (const auto& pairs : corpora) {
    for (int iters : {1, 2, 5}) {
      auto lex = train_ibm1(pairs, iters);
      auto want = oracle::ibm1(pairs, iters);
      std::size_t n = 0;
      for (const auto& [e, row] : want)
        for (const auto& [f, p] : row) {
          CHECK(std::abs(lex.prob(e, f) - p) < 1e-10);
          ++n;
        }
      CHECK(lex.size() == n);
    }
  }
}

TEST_CASE("IBM-1 distributions sum to one") {
  std::mt19937_64 rng(3);
  auto pairs = random_pairs(rng, 30, 8, 6);
  auto lex = train_ibm1(pairs, 5);
  std::set<WordId> es{kNullWord};
  for (const auto& p : pairs) es.insert(p.src.begin(), p.src.end());
  for (WordId e : es) CHECK(std::abs(lex.total(e) - 1.0) < 1e-9);
}

TEST_CASE("symmetrized alignment lies between intersection and union") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    auto a = random_alignment(rng);
    AlignmentMatrix b(a.src_len(), a.tgt_len());
    std::bernoulli_distribution link(0.3);
    for (int s = 0; s < a.src_len(); ++s)
      for (int t = 0; t < a.tgt_len(); ++t)
        if (link(rng)) b.add(s, t);
    auto sym = symmetrize(a, b);
    for (auto [s, t] : a.links())
      if (b.contains(s, t)) CHECK(sym.contains(s, t));
    for (auto [s, t] : sym.links()) CHECK((a.contains(s, t) || b.contains(s, t)));
  }
}

TEST_CASE("phrase probabilities are relative frequencies") {
  auto sv = letters("s", 1), tv = letters("t", 2);
  std::vector<SentencePair> pairs;
  WordAlignment al;
  for (int i = 0; i < 4; ++i) {
    pairs.push_back({{3}, {i < 3 ? 3 : 4}});
    AlignmentMatrix a(1, 1);
    a.add(0, 0);
    al.alignments.push_back(a);
  }
  al.forward = train_ibm1(pairs, 1);
  PhraseTableConfig cfg;
  cfg.min_count = 1;
  auto table = build_phrase_table(pairs, al, sv, tv, cfg);
  const auto* opts = table.find(Sentence{3});
  REQUIRE(opts);
  REQUIRE(opts->size() == 2);
  CHECK((*opts)[0].target == Sentence{3});
  CHECK((*opts)[0].p_fwd == doctest::Approx(0.75));
  CHECK((*opts)[1].p_fwd == doctest::Approx(0.25));
  CHECK((*opts)[0].count == 3);

  cfg.min_count = 2;
  auto pruned = build_phrase_table(pairs, al, sv, tv, cfg);
  REQUIRE(pruned.find(Sentence{3}));
  CHECK(pruned.find(Sentence{3})->size() == 1);
  CHECK(pruned.find(Sentence{3}, Sentence{4}) == nullptr);
}

TEST_CASE("phrase table counts match a brute-force count and divide") {
  std::mt19937_64 rng(21);
  auto pairs = random_pairs(rng, 50, 4, 4);
  auto sv = letters("s", 4), tv = letters("t", 4);
  WordAlignment al;
  al.forward = train_ibm1(pairs, 2);
  std::map<std::pair<Sentence, Sentence>, int> counts;
  for (const auto& p : pairs) {
    std::uniform_int_distribution<int> sd(0, static_cast<int>(p.src.size()) - 1), td(0, static_cast<int>(p.tgt.size()) - 1);
    AlignmentMatrix a(static_cast<int>(p.src.size()), static_cast<int>(p.tgt.size()));
    for (int k = 0; k < 3; ++k) a.add(sd(rng), td(rng));
    al.alignments.push_back(a);
    for (const auto& s : oracle::extract(a, 3)) {
      ++counts[{Sentence(p.src.begin() + s.src_begin, p.src.begin() + s.src_end),
                Sentence(p.tgt.begin() + s.tgt_begin, p.tgt.begin() + s.tgt_end)}];
    }
  }
  for (int min_count : {1, 2, 3}) {
    PhraseTableConfig cfg;
    cfg.max_phrase_len = 3;
    cfg.min_count = min_count;
    cfg.max_targets = 100000;
    auto table = build_phrase_table(pairs, al, sv, tv, cfg);
    std::map<Sentence, double> src_total, tgt_total;
    std::size_t kept = 0;
    for (const auto& [k, c] : counts) {
      if (c < min_count) continue;
      src_total[k.first] += c;
      tgt_total[k.second] += c;
      ++kept;
    }
    CHECK(table.size() == kept);
    for (const auto& [k, c] : counts) {
      const auto* e = table.find(k.first, k.second);
      if (c < min_count) {
        CHECK(e == nullptr);
        continue;
      }
      REQUIRE(e);
      CHECK(e->count == c);
      CHECK(std::abs(e->p_fwd - c / src_total[k.first]) < 1e-12);
      CHECK(std::abs(e->p_inv - c / tgt_total[k.second]) < 1e-12);
      CHECK(e->lex_fwd > 0.0);
      CHECK(e->lex_fwd <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("phrase tables normalize and min_count only removes entries") {
  std::mt19937_64 rng(4);
  auto pairs = random_pairs(rng, 200, 6, 5);
  auto sv = letters("s", 6), tv = letters("t", 6);
  PhraseTableConfig cfg;
  cfg.max_targets = 100000;
  std::vector<PhraseTable> tables;
  for (int mc = 1; mc <= 4; ++mc) {
    cfg.min_count = mc;
    tables.push_back(train_phrase_table(pairs, sv, tv, cfg));
  }
  for (const auto& t : tables) {
    std::map<Sentence, double> inv;
    for (const auto& s : t.sources()) {
      double sum = 0.0;
      for (const auto& e : *t.find(s)) {
        sum += e.p_fwd;
        inv[e.target] += e.p_inv;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    for (const auto& [tgt, sum] : inv) CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  for (std::size_t i = 1; i < tables.size(); ++i) {
    for (const auto& s : tables[i].sources())
      for (const auto& e : *tables[i].find(s)) CHECK(tables[i - 1].find(s, e.target) != nullptr);
    CHECK(tables[i].size() <= tables[i - 1].size());
  }
}

TEST_CASE("phrase table save and load") {
  Toy toy;
  test::TempDir dir("pt");
  toy.table->save(dir / "t.txt");
  auto back = PhraseTable::load(dir / "t.txt", toy.sv, toy.tv);
  CHECK(back.size() == toy.table->size());
  CHECK(back.has_lexical());
  for (const auto& s : toy.table->sources()) {
    const auto& a = *toy.table->find(s);
    const auto& b = *back.find(s);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].target == b[i].target);
      CHECK(a[i].p_fwd == doctest::Approx(b[i].p_fwd).epsilon(1e-12));
      CHECK(a[i].lex_inv == doctest::Approx(b[i].lex_inv).epsilon(1e-12));
      CHECK(a[i].count == b[i].count);
    }
  }
  test::TempDir dir2("pt2");
  back.save(dir2 / "t.txt");
  auto text = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(text(dir / "t.txt") == text(dir2 / "t.txt"));
}

TEST_CASE("score with all weights zero is zero") {
  Toy toy;
  LogLinearWeights zero;
  for (std::size_t i = 0; i < LogLinearWeights::names().size(); ++i) zero.at(i) = 0.0;
  auto m = toy.model(3, zero);
  Sentence src = toy.sv->encode(tokenize("a b c"));
  Derivation d = {{0, 1, toy.tv->encode(tokenize("x")), false}, {1, 3, toy.tv->encode(tokenize("z")), false}};
  CHECK(smt_score(m, src, d) == 0.0);
}

TEST_CASE("monotone derivations have no distortion cost") {
  Toy toy;
  LogLinearWeights w, w0;
  w0.distortion = 0.0;
  Sentence src = toy.sv->encode(tokenize("a b c"));
  Derivation d = {{0, 1, toy.tv->encode(tokenize("x")), false},
                  {1, 2, toy.tv->encode(tokenize("y")), false},
                  {2, 3, toy.tv->encode(tokenize("z")), false}};
  CHECK(smt_score(toy.model(3, w), src, d) == smt_score(toy.model(3, w0), src, d));
}

TEST_CASE("score of a swapped two-phrase derivation by hand") {
  Toy toy;
  LogLinearWeights w;
  auto m = toy.model(3, w);
  Sentence src = toy.sv->encode(tokenize("c a"));
  // a -> y first, then c -> z: jumps |1-0| and |0-2|.
  Derivation d = {{1, 2, toy.tv->encode(tokenize("y")), false}, {0, 1, toy.tv->encode(tokenize("z")), false}};
  double want = 0.0;
  want += w.p_fwd * std::log(0.3) + w.p_inv * std::log(0.2) + w.lex_fwd * std::log(0.3) + w.lex_inv * std::log(0.3);
  want += w.p_fwd * std::log(1.0) + w.p_inv * std::log(0.6) + w.lex_fwd * std::log(0.9) + w.lex_inv * std::log(0.8);
  want += w.lm * toy.lm->score(toy.tv->encode(tokenize("y z")));
  want += w.distortion * -(1.0 + 2.0);
  want += w.word * -2.0 + w.phrase * -2.0;
  CHECK(smt_score(m, src, d) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("score is linear in the weights") {
  Toy toy;
  Sentence src = toy.sv->encode(tokenize("d b a"));
  Derivation d = {{0, 1, {Vocabulary::kUnk}, true},
                  {2, 3, toy.tv->encode(tokenize("x")), false},
                  {1, 2, toy.tv->encode(tokenize("z")), false}};
  LogLinearWeights w;
  const double base = smt_score(toy.model(-1, w), src, d);
  for (double alpha : {0.5, 2.0, 3.7}) {
    CHECK(smt_score(toy.model(-1, w.scaled(alpha)), src, d) == doctest::Approx(alpha * base).epsilon(1e-12));
  }
}

TEST_CASE("unknown phrases are rejected") {
  Toy toy;
  auto m = toy.model(3);
  Sentence src = toy.sv->encode(tokenize("a"));
  CHECK_THROWS_WITH_AS(smt_score(m, src, {{0, 1, toy.tv->encode(tokenize("w")), false}}), "unknown phrase", Error);
  // a has options, so it cannot be passed through.
  CHECK_THROWS_WITH_AS(smt_score(m, src, {{0, 1, {Vocabulary::kUnk}, true}}), "unknown phrase", Error);
}

TEST_CASE("decoder equals exhaustive search on every short source") {
  Toy toy;
  for (int limit : {0, 1, 3, -1}) {
    auto m = toy.model(limit);
    for (const auto& src : all_sources(4, 4)) {
      auto got = decode(m, src);
      auto want = oracle::exhaustive_decode(m, src);
      REQUIRE(want.found);
      INFO("limit ", limit, " source ", toy.sv->join(src));
      CHECK(got.target == want.target);
      CHECK(got.score == want.score);
      CHECK(smt_score(m, src, got.derivation) == got.score);
    }
  }
}

TEST_CASE("scaling the weights keeps the argmax") {
  Toy toy;
  for (const auto& src : all_sources(4, 3)) {
    auto a = decode(toy.model(3), src);
    auto b = decode(toy.model(3, LogLinearWeights{}.scaled(4.0)), src);
    CHECK(a.target == b.target);
  }
}

TEST_CASE("unknown words are copied through") {
  Toy toy;
  auto m = toy.model(3);
  Sentence src = {Vocabulary::kUnk};
  auto t = decode(m, src);
  CHECK(t.target == Sentence{Vocabulary::kUnk});
  CHECK(t.surface == Tokens{"<unk>"});
  Sentence d = toy.sv->encode(tokenize("d"));
  auto td = decode(m, d);
  CHECK(td.surface == Tokens{"d"});
  REQUIRE(td.derivation.size() == 1);
  CHECK(td.derivation[0].passthrough);
}

TEST_CASE("a single phrase covering the sentence is used") {
  auto sv = std::make_shared<const Vocabulary>(Vocabulary::from_words({"p", "q", "r"}));
  auto tv = std::make_shared<const Vocabulary>(Vocabulary::from_words({"u", "v"}));
  auto table = std::make_shared<PhraseTable>(sv, tv, true, 3);
  table->add(sv->encode(tokenize("p q r")), PhraseEntry{tv->encode(tokenize("u v")), 1.0, 1.0, 1.0, 1.0, 1});
  table->sort();
  auto lm = std::make_shared<const NGramLM>(NGramLM::train(make_corpus("y", test::lines({"u v"}), tv), 2));
  DecoderConfig dc;
  dc.distortion_limit = 0;
  auto m = make_smt(table, lm, {}, dc);
  auto t = decode(m, sv->encode(tokenize("p q r")));
  CHECK(tv->join(t.target) == "u v");
  CHECK(t.derivation.size() == 1);
}

TEST_CASE("n-best lists are sorted and start with the 1-best") {
  Toy toy;
  auto m = toy.model(3);
  for (const auto& src : all_sources(4, 3)) {
    auto nb = decode_nbest(m, src, 5);
    REQUIRE(!nb.empty());
    CHECK(nb[0].target == decode(m, src).target);
    for (std::size_t i = 1; i < nb.size(); ++i) CHECK(nb[i - 1].score >= nb[i].score);
  }
}

TEST_CASE("threaded decoding equals sequential") {
  Toy toy;
  auto m = toy.model(3);
  auto srcs = all_sources(4, 3);
  auto a = decode_all(m, srcs, 1), b = decode_all(m, srcs, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].target == b[i].target);
    CHECK(a[i].score == b[i].score);
  }
}

TEST_CASE("SMT0 from an induced table") {
  auto sv = letters("s", 5), tv = letters("t", 5);
  WordTranslationTable wt;
  wt.src_vocab = sv;
  wt.tgt_vocab = tv;
  wt.k = 2;
  wt.entries.resize(sv->size());
  for (WordId s = 3; s < 8; ++s) wt.entries[s] = {{s, 0.8, 0.7}, {s == 7 ? 3 : s + 1, 0.1, 0.05}};
  auto lm = std::make_shared<const NGramLM>(
      NGramLM::train(make_corpus("y", test::lines({"t0 t1 t2", "t3 t4", "t2 t0"}), tv), 2));
  LogLinearWeights w;
  DecoderConfig dc;
  dc.distortion_limit = 0;
  auto m = init_smt(wt, lm, w, dc);
  CHECK_FALSE(m.table->has_lexical());
  CHECK(m.weights.lex_fwd == 0.0);
  CHECK(m.weights.lex_inv == 0.0);
  for (const auto& s : m.table->sources()) {
    CHECK(s.size() == 1);
    const auto& opts = *m.table->find(s);
    CHECK(opts.size() <= 2);
    for (const auto& e : opts) CHECK(e.target.size() == 1);
    CHECK(opts[0].p_fwd == doctest::Approx(0.8));
    CHECK(opts[0].p_inv == doctest::Approx(0.7));
  }
  // One word, no reordering: the best option under the hand-computed score.
  for (WordId s = 3; s < 8; ++s) {
    double best = -INFINITY;
    WordId arg = -1;
    for (const auto& e : wt.entries[s]) {
      double v = w.p_fwd * std::log(e.forward) + w.p_inv * std::log(e.inverse) +
                 w.lm * lm->score(Sentence{e.target}) - w.word - w.phrase;
      if (v > best) {
        best = v;
        arg = e.target;
      }
    }
    auto t = decode(m, Sentence{s});
    CHECK(t.target == Sentence{arg});
    CHECK(t.score == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("weights file round trip and errors") {
  test::TempDir dir("w");
  LogLinearWeights w;
  w.lm = 0.125;
  w.oov = -3.5;
  w.save(dir / "w.txt");
  auto back = LogLinearWeights::load(dir / "w.txt");
  for (std::size_t i = 0; i < LogLinearWeights::names().size(); ++i) CHECK(back.at(i) == w.at(i));
  {
    std::ofstream out(dir / "bad.txt");
    out << "p_fwd 1\nbogus 2\n";
  }
  CHECK_THROWS_AS(LogLinearWeights::load(dir / "bad.txt"), Error);
  {
    std::ofstream out(dir / "short.txt");
    out << "p_fwd 1\n";
  }
  CHECK_THROWS_AS(LogLinearWeights::load(dir / "short.txt"), Error);
}

TEST_CASE("LM vocabulary must match the table") {
  Toy toy;
  auto other = std::make_shared<const NGramLM>(
      NGramLM::train(make_corpus("y", test::lines({"q r"}), test::vocab_of(test::lines({"q r"}))), 2));
  CHECK_THROWS_AS(make_smt(toy.table, other), Error);
}
