#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "unmt/log.hpp"
#include "unmt/trainer/config.hpp"
#include "unmt/trainer/em.hpp"

using namespace unmt;
using namespace unmt::trainer;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The toy config with fewer samples and steps.
EMConfig tiny() {
  EMConfig c = load_config(UNMT_TOY_CONFIG);
  c.sample_size = 300;
  c.init_phase_a_steps = 60;
  c.init_phase_b_steps = 40;
  c.phase_a_steps = 30;
  c.phase_b_steps = 30;
  c.max_iterations = 1;
  // Too few steps to anneal; a decayed rate leaves NMT0 producing no
  // repeated phrase pairs at all.
  c.lr_final_scale = 1.0;
  return c;
}

struct Fixture {
  EMConfig config = tiny();
  EMCorpora corpora = prepare_corpora(config);
  Initialization init = initialize(corpora, config);
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

struct ToyPair {
  VocabPtr sv = std::make_shared<const Vocabulary>(Vocabulary::from_words({"a", "b", "c", "d"}));
  VocabPtr tv = std::make_shared<const Vocabulary>(Vocabulary::from_words({"x", "y", "z", "w"}));
  std::shared_ptr<const NGramLM> lm = std::make_shared<const NGramLM>(
      NGramLM::train(make_corpus("y", test::lines({"x y", "z", "w", "x y z w"}), tv), 2));

  Sentence s(const std::string& text) const { return sv->encode(tokenize(text)); }
  Sentence t(const std::string& text) const { return tv->encode(tokenize(text)); }
};

}  // namespace

TEST_CASE("config parsing") {
  auto c = parse_config("seed = 5\n# comment\nlambda = 3.5  # trailing\n\nwarmup = word\nenable_r2l = true\n");
  CHECK(c.seed == 5);
  CHECK(c.induce.lambda == 3.5);
  CHECK(c.warmup == Warmup::kWordByWord);
  CHECK(c.enable_r2l);
  CHECK(c.sample_size == EMConfig{}.sample_size);
  CHECK_THROWS_WITH_AS(parse_config("seed = 1\nbogus = 2\n"), "config line 2: unknown key 'bogus'", Error);
  CHECK_THROWS_WITH_AS(parse_config("seed 1\n"), "config line 1: expected key = value", Error);
  CHECK_THROWS_AS(parse_config("seed = x\n"), Error);
  CHECK_THROWS_AS(parse_config("sample_size = 0\n"), Error);
  CHECK_THROWS_AS(parse_config("noise_rate = 1.5\n"), Error);
}

TEST_CASE("config formatting round trips") {
  EMConfig c;
  c.seed = 42;
  c.induce.lambda = 12.5;
  c.weights.lm = 0.75;
  c.optimizer.kind = nmt::OptimizerKind::kSgd;
  const auto text = format_config(c);
  CHECK(format_config(parse_config(text)) == text);
  for (const auto& key : config_keys()) CHECK(text.find(key + " = ") != std::string::npos);
}

TEST_CASE("pseudo corpora dedup within an origin only") {
  PseudoCorpus pc{Direction::kXToY, {}};
  pc.add({3, 4}, {5}, Origin::kSmtDenoised);
  pc.add({3, 4}, {5}, Origin::kSmtDenoised);
  pc.add({3, 4}, {5}, Origin::kNmtBacktranslated);
  pc.add({3}, {5}, Origin::kSmtDenoised);
  pc.dedup();
  CHECK(pc.size() == 3);
  CHECK(pc.count(Origin::kSmtDenoised) == 2);
  CHECK(pc.pairs[0].src == Sentence{3, 4});

  PseudoCorpus a{Direction::kXToY, {}}, b{Direction::kXToY, {}};
  a.add({3}, {4}, Origin::kNmtBacktranslated);
  a.add({3}, {4}, Origin::kNmtBacktranslated);
  b.add({3}, {4}, Origin::kSmtDenoised);
  b.add({5}, {6}, Origin::kSmtDenoised);
  auto m = merge(a, b);
  CHECK(m.size() == 3);
  CHECK(m.count(Origin::kNmtBacktranslated) == 1);
  CHECK(m.count(Origin::kSmtDenoised) == 2);
}

TEST_CASE("pseudo corpus TSV round trip") {
  ToyPair p;
  PseudoCorpus pc{Direction::kXToY, {}};
  pc.add(p.s("a b"), p.t("x y"), Origin::kSmtDenoised);
  pc.add(p.s("c"), p.t("z w"), Origin::kNmtBacktranslated);
  pc.add(p.s("d"), p.t("w"), Origin::kR2L);
  test::TempDir dir("tsv");
  pc.save_tsv(dir / "p.tsv", *p.sv, *p.tv);
  CHECK(slurp(dir / "p.tsv") == "a b\tx y\tsmt-denoised\nc\tz w\tnmt-backtranslated\nd\tw\tr2l\n");
  auto back = PseudoCorpus::load_tsv(dir / "p.tsv", Direction::kXToY, *p.sv, *p.tv);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.pairs[i].src == pc.pairs[i].src);
    CHECK(back.pairs[i].tgt == pc.pairs[i].tgt);
    CHECK(back.pairs[i].origin == pc.pairs[i].origin);
  }
  CHECK(parse_origin("r2l") == Origin::kR2L);
  CHECK_THROWS_AS(parse_origin("gold"), Error);
}

TEST_CASE("count pruning drops a pair seen once and keeps one seen five times") {
  ToyPair p;
  EMConfig c;
  c.phrase.min_count = 2;
  PseudoCorpus pc{Direction::kXToY, {}};
  for (int i = 0; i < 20; ++i) pc.add(p.s("a b"), p.t("x y"), Origin::kNmtBacktranslated);
  pc.add(p.s("c"), p.t("z"), Origin::kNmtBacktranslated);
  for (int i = 0; i < 5; ++i) pc.add(p.s("d"), p.t("w"), Origin::kNmtBacktranslated);
  auto m = train_smt(pc, p.sv, p.lm, c);
  CHECK(m.table->find(p.s("c"), p.t("z")) == nullptr);
  REQUIRE(m.table->find(p.s("d"), p.t("w")) != nullptr);
  CHECK(m.table->find(p.s("d"), p.t("w"))->count == 5);
  CHECK(m.table->find(p.s("a b"), p.t("x y")) != nullptr);
}

TEST_CASE("an SMT model from pruned-away data is an error") {
  ToyPair p;
  EMConfig c;
  c.phrase.min_count = 1000;
  PseudoCorpus pc{Direction::kXToY, {}};
  pc.add(p.s("a b"), p.t("x y"), Origin::kNmtBacktranslated);
  CHECK_THROWS_WITH_AS(train_smt(pc, p.sv, p.lm, c), doctest::Contains("phrase table empty after pruning"), Error);
}

TEST_CASE("identity pseudo data gives an identity table") {
  auto v = std::make_shared<const Vocabulary>(Vocabulary::from_words({"a", "b", "c", "d"}));
  auto lm = std::make_shared<const NGramLM>(NGramLM::train(make_corpus("x", test::lines({"a b c d"}), v), 2));
  PseudoCorpus pc{Direction::kXToY, {}};
  for (const char* s : {"a b", "b c", "c d", "d a", "a c", "b d"})
    for (int i = 0; i < 3; ++i) pc.add(v->encode(tokenize(s)), v->encode(tokenize(s)), Origin::kNmtBacktranslated);
  EMConfig c;
  auto m = train_smt(pc, v, lm, c);
  for (const char* w : {"a", "b", "c", "d"}) {
    Sentence s = v->encode(tokenize(w));
    const auto* opts = m.table->find(s);
    REQUIRE(opts);
    REQUIRE(opts->size() == 1);
    CHECK((*opts)[0].target == s);
    CHECK((*opts)[0].count >= c.phrase.min_count);
    CHECK((*opts)[0].p_fwd == doctest::Approx(1.0));
  }
}

TEST_CASE("reversal is an involution") {
  CHECK(reversed({3, 4, 5}) == Sentence{5, 4, 3});
  CHECK(reversed({}).empty());
  CHECK(reversed(reversed({7, 3, 9, 9})) == Sentence{7, 3, 9, 9});
}

TEST_CASE("samples are deterministic per iteration") {
  auto& f = fixture();
  auto a = draw_samples(f.corpora, 100, 5, 1), b = draw_samples(f.corpora, 100, 5, 1);
  auto c = draw_samples(f.corpora, 100, 5, 2);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.x.size() == 100);
  CHECK(a.x != c.x);
  auto all = draw_samples(f.corpora, f.corpora.x.size() + 10, 5, 1);
  CHECK(all.x == f.corpora.x.sentences);
}

TEST_CASE("a loop with no iterations reports SMT0 and NMT0") {
  auto& f = fixture();
  EMConfig c = f.config;
  c.max_iterations = 0;
  auto s = run_em(f.corpora, f.init, c);
  REQUIRE(s.history.size() == 4);
  CHECK(format_report(s.history).substr(0, 9) == "SMT0\tx2y\t");
  CHECK(s.history[2].step == "NMT0");
  CHECK(s.history[3].direction == Direction::kYToX);

  SUBCASE("zero-step M-step leaves the NMT models unchanged") {
    EMConfig z = c;
    z.phase_a_steps = 0;
    z.phase_b_steps = 0;
    s.t = 1;
    auto before_xy = s.nmt_xy->params(), before_yx = s.nmt_yx->params();
    auto samples = draw_samples(f.corpora, 200, c.seed, 1);
    auto log = m_step(s, samples, f.init, z);
    CHECK(s.nmt_xy->params() == before_xy);
    CHECK(s.nmt_yx->params() == before_yx);
    // Union = back-translations + denoised data, deduplicated per origin.
    CHECK(log.union_xy.size() ==
          log.union_xy.count(Origin::kNmtBacktranslated) + log.union_xy.count(Origin::kSmtDenoised));
    CHECK(log.union_xy.count(Origin::kSmtDenoised) == log.denoised_xy.size());
    CHECK(log.union_xy.size() <= 400);
    CHECK(s.data_xy.size() == log.union_xy.size());
  }

  SUBCASE("R2L without fine-tuning steps leaves the models unchanged") {
    EMConfig z = c;
    z.r2l_aux_steps = 20;
    z.r2l_finetune_steps = 0;
    auto before = s.nmt_xy->params();
    const auto n = s.data_xy.size();
    r2l_regularize(s, draw_samples(f.corpora, 100, c.seed, 1), z);
    CHECK(s.nmt_xy->params() == before);
    CHECK(s.data_xy.size() >= n);
  }
}

TEST_CASE("runs are reproducible and E-step data rebuilds the tables") {
  auto& f = fixture();
  test::TempDir a("em_a"), b("em_b");
  auto sa = run_em(f.corpora, f.init, f.config, a.path);
  auto sb = run_em(f.corpora, f.init, f.config, b.path);
  CHECK(format_report(sa.history) == format_report(sb.history));
  CHECK(slurp(a / "report.tsv") == slurp(b / "report.tsv"));
  CHECK(load_report(a / "report.tsv").size() == 8);
  for (const char* file : {"step_1/phrase_table.x2y.txt", "step_1/phrase_table.y2x.txt", "step_0/nmt.x2y.bin"}) {
    INFO(file);
    CHECK(slurp(a.path / file) == slurp(b.path / file));
  }

  auto data = PseudoCorpus::load_tsv(a.path / "step_1/estep.x2y.tsv", Direction::kXToY, *f.corpora.x.vocab,
                                     *f.corpora.y.vocab);
  auto smt = train_smt(data, f.corpora.x.vocab, f.init.lm_y, f.config);
  test::TempDir c("em_c");
  smt.table->save(c / "t.txt");
  CHECK(slurp(c / "t.txt") == slurp(a.path / "step_1/phrase_table.x2y.txt"));
}

TEST_CASE("report round trip") {
  std::vector<ReportRow> rows = {{"SMT0", Direction::kXToY, 12.3456}, {"NMT0", Direction::kYToX, 100.0}};
  test::TempDir dir("rep");
  save_report(dir / "r.tsv", rows);
  CHECK(slurp(dir / "r.tsv") == "SMT0\tx2y\t12.35\nNMT0\ty2x\t100.00\n");
  auto back = load_report(dir / "r.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].step == "NMT0");
  CHECK(back[1].bleu == 100.0);
}
