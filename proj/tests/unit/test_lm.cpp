#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "unmt/lm.hpp"

using namespace unmt;

namespace {

double context_mass(const NGramLM& lm, std::span<const WordId> ctx) {
  double sum = 0.0;
  for (WordId w = 0; w < static_cast<WordId>(lm.vocab().size()); ++w) sum += std::exp(lm.log_prob(ctx, w));
  return sum;
}

const std::vector<Tokens> kToy = test::lines({
    "the cat sat on the mat", "the dog sat on the log", "a cat saw a dog", "the cat ate",
    "a dog ate the cat food", "on the mat sat a cat", "the log", "cat cat cat"});

}  // namespace

TEST_CASE("unigram maximum-likelihood counts") {
  auto corpus = test::corpus_of(test::lines({"a a b"}));
  auto lm = NGramLM::train(corpus, 1);
  WordId a = *corpus.vocab->find("a"), b = *corpus.vocab->find("b");
  // Over the word tokens: 2/3 and 1/3.
  const double ca = static_cast<double>(lm.count(Sentence{a}));
  const double cb = static_cast<double>(lm.count(Sentence{b}));
  CHECK(ca / (ca + cb) == doctest::Approx(2.0 / 3.0));
  CHECK(cb / (ca + cb) == doctest::Approx(1.0 / 3.0));
  // The end marker is a predicted event as well.
  CHECK(lm.ml_probability({}, a) == doctest::Approx(2.0 / 4.0));
}

TEST_CASE("bigram Witten-Bell value on one sentence") {
  auto corpus = test::corpus_of(test::lines({"a b"}));
  auto lm = NGramLM::train(corpus, 2);
  WordId a = *corpus.vocab->find("a"), b = *corpus.vocab->find("b");
  // Vocabulary: <s> </s> <unk> a b; unigram events a, b, </s> (3 tokens, 3 types),
  // uniform floor over the 4 predictable entries.
  const double p_uni_b = (1.0 + 3.0 * 0.25) / (3.0 + 3.0);
  // Context "a": one token, one follower type.
  const double expected = (1.0 + 1.0 * p_uni_b) / (1.0 + 1.0);
  CHECK(std::exp(lm.log_prob(Sentence{a}, b)) == doctest::Approx(expected).epsilon(1e-12));
  // Unseen follower of "a" gets T/(c+T) of the lower-order mass.
  const double p_uni_unk = (0.0 + 3.0 * 0.25) / 6.0;
  CHECK(std::exp(lm.log_prob(Sentence{a}, Vocabulary::kUnk)) == doctest::Approx(0.5 * p_uni_unk).epsilon(1e-12));
}

TEST_CASE("every observed context is normalized") {
  auto corpus = test::corpus_of(kToy);
  for (int order : {1, 2, 3, 4}) {
    auto lm = NGramLM::train(corpus, order);
    CHECK(context_mass(lm, {}) == doctest::Approx(1.0).epsilon(1e-9));
    for (int len = 1; len < order; ++len)
      for (const auto& ctx : lm.observed_contexts(len)) CHECK(context_mass(lm, ctx) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("empty sentence scores only the end marker") {
  auto corpus = test::corpus_of(kToy);
  auto lm = NGramLM::train(corpus, 3);
  CHECK(lm.score({}) == lm.log_prob(Sentence{Vocabulary::kBos}, Vocabulary::kEos));
}

TEST_CASE("unknown words score below a frequent sentence") {
  auto corpus = test::corpus_of(kToy);
  auto lm = NGramLM::train(corpus, 3);
  auto known = corpus.vocab->encode(tokenize("the cat sat"));
  Sentence unknown{Vocabulary::kUnk, Vocabulary::kUnk, Vocabulary::kUnk};
  CHECK(lm.score(unknown) < lm.score(known));
  // Ids beyond the vocabulary behave like the unknown word.
  CHECK(lm.score(Sentence{9999}) == lm.score(Sentence{Vocabulary::kUnk}));
}

TEST_CASE("incremental scoring equals whole-sentence scoring exactly") {
  auto corpus = test::corpus_of(kToy);
  for (int order : {1, 2, 3, 5}) {
    auto lm = NGramLM::train(corpus, order);
    for (const auto& s : corpus.sentences) {
      auto st = lm.begin_state();
      double inc = 0.0;
      for (WordId w : s) inc += lm.score_word(st, w);
      inc += lm.score_word(st, Vocabulary::kEos);
      CHECK(inc == lm.score(s));
      CHECK(std::isfinite(lm.score(s)));
    }
  }
}

TEST_CASE("ARPA round trip preserves probabilities") {
  auto corpus = test::corpus_of(kToy);
  auto lm = NGramLM::train(corpus, 3);
  test::TempDir dir("arpa");
  lm.save_arpa(dir / "lm.arpa");
  auto back = NGramLM::load_arpa(dir / "lm.arpa", corpus.vocab);
  CHECK(back.order() == 3);
  for (const auto& s : corpus.sentences) CHECK(back.score(s) == doctest::Approx(lm.score(s)).epsilon(1e-8));
  auto odd = corpus.vocab->encode(tokenize("mat the on log cat"));
  CHECK(back.score(odd) == doctest::Approx(lm.score(odd)).epsilon(1e-8));
}

TEST_CASE("order must be within 1..5") {
  auto corpus = test::corpus_of(kToy);
  CHECK_THROWS_AS(NGramLM::train(corpus, 0), Error);
  CHECK_THROWS_AS(NGramLM::train(corpus, 6), Error);
}
