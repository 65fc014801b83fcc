#include <benchmark/benchmark.h>

#include <random>

#include "unmt/embeddings.hpp"
#include "unmt/harness/bleu.hpp"
#include "unmt/lm.hpp"
#include "unmt/nmt/model.hpp"
#include "unmt/nmt/train.hpp"
#include "unmt/smt/alignment.hpp"
#include "unmt/smt/model.hpp"

using namespace unmt;

namespace {

VocabPtr words(const std::string& prefix, int n) {
  std::vector<std::string> w;
  for (int i = 0; i < n; ++i) w.push_back(prefix + std::to_string(i));
  return std::make_shared<const Vocabulary>(Vocabulary::from_words(w));
}

std::vector<Sentence> sentences(std::mt19937_64& rng, int n, int vocab, int lo, int hi) {
  std::uniform_int_distribution<int> len(lo, hi), w(Vocabulary::kNumSpecial, Vocabulary::kNumSpecial + vocab - 1);
  std::vector<Sentence> out(static_cast<std::size_t>(n));
  for (auto& s : out)
    for (int i = len(rng); i > 0; --i) s.push_back(w(rng));
  return out;
}

EmbeddingMatrix random_emb(const VocabPtr& v, int dim, std::uint64_t seed) {
  EmbeddingMatrix e{v, RowMatrix::Zero(static_cast<Eigen::Index>(v->size()), dim)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (Eigen::Index r = Vocabulary::kNumSpecial; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < dim; ++c) e.values(r, c) = g(rng);
  return e;
}

// SMT0-like model: 500-word induced table with a trigram LM.
struct SmtSetup {
  smt::SMTModel model;
  std::vector<Sentence> inputs;

  SmtSetup() {
    std::mt19937_64 rng(1);
    auto sv = words("s", 500), tv = words("t", 500);
    auto table = induce_translation_table(random_emb(sv, 32, 2), random_emb(tv, 32, 3), {});
    std::vector<Tokens> lines;
    for (const auto& s : sentences(rng, 5000, 500, 3, 15)) lines.push_back(tv->decode(s));
    auto lm = std::make_shared<const NGramLM>(NGramLM::train(make_corpus("t", lines, tv), 3));
    model = smt::init_smt(table, lm);
    inputs = sentences(rng, 50, 500, 10, 20);
  }
};

void BM_SmtDecode(benchmark::State& state) {
  static SmtSetup s;
  auto m = s.model;
  m.decoder.distortion_limit = static_cast<int>(state.range(0));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(smt::decode(m, s.inputs[i++ % s.inputs.size()]));
}
BENCHMARK(BM_SmtDecode)->Arg(0)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Ibm1(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::vector<smt::SentencePair> pairs;
  auto src = sentences(rng, static_cast<int>(state.range(0)), 1000, 5, 20);
  auto tgt = sentences(rng, static_cast<int>(state.range(0)), 1000, 5, 20);
  for (std::size_t i = 0; i < src.size(); ++i) pairs.push_back({src[i], tgt[i]});
  for (auto _ : state) benchmark::DoNotOptimize(smt::train_ibm1(pairs, 5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Ibm1)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_NmtTrainStep(benchmark::State& state) {
  std::mt19937_64 rng(5);
  auto sv = words("s", 1000), tv = words("t", 1000);
  nmt::NMTModel m(sv, tv, {});
  const int b = static_cast<int>(state.range(0));
  auto batch = m.make_batch(sentences(rng, b, 1000, 5, 20), sentences(rng, b, 1000, 5, 20));
  for (auto _ : state) benchmark::DoNotOptimize(nmt::train_step(m, batch, 1e-3));
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_NmtTrainStep)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_NmtGreedy(benchmark::State& state) {
  std::mt19937_64 rng(6);
  auto sv = words("s", 1000), tv = words("t", 1000);
  nmt::NMTModel m(sv, tv, {});
  auto xs = sentences(rng, 64, 1000, 5, 20);
  for (auto _ : state) benchmark::DoNotOptimize(m.greedy_batch(xs, 30, 64));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_NmtGreedy)->Unit(benchmark::kMillisecond);

void BM_Bleu(benchmark::State& state) {
  std::mt19937_64 rng(7);
  auto v = words("w", 2000);
  std::vector<Tokens> hyp, ref;
  for (const auto& s : sentences(rng, static_cast<int>(state.range(0)), 2000, 5, 40)) ref.push_back(v->decode(s));
  hyp = ref;
  std::bernoulli_distribution flip(0.2);
  for (auto& s : hyp)
    for (auto& t : s)
      if (flip(rng)) t = "w0";
  for (auto _ : state) benchmark::DoNotOptimize(harness::bleu(hyp, ref));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bleu)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
