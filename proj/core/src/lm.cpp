#include "unmt/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

namespace unmt {

namespace {

constexpr int kSlotBits = 21;
constexpr std::uint64_t kSlotMask = (std::uint64_t{1} << kSlotBits) - 1;
constexpr double kLn10 = 2.302585092994045684;
constexpr double kArpaFloor = -99.0;

std::vector<WordId> unpack(const NGramKey& k) {
  std::vector<WordId> ids;
  for (int i = 0; i < NGramLM::kMaxOrder; ++i) {
    std::uint64_t word = i < 3 ? k.lo : k.hi;
    auto v = (word >> ((i % 3) * kSlotBits)) & kSlotMask;
    if (v == 0) break;
    ids.push_back(static_cast<WordId>(v - 1));
  }
  return ids;
}

}  // namespace

NGramKey NGramKey::of(std::span<const WordId> ids) {
  if (ids.size() > static_cast<std::size_t>(NGramLM::kMaxOrder)) throw Error("n-gram too long");
  NGramKey k;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto v = static_cast<std::uint64_t>(ids[i]) + 1;
    if (ids[i] < 0 || v > kSlotMask) throw Error("word id too large for n-gram key");
    auto shift = static_cast<int>(i % 3) * kSlotBits;
    if (i < 3) {
      k.lo |= v << shift;
    } else {
      k.hi |= v << shift;
    }
  }
  return k;
}

NGramLM::NGramLM(VocabPtr vocab, int order) : vocab_(std::move(vocab)), order_(order) {
  ngrams_.resize(static_cast<std::size_t>(std::max(0, order - 1)));
  backoff_.resize(static_cast<std::size_t>(std::max(0, order - 1)));
  counts_.resize(static_cast<std::size_t>(order));
  context_totals_.resize(static_cast<std::size_t>(std::max(0, order - 1)));
}

WordId NGramLM::map_word(WordId w) const { return vocab_->contains(w) ? w : Vocabulary::kUnk; }

NGramLM NGramLM::train(const MonolingualCorpus& corpus, int order) {
  if (order < 1 || order > kMaxOrder) throw Error("LM order must be in [1,5]");
  if (corpus.sentences.empty() || !corpus.vocab) throw Error("empty corpus");
  NGramLM lm(corpus.vocab, order);
  const std::size_t V = corpus.vocab->size();

  // distinct_[L] : number of distinct followers of each context of length L.
  std::vector<std::unordered_map<NGramKey, std::int64_t, NGramKeyHash>> distinct(static_cast<std::size_t>(order));
  std::vector<std::vector<std::vector<WordId>>> seen(static_cast<std::size_t>(order));
  std::int64_t total_events = 0;

  std::vector<WordId> seq;
  for (const auto& s : corpus.sentences) {
    seq.assign(1, Vocabulary::kBos);
    for (WordId w : s) seq.push_back(lm.map_word(w));
    seq.push_back(Vocabulary::kEos);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      ++total_events;
      for (int n = 1; n <= order; ++n) {
        if (static_cast<std::size_t>(n) > i + 1) break;
        std::span<const WordId> gram(seq.data() + i + 1 - n, static_cast<std::size_t>(n));
        auto& c = lm.counts_[static_cast<std::size_t>(n - 1)][NGramKey::of(gram)];
        if (++c == 1) {
          seen[static_cast<std::size_t>(n - 1)].emplace_back(gram.begin(), gram.end());
          if (n >= 2) ++distinct[static_cast<std::size_t>(n - 1)][NGramKey::of(gram.first(gram.size() - 1))];
        }
        if (n >= 2) ++lm.context_totals_[static_cast<std::size_t>(n - 2)][NGramKey::of(gram.first(gram.size() - 1))];
      }
    }
  }

  // Unigrams: interpolate with the uniform distribution over predictable
  // words (everything except <s>).
  const auto types = static_cast<double>(seen[0].size());
  const auto n_events = static_cast<double>(total_events);
  const double uniform = 1.0 / static_cast<double>(V - 1);
  lm.unigram_.assign(V, -std::numeric_limits<double>::infinity());
  for (std::size_t w = 0; w < V; ++w) {
    if (static_cast<WordId>(w) == Vocabulary::kBos) continue;
    WordId id = static_cast<WordId>(w);
    auto it = lm.counts_[0].find(NGramKey::of({&id, 1}));
    double c = it == lm.counts_[0].end() ? 0.0 : static_cast<double>(it->second);
    lm.unigram_[w] = std::log((c + types * uniform) / (n_events + types));
  }

  for (int n = 2; n <= order; ++n) {
    auto& probs = lm.ngrams_[static_cast<std::size_t>(n - 2)];
    auto& bo = lm.backoff_[static_cast<std::size_t>(n - 2)];
    const auto& totals = lm.context_totals_[static_cast<std::size_t>(n - 2)];
    const auto& followers = distinct[static_cast<std::size_t>(n - 1)];
    for (const auto& gram : seen[static_cast<std::size_t>(n - 1)]) {
      std::span<const WordId> g(gram);
      auto ctx = g.first(g.size() - 1);
      auto ctx_key = NGramKey::of(ctx);
      double c_hw = static_cast<double>(lm.counts_[static_cast<std::size_t>(n - 1)].at(NGramKey::of(g)));
      double c_h = static_cast<double>(totals.at(ctx_key));
      double t_h = static_cast<double>(followers.at(ctx_key));
      double lower = std::exp(lm.log_prob(ctx.subspan(1), g.back()));
      probs[NGramKey::of(g)] = std::log((c_hw + t_h * lower) / (c_h + t_h));
      if (!bo.contains(ctx_key)) bo[ctx_key] = std::log(t_h / (c_h + t_h));
    }
  }
  return lm;
}

double NGramLM::log_prob(std::span<const WordId> context, WordId word) const {
  word = map_word(word);
  if (context.size() > static_cast<std::size_t>(order_ - 1)) {
    context = context.last(static_cast<std::size_t>(order_ - 1));
  }
  double acc = 0.0;
  std::array<WordId, kMaxOrder> buf{};
  while (!context.empty()) {
    const std::size_t L = context.size();
    std::copy(context.begin(), context.end(), buf.begin());
    buf[L] = word;
    const auto& probs = ngrams_[L - 1];
    auto it = probs.find(NGramKey::of({buf.data(), L + 1}));
    if (it != probs.end()) return acc + it->second;
    const auto& bo = backoff_[L - 1];
    auto b = bo.find(NGramKey::of(context));
    if (b != bo.end()) acc += b->second;
    context = context.subspan(1);
  }
  return acc + unigram_[static_cast<std::size_t>(word)];
}

NGramLM::State NGramLM::begin_state() const {
  State s;
  if (order_ > 1) {
    s.words[0] = Vocabulary::kBos;
    s.size = 1;
  }
  return s;
}

double NGramLM::score_word(State& state, WordId word) const {
  word = map_word(word);
  double lp = log_prob(state.context(), word);
  if (order_ > 1) {
    if (state.size < order_ - 1) {
      state.words[state.size++] = word;
    } else {
      std::copy(state.words.begin() + 1, state.words.begin() + state.size, state.words.begin());
      state.words[static_cast<std::size_t>(state.size - 1)] = word;
    }
  }
  return lp;
}

double NGramLM::score(const Sentence& sentence) const {
  State st = begin_state();
  double total = 0.0;
  for (WordId w : sentence) total += score_word(st, w);
  total += score_word(st, Vocabulary::kEos);
  return total;
}

std::int64_t NGramLM::count(std::span<const WordId> ngram) const {
  if (ngram.empty() || ngram.size() > counts_.size()) return 0;
  const auto& m = counts_[ngram.size() - 1];
  auto it = m.find(NGramKey::of(ngram));
  return it == m.end() ? 0 : it->second;
}

double NGramLM::ml_probability(std::span<const WordId> context, WordId word) const {
  std::vector<WordId> gram(context.begin(), context.end());
  gram.push_back(map_word(word));
  double num = static_cast<double>(count(gram));
  double den = 0.0;
  if (context.empty()) {
    if (counts_.empty()) return 0.0;
    for (const auto& [k, c] : counts_[0]) den += static_cast<double>(c);
  } else {
    if (context.size() > context_totals_.size()) return 0.0;
    const auto& m = context_totals_[context.size() - 1];
    auto it = m.find(NGramKey::of(context));
    if (it != m.end()) den = static_cast<double>(it->second);
  }
  return den > 0.0 ? num / den : 0.0;
}

std::vector<std::vector<WordId>> NGramLM::observed_contexts(int length) const {
  std::vector<std::vector<WordId>> out;
  if (length < 1 || length > order_ - 1) return out;
  for (const auto& [k, v] : backoff_[static_cast<std::size_t>(length - 1)]) out.push_back(unpack(k));
  std::sort(out.begin(), out.end());
  return out;
}

void NGramLM::save_arpa(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write LM file: " + path.string());
  const std::size_t V = vocab_->size();

  auto join = [&](const std::vector<WordId>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) s.push_back(' ');
      s += vocab_->token(ids[i]);
    }
    return s;
  };
  auto to10 = [](double ln) { return std::isfinite(ln) ? ln / kLn10 : kArpaFloor; };

  std::vector<std::vector<std::pair<std::vector<WordId>, double>>> blocks(static_cast<std::size_t>(order_));
  for (std::size_t w = 0; w < V; ++w) {
    blocks[0].push_back({{static_cast<WordId>(w)}, unigram_[w]});
  }
  for (int n = 2; n <= order_; ++n) {
    for (const auto& [k, lp] : ngrams_[static_cast<std::size_t>(n - 2)]) {
      blocks[static_cast<std::size_t>(n - 1)].push_back({unpack(k), lp});
    }
    std::sort(blocks[static_cast<std::size_t>(n - 1)].begin(), blocks[static_cast<std::size_t>(n - 1)].end());
  }

  out << "\n\\data\\\n";
  for (int n = 1; n <= order_; ++n) out << "ngram " << n << '=' << blocks[static_cast<std::size_t>(n - 1)].size() << '\n';
  for (int n = 1; n <= order_; ++n) {
    out << "\n\\" << n << "-grams:\n";
    for (const auto& [ids, lp] : blocks[static_cast<std::size_t>(n - 1)]) {
      out << fmt::format("{:.10g}", to10(lp)) << '\t' << join(ids);
      if (n < order_) {
        const auto& bo = backoff_[static_cast<std::size_t>(n - 1)];
        auto it = bo.find(NGramKey::of(ids));
        if (it != bo.end()) out << '\t' << fmt::format("{:.10g}", to10(it->second));
      }
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

NGramLM NGramLM::load_arpa(const std::filesystem::path& path, VocabPtr vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open LM file: " + path.string());
  if (!vocab) throw Error("load_arpa: null vocabulary");
  std::string line;
  int order = 0;
  std::vector<std::string> body;
  while (std::getline(in, line)) {
    if (line.rfind("ngram ", 0) == 0) {
      order = std::max(order, std::stoi(line.substr(6, line.find('=') - 6)));
    }
    body.push_back(line);
  }
  if (order < 1 || order > kMaxOrder) throw Error("ARPA file has no valid ngram counts: " + path.string());
  NGramLM lm(vocab, order);
  lm.unigram_.assign(vocab->size(), kArpaFloor * kLn10);
  lm.unigram_[Vocabulary::kBos] = -std::numeric_limits<double>::infinity();

  int current = 0;
  for (const auto& l : body) {
    if (l.empty()) continue;
    if (l[0] == '\\') {
      if (l.size() > 8 && l.find("-grams:") != std::string::npos) current = std::stoi(l.substr(1));
      else current = 0;
      continue;
    }
    if (current == 0) continue;
    std::istringstream ls(l);
    std::string lp_s;
    std::getline(ls, lp_s, '\t');
    std::string words;
    std::getline(ls, words, '\t');
    std::string bo_s;
    bool has_bo = static_cast<bool>(std::getline(ls, bo_s, '\t'));
    std::vector<WordId> ids;
    std::istringstream ws(words);
    std::string w;
    bool known = true;
    while (ws >> w) {
      auto id = vocab->find(w);
      if (!id) known = false;
      ids.push_back(id.value_or(Vocabulary::kUnk));
    }
    if (!known || static_cast<int>(ids.size()) != current) continue;
    double lp = std::stod(lp_s);
    double ln = lp <= kArpaFloor ? -std::numeric_limits<double>::infinity() : lp * kLn10;
    if (current == 1) {
      if (ids[0] != Vocabulary::kBos) lm.unigram_[static_cast<std::size_t>(ids[0])] = ln;
    } else {
      lm.ngrams_[static_cast<std::size_t>(current - 2)][NGramKey::of(ids)] = ln;
    }
    if (has_bo && current < order) {
      lm.backoff_[static_cast<std::size_t>(current - 1)][NGramKey::of(ids)] = std::stod(bo_s) * kLn10;
    }
  }
  return lm;
}

}  // namespace unmt
