#include "unmt/smt/alignment.hpp"

#include <algorithm>
#include <unordered_set>

#include "unmt/log.hpp"

namespace unmt::smt {

void AlignmentMatrix::add(int s, int t) {
  if (s < 0 || s >= src_len_ || t < 0 || t >= tgt_len_) {
    throw Error("alignment link out of bounds");
  }
  std::pair<int, int> link{s, t};
  auto it = std::lower_bound(links_.begin(), links_.end(), link);
  if (it == links_.end() || *it != link) links_.insert(it, link);
}

bool AlignmentMatrix::contains(int s, int t) const {
  return std::binary_search(links_.begin(), links_.end(), std::pair<int, int>{s, t});
}

double Lexicon::prob(WordId e, WordId f) const {
  auto it = table_.find(key(e, f));
  return it == table_.end() ? 0.0 : it->second;
}

double Lexicon::total(WordId e) const {
  // Sum in (e, f) order so the result does not depend on hash layout.
  double sum = 0.0;
  for (const auto& [ee, f, p] : entries()) {
    if (ee == e) sum += p;
  }
  return sum;
}

std::vector<std::tuple<WordId, WordId, double>> Lexicon::entries() const {
  std::vector<std::tuple<WordId, WordId, double>> out;
  out.reserve(table_.size());
  for (const auto& [k, p] : table_) {
    out.emplace_back(static_cast<WordId>(static_cast<std::uint32_t>(k >> 32)),
                     static_cast<WordId>(static_cast<std::uint32_t>(k)), p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Lexicon train_ibm1(const std::vector<SentencePair>& pairs, int iterations) {
  if (pairs.empty()) throw Error("ibm1: empty corpus");
  if (iterations < 1) throw Error("ibm1: iterations must be >= 1");

  std::unordered_set<WordId> targets;
  for (const auto& p : pairs) targets.insert(p.tgt.begin(), p.tgt.end());
  const double uniform = targets.empty() ? 1.0 : 1.0 / static_cast<double>(targets.size());

  Lexicon lex;
  for (const auto& p : pairs) {
    for (WordId f : p.tgt) {
      lex.set(kNullWord, f, uniform);
      for (WordId e : p.src) lex.set(e, f, uniform);
    }
  }

  std::unordered_map<std::uint64_t, double> counts;
  std::unordered_map<WordId, double> totals;
  std::vector<double> t;
  for (int it = 0; it < iterations; ++it) {
    counts.clear();
    totals.clear();
    for (const auto& p : pairs) {
      for (WordId f : p.tgt) {
        t.assign(p.src.size() + 1, 0.0);
        t[0] = lex.prob(kNullWord, f);
        double z = t[0];
        for (std::size_t i = 0; i < p.src.size(); ++i) {
          t[i + 1] = lex.prob(p.src[i], f);
          z += t[i + 1];
        }
        for (std::size_t i = 0; i <= p.src.size(); ++i) {
          WordId e = i == 0 ? kNullWord : p.src[i - 1];
          double c = t[i] / z;
          counts[Lexicon::key(e, f)] += c;
          totals[e] += c;
        }
      }
    }
    for (const auto& [k, c] : counts) {
      WordId e = static_cast<WordId>(static_cast<std::uint32_t>(k >> 32));
      lex.set(e, static_cast<WordId>(static_cast<std::uint32_t>(k)), c / totals[e]);
    }
  }
  return lex;
}

AlignmentMatrix viterbi_ibm1(const Lexicon& lex, const Sentence& src, const Sentence& tgt) {
  AlignmentMatrix a(static_cast<int>(src.size()), static_cast<int>(tgt.size()));
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    double best = lex.prob(kNullWord, tgt[j]);
    int arg = -1;
    for (std::size_t i = 0; i < src.size(); ++i) {
      double p = lex.prob(src[i], tgt[j]);
      if (p > best) {
        best = p;
        arg = static_cast<int>(i);
      }
    }
    if (arg >= 0) a.add(arg, static_cast<int>(j));
  }
  return a;
}

AlignmentMatrix symmetrize(const AlignmentMatrix& s2t, const AlignmentMatrix& t2s) {
  if (s2t.src_len() != t2s.src_len() || s2t.tgt_len() != t2s.tgt_len()) {
    throw Error("symmetrize: shape mismatch");
  }
  const int ls = s2t.src_len();
  const int lt = s2t.tgt_len();
  std::vector<char> uni(static_cast<std::size_t>(ls * lt), 0);
  std::vector<char> cur(static_cast<std::size_t>(ls * lt), 0);
  std::vector<int> src_used(static_cast<std::size_t>(ls), 0);
  std::vector<int> tgt_used(static_cast<std::size_t>(lt), 0);
  auto at = [lt](int s, int t) { return static_cast<std::size_t>(s * lt + t); };
  for (auto [s, t] : s2t.links()) uni[at(s, t)] = 1;
  for (auto [s, t] : t2s.links()) {
    if (uni[at(s, t)]) {
      cur[at(s, t)] = 1;
      ++src_used[static_cast<std::size_t>(s)];
      ++tgt_used[static_cast<std::size_t>(t)];
    }
    uni[at(s, t)] = 1;
  }

  static constexpr int kNeighbours[8][2] = {{-1, 0}, {0, -1}, {1, 0}, {0, 1},
                                            {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  bool added = true;
  while (added) {
    added = false;
    for (int s = 0; s < ls; ++s) {
      for (int t = 0; t < lt; ++t) {
        if (!cur[at(s, t)]) continue;
        for (const auto& d : kNeighbours) {
          int ns = s + d[0];
          int nt = t + d[1];
          if (ns < 0 || ns >= ls || nt < 0 || nt >= lt) continue;
          if (cur[at(ns, nt)] || !uni[at(ns, nt)]) continue;
          if (src_used[static_cast<std::size_t>(ns)] && tgt_used[static_cast<std::size_t>(nt)]) continue;
          cur[at(ns, nt)] = 1;
          ++src_used[static_cast<std::size_t>(ns)];
          ++tgt_used[static_cast<std::size_t>(nt)];
          added = true;
        }
      }
    }
  }

  AlignmentMatrix out(ls, lt);
  for (int s = 0; s < ls; ++s) {
    for (int t = 0; t < lt; ++t) {
      if (cur[at(s, t)]) out.add(s, t);
    }
  }
  return out;
}

WordAlignment ibm1_align(const std::vector<SentencePair>& pairs, int iterations) {
  std::vector<SentencePair> flipped;
  flipped.reserve(pairs.size());
  for (const auto& p : pairs) flipped.push_back({p.tgt, p.src});

  WordAlignment out;
  out.forward = train_ibm1(pairs, iterations);
  out.inverse = train_ibm1(flipped, iterations);
  out.alignments.reserve(pairs.size());
  for (const auto& p : pairs) {
    AlignmentMatrix fwd = viterbi_ibm1(out.forward, p.src, p.tgt);
    AlignmentMatrix inv_t = viterbi_ibm1(out.inverse, p.tgt, p.src);
    AlignmentMatrix inv(fwd.src_len(), fwd.tgt_len());
    for (auto [t, s] : inv_t.links()) inv.add(s, t);
    out.alignments.push_back(symmetrize(fwd, inv));
  }
  log::debug("ibm1: {} pairs, {} forward / {} inverse lexicon entries", pairs.size(),
             out.forward.size(), out.inverse.size());
  return out;
}

}  // namespace unmt::smt
