#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance runner. Deliberately naive.

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "unmt/harness/bleu.hpp"
#include "unmt/smt/model.hpp"
#include "unmt/smt/phrase_table.hpp"

namespace oracle {

using unmt::Sentence;
using unmt::WordId;

// Every box with a link inside and no link crossing its border.
inline std::set<unmt::smt::PhraseSpan> extract(const unmt::smt::AlignmentMatrix& a, int max_len) {
  std::set<unmt::smt::PhraseSpan> out;
  for (int s1 = 0; s1 < a.src_len(); ++s1)
    for (int s2 = s1 + 1; s2 <= a.src_len() && s2 - s1 <= max_len; ++s2)
      for (int t1 = 0; t1 < a.tgt_len(); ++t1)
        for (int t2 = t1 + 1; t2 <= a.tgt_len() && t2 - t1 <= max_len; ++t2) {
          bool inside = false, ok = true;
          for (auto [s, t] : a.links()) {
            bool in_s = s >= s1 && s < s2, in_t = t >= t1 && t < t2;
            if (in_s && in_t) inside = true;
            if (in_s != in_t) ok = false;
          }
          if (inside && ok) out.insert({s1, s2, t1, t2});
        }
  return out;
}

// IBM-1 EM with explicit maps; t[e][f] = t(f | e), e = -1 is the empty word.
inline std::map<WordId, std::map<WordId, double>> ibm1(const std::vector<unmt::smt::SentencePair>& pairs, int iters) {
  std::set<WordId> fs;
  for (const auto& p : pairs) fs.insert(p.tgt.begin(), p.tgt.end());
  std::map<WordId, std::map<WordId, double>> t;
  for (const auto& p : pairs) {
    std::vector<WordId> es(p.src);
    es.push_back(-1);
    for (WordId e : es)
      for (WordId f : p.tgt) t[e][f] = 1.0 / static_cast<double>(fs.size());
  }
  for (int it = 0; it < iters; ++it) {
    std::map<WordId, std::map<WordId, double>> count;
    for (const auto& p : pairs) {
      std::vector<WordId> es(p.src);
      es.push_back(-1);
      for (WordId f : p.tgt) {
        double z = 0.0;
        for (WordId e : es) z += t[e][f];
        for (WordId e : es) count[e][f] += t[e][f] / z;
      }
    }
    for (auto& [e, row] : count) {
      double total = 0.0;
      for (auto& [f, c] : row) total += c;
      for (auto& [f, c] : row) t[e][f] = c / total;
    }
  }
  return t;
}

struct Best {
  double score = -INFINITY;
  Sentence target;
  bool found = false;
};

// Every segmentation x order x option choice allowed by the table and the
// distortion limit; pass-through only for single words without options.
inline Best exhaustive_decode(const unmt::smt::SMTModel& m, const Sentence& src) {
  const int n = static_cast<int>(src.size());
  const auto& table = *m.table;
  const auto& tv = m.tgt_vocab();
  Best best;
  unmt::smt::Derivation d;
  std::vector<bool> covered(static_cast<std::size_t>(n), false);
  auto less = [&](const Sentence& a, const Sentence& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                        [&](WordId x, WordId y) { return tv.token(x) < tv.token(y); });
  };
  std::function<void(int, int)> rec = [&](int done, int prev_end) {
    if (done == n) {
      double s = unmt::smt::smt_score(m, src, d);
      Sentence target;
      for (const auto& st : d) target.insert(target.end(), st.target.begin(), st.target.end());
      if (!best.found || s > best.score || (s == best.score && less(target, best.target))) {
        best = {s, target, true};
      }
      return;
    }
    for (int b = 0; b < n; ++b) {
      if (covered[static_cast<std::size_t>(b)]) continue;
      if (m.decoder.distortion_limit >= 0 && std::abs(b - prev_end) > m.decoder.distortion_limit) continue;
      for (int e = b + 1; e <= n && !covered[static_cast<std::size_t>(e - 1)]; ++e) {
        std::span<const WordId> source(src.data() + b, static_cast<std::size_t>(e - b));
        std::vector<unmt::smt::DerivationStep> steps;
        const auto* opts = table.find(source);
        if (opts && !opts->empty()) {
          for (const auto& o : *opts) steps.push_back({b, e, o.target, false});
        } else if (e == b + 1) {
          steps.push_back({b, e, Sentence{unmt::Vocabulary::kUnk}, true});
        }
        for (const auto& st : steps) {
          for (int i = b; i < e; ++i) covered[static_cast<std::size_t>(i)] = true;
          d.push_back(st);
          rec(done + (e - b), e);
          d.pop_back();
          for (int i = b; i < e; ++i) covered[static_cast<std::size_t>(i)] = false;
        }
      }
    }
  };
  rec(0, 0);
  return best;
}

// Corpus BLEU straight from the definition.
inline double bleu(const std::vector<unmt::Tokens>& hyp, const std::vector<unmt::Tokens>& ref) {
  double match[4] = {}, total[4] = {};
  double h_len = 0, r_len = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    h_len += static_cast<double>(hyp[i].size());
    r_len += static_cast<double>(ref[i].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, int> hc, rc;
      for (std::size_t j = 0; j + n <= hyp[i].size(); ++j) ++hc[{hyp[i].begin() + j, hyp[i].begin() + j + n}];
      for (std::size_t j = 0; j + n <= ref[i].size(); ++j) ++rc[{ref[i].begin() + j, ref[i].begin() + j + n}];
      for (auto& [g, c] : hc) {
        total[n - 1] += c;
        match[n - 1] += std::min(c, rc.count(g) ? rc[g] : 0);
      }
    }
  }
  double log_p = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (match[n] == 0) return 0.0;
    log_p += std::log(match[n] / total[n]) / 4.0;
  }
  double bp = h_len < r_len ? std::exp(1.0 - r_len / h_len) : 1.0;
  return 100.0 * bp * std::exp(log_p);
}

}  // namespace oracle
