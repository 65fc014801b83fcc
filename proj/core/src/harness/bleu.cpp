#include "unmt/harness/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

namespace unmt::harness {

namespace {

using NGramCounts = std::map<std::vector<std::string>, std::int64_t>;

NGramCounts ngrams(const Tokens& s, std::size_t n) {
  NGramCounts out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Tokens(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

}  // namespace

BleuReport bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.empty() || refs.empty()) throw Error("bleu: empty input");
  if (hyps.size() != refs.size()) throw Error("bleu: hypothesis and reference counts differ");
  BleuReport r;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    r.hyp_length += static_cast<std::int64_t>(hyps[i].size());
    r.ref_length += static_cast<std::int64_t>(refs[i].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      auto h = ngrams(hyps[i], n);
      auto ref = ngrams(refs[i], n);
      for (const auto& [g, c] : h) {
        auto it = ref.find(g);
        if (it != ref.end()) r.matches[n - 1] += std::min(c, it->second);
        r.totals[n - 1] += c;
      }
    }
  }
  bool zero = false;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precisions[n] = r.totals[n] > 0 ? static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]) : 0.0;
    if (r.matches[n] == 0) {
      zero = true;
    } else {
      log_sum += std::log(r.precisions[n]);
    }
  }
  if (r.hyp_length == 0) {
    r.brevity_penalty = std::numeric_limits<double>::min();
  } else if (r.hyp_length < r.ref_length) {
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length));
  }
  r.bleu = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

std::vector<LengthBucket> default_buckets() { return {{0, 15}, {15, 30}, {30, -1}}; }

std::vector<std::optional<BleuReport>> bleu_by_length(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                                                      const std::vector<LengthBucket>& buckets) {
  if (hyps.size() != refs.size()) throw Error("bleu: hypothesis and reference counts differ");
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (buckets[i].hi >= 0 && buckets[i].hi <= buckets[i].lo) throw Error("bleu_by_length: empty bucket range");
    for (std::size_t j = i + 1; j < buckets.size(); ++j) {
      const auto& a = buckets[i];
      const auto& b = buckets[j];
      bool apart = (a.hi >= 0 && a.hi <= b.lo) || (b.hi >= 0 && b.hi <= a.lo);
      if (!apart) throw Error("bleu_by_length: overlapping buckets");
    }
  }
  std::vector<std::optional<BleuReport>> out;
  for (const auto& b : buckets) {
    std::vector<Tokens> h, r;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      int len = static_cast<int>(refs[i].size());
      if (len > b.lo && (b.hi < 0 || len <= b.hi)) {
        h.push_back(hyps[i]);
        r.push_back(refs[i]);
      }
    }
    if (h.empty()) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(bleu(h, r));
    }
  }
  return out;
}

double word_translation_accuracy(const WordTranslationTable& table, const GoldDictionary& gold, std::size_t n) {
  const Vocabulary& sv = *table.src_vocab;
  const Vocabulary& tv = *table.tgt_vocab;
  std::size_t seen = 0;
  std::size_t correct = 0;
  for (WordId w = Vocabulary::kNumSpecial; static_cast<std::size_t>(w) < sv.size() && seen < n; ++w) {
    auto g = gold.find(sv.token(w));
    if (g == gold.end()) continue;
    ++seen;
    const auto& c = table.candidates(w);
    if (!c.empty() && tv.token(c.front().target) == g->second) ++correct;
  }
  return seen == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(seen);
}

}  // namespace unmt::harness
