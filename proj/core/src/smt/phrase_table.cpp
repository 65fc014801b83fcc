#include "unmt/smt/phrase_table.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "unmt/log.hpp"

namespace unmt::smt {

std::vector<PhraseSpan> extract_phrases(const AlignmentMatrix& a, int max_len) {
  std::vector<PhraseSpan> out;
  const int ls = a.src_len();
  const int lt = a.tgt_len();
  std::vector<char> tgt_aligned(static_cast<std::size_t>(lt), 0);
  for (auto [s, t] : a.links()) tgt_aligned[static_cast<std::size_t>(t)] = 1;

  for (int s1 = 0; s1 < ls; ++s1) {
    for (int s2 = s1; s2 < std::min(ls, s1 + max_len); ++s2) {
      int tmin = lt;
      int tmax = -1;
      for (auto [s, t] : a.links()) {
        if (s >= s1 && s <= s2) {
          tmin = std::min(tmin, t);
          tmax = std::max(tmax, t);
        }
      }
      if (tmax < 0 || tmax - tmin >= max_len) continue;
      bool consistent = true;
      for (auto [s, t] : a.links()) {
        if (t >= tmin && t <= tmax && (s < s1 || s > s2)) {
          consistent = false;
          break;
        }
      }
      if (!consistent) continue;
      // Grow the target side over unaligned neighbours.
      for (int tb = tmin; tb >= 0 && (tb == tmin || !tgt_aligned[static_cast<std::size_t>(tb)]); --tb) {
        for (int te = tmax; te < lt && (te == tmax || !tgt_aligned[static_cast<std::size_t>(te)]) &&
                            te - tb < max_len;
             ++te) {
          out.push_back({s1, s2 + 1, tb, te + 1});
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

bool token_less(const Vocabulary& v, const Sentence& a, const Sentence& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                      [&v](WordId x, WordId y) { return v.token(x) < v.token(y); });
}

std::string join_ids(const Vocabulary& v, const Sentence& s) { return v.join(s); }

Sentence parse_phrase(const Vocabulary& v, const std::string& text) {
  Sentence out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(v.id(tok));
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

constexpr double kProbFloor = 1e-30;

}  // namespace

PhraseTable::PhraseTable(VocabPtr src_vocab, VocabPtr tgt_vocab, bool has_lexical, int max_phrase_len)
    : src_vocab_(std::move(src_vocab)),
      tgt_vocab_(std::move(tgt_vocab)),
      has_lexical_(has_lexical),
      max_phrase_len_(max_phrase_len) {
  if (max_phrase_len_ < 1 || max_phrase_len_ > NGramLM::kMaxOrder) {
    throw Error("phrase table: max phrase length must be in [1, 5]");
  }
}

const std::vector<PhraseEntry>* PhraseTable::find(std::span<const WordId> source) const {
  if (source.empty() || source.size() > static_cast<std::size_t>(max_phrase_len_)) return nullptr;
  auto it = entries_.find(NGramKey::of(source));
  return it == entries_.end() ? nullptr : &it->second.options;
}

const PhraseEntry* PhraseTable::find(std::span<const WordId> source, std::span<const WordId> target) const {
  const auto* opts = find(source);
  if (!opts) return nullptr;
  for (const auto& e : *opts) {
    if (std::equal(e.target.begin(), e.target.end(), target.begin(), target.end())) return &e;
  }
  return nullptr;
}

void PhraseTable::add(const Sentence& source, PhraseEntry entry) {
  if (source.empty() || source.size() > static_cast<std::size_t>(max_phrase_len_) ||
      entry.target.empty() || entry.target.size() > static_cast<std::size_t>(NGramLM::kMaxOrder)) {
    throw Error("phrase table: phrase length out of range");
  }
  auto& src = entries_[NGramKey::of(source)];
  if (src.words.empty()) src.words = source;
  src.options.push_back(std::move(entry));
}

void PhraseTable::sort() {
  const Vocabulary& tv = *tgt_vocab_;
  for (auto& [key, src] : entries_) {
    std::sort(src.options.begin(), src.options.end(), [&tv](const PhraseEntry& a, const PhraseEntry& b) {
      if (a.p_fwd != b.p_fwd) return a.p_fwd > b.p_fwd;
      return token_less(tv, a.target, b.target);
    });
  }
}

void PhraseTable::truncate(std::size_t n) {
  for (auto& [key, src] : entries_) {
    if (src.options.size() > n) src.options.resize(n);
  }
}

std::size_t PhraseTable::size() const {
  std::size_t n = 0;
  for (const auto& [key, src] : entries_) n += src.options.size();
  return n;
}

std::vector<Sentence> PhraseTable::sources() const {
  std::vector<Sentence> out;
  out.reserve(entries_.size());
  for (const auto& [key, src] : entries_) out.push_back(src.words);
  const Vocabulary& sv = *src_vocab_;
  std::sort(out.begin(), out.end(), [&sv](const Sentence& a, const Sentence& b) { return token_less(sv, a, b); });
  return out;
}

void PhraseTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : sources()) {
    const std::string src = join_ids(*src_vocab_, s);
    for (const auto& e : *find(s)) {
      out << fmt::format("{} ||| {} ||| {:.10g} {:.10g} {:.10g} {:.10g} ||| {}\n", src,
                         join_ids(*tgt_vocab_, e.target), e.p_fwd, e.p_inv, e.lex_fwd, e.lex_inv, e.count);
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

PhraseTable PhraseTable::load(const std::filesystem::path& path, VocabPtr src_vocab, VocabPtr tgt_vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  struct Row {
    Sentence src;
    PhraseEntry e;
  };
  std::vector<Row> rows;
  std::string line;
  int max_len = 1;
  bool lexical = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      auto next = line.find("|||", pos);
      fields.push_back(trim(line.substr(pos, next == std::string::npos ? std::string::npos : next - pos)));
      if (next == std::string::npos) break;
      pos = next + 3;
    }
    if (fields.size() != 4) throw Error(fmt::format("{}:{}: expected 4 fields", path.string(), lineno));
    Row r;
    r.src = parse_phrase(*src_vocab, fields[0]);
    r.e.target = parse_phrase(*tgt_vocab, fields[1]);
    std::istringstream scores(fields[2]);
    if (!(scores >> r.e.p_fwd >> r.e.p_inv >> r.e.lex_fwd >> r.e.lex_inv)) {
      throw Error(fmt::format("{}:{}: bad scores", path.string(), lineno));
    }
    try {
      r.e.count = std::stoll(fields[3]);
    } catch (const std::exception&) {
      throw Error(fmt::format("{}:{}: bad count", path.string(), lineno));
    }
    if (r.src.empty() || r.e.target.empty()) throw Error(fmt::format("{}:{}: empty phrase", path.string(), lineno));
    for (double p : {r.e.p_fwd, r.e.p_inv, r.e.lex_fwd, r.e.lex_inv}) {
      if (!(p > 0.0 && p <= 1.0)) throw Error(fmt::format("{}:{}: probability out of (0,1]", path.string(), lineno));
    }
    max_len = std::max(max_len, static_cast<int>(r.src.size()));
    lexical = lexical || r.e.count > 0;
    rows.push_back(std::move(r));
  }
  PhraseTable table(std::move(src_vocab), std::move(tgt_vocab), lexical, max_len);
  for (auto& r : rows) table.add(r.src, std::move(r.e));
  table.sort();
  return table;
}

namespace {

struct PairKey {
  NGramKey src;
  NGramKey tgt;
  friend bool operator==(const PairKey&, const PairKey&) = default;
};

struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const noexcept {
    NGramKeyHash h;
    return h(k.src) * 31 + h(k.tgt);
  }
};

struct PairStats {
  Sentence src;
  Sentence tgt;
  std::int64_t count = 0;
  double lex_fwd = 0.0;
  double lex_inv = 0.0;
};

// lex(t|s) = prod_j mean_{i aligned to j} w(t_j|s_i), w(t_j|NULL) if unaligned.
double lexical_weight(const Lexicon& w, const Sentence& from, const Sentence& to, const AlignmentMatrix& a,
                      const PhraseSpan& span, bool forward) {
  const int fb = forward ? span.src_begin : span.tgt_begin;
  const int fe = forward ? span.src_end : span.tgt_end;
  const int tb = forward ? span.tgt_begin : span.src_begin;
  const int te = forward ? span.tgt_end : span.src_end;
  double weight = 1.0;
  for (int j = tb; j < te; ++j) {
    double sum = 0.0;
    int n = 0;
    for (auto [s, t] : a.links()) {
      int fi = forward ? s : t;
      int ti = forward ? t : s;
      if (ti != j || fi < fb || fi >= fe) continue;
      sum += w.prob(from[static_cast<std::size_t>(fi)], to[static_cast<std::size_t>(j)]);
      ++n;
    }
    double wj = n > 0 ? sum / n : w.prob(kNullWord, to[static_cast<std::size_t>(j)]);
    weight *= std::max(wj, kProbFloor);
  }
  return std::clamp(weight, kProbFloor, 1.0);
}

}  // namespace

PhraseTable build_phrase_table(const std::vector<SentencePair>& pairs, const WordAlignment& alignment,
                               VocabPtr src_vocab, VocabPtr tgt_vocab, const PhraseTableConfig& cfg) {
  if (cfg.min_count < 1) throw Error("phrase table: min_count must be >= 1");
  if (alignment.alignments.size() != pairs.size()) throw Error("phrase table: alignment count mismatch");

  std::unordered_map<PairKey, PairStats, PairKeyHash> stats;
  std::vector<PairKey> order;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto& p = pairs[n];
    const auto& a = alignment.alignments[n];
    for (const auto& span : extract_phrases(a, cfg.max_phrase_len)) {
      std::span<const WordId> src(p.src.data() + span.src_begin, static_cast<std::size_t>(span.src_end - span.src_begin));
      std::span<const WordId> tgt(p.tgt.data() + span.tgt_begin, static_cast<std::size_t>(span.tgt_end - span.tgt_begin));
      PairKey key{NGramKey::of(src), NGramKey::of(tgt)};
      auto [it, fresh] = stats.try_emplace(key);
      PairStats& st = it->second;
      if (fresh) {
        st.src.assign(src.begin(), src.end());
        st.tgt.assign(tgt.begin(), tgt.end());
        order.push_back(key);
      }
      ++st.count;
      st.lex_fwd = std::max(st.lex_fwd, lexical_weight(alignment.forward, p.src, p.tgt, a, span, true));
      st.lex_inv = std::max(st.lex_inv, lexical_weight(alignment.inverse, p.tgt, p.src, a, span, false));
    }
  }

  // Marginals over the surviving pairs only, so every stored source
  // distribution sums to one.
  std::unordered_map<NGramKey, std::int64_t, NGramKeyHash> src_total;
  std::unordered_map<NGramKey, std::int64_t, NGramKeyHash> tgt_total;
  std::size_t kept = 0;
  for (const auto& key : order) {
    const auto& st = stats.at(key);
    if (st.count < cfg.min_count) continue;
    src_total[key.src] += st.count;
    tgt_total[key.tgt] += st.count;
    ++kept;
  }

  PhraseTable table(std::move(src_vocab), std::move(tgt_vocab), true, cfg.max_phrase_len);
  for (const auto& key : order) {
    const auto& st = stats.at(key);
    if (st.count < cfg.min_count) continue;
    PhraseEntry e;
    e.target = st.tgt;
    e.p_fwd = static_cast<double>(st.count) / static_cast<double>(src_total.at(key.src));
    e.p_inv = static_cast<double>(st.count) / static_cast<double>(tgt_total.at(key.tgt));
    e.lex_fwd = st.lex_fwd;
    e.lex_inv = st.lex_inv;
    e.count = st.count;
    table.add(st.src, std::move(e));
  }
  table.sort();
  table.truncate(cfg.max_targets);
  log::debug("phrase table: {} distinct pairs, {} kept at min_count {}, {} after top-{}", order.size(), kept,
             cfg.min_count, table.size(), cfg.max_targets);
  return table;
}

PhraseTable train_phrase_table(const std::vector<SentencePair>& pairs, VocabPtr src_vocab, VocabPtr tgt_vocab,
                               const PhraseTableConfig& cfg) {
  if (pairs.empty()) throw Error("phrase table: empty pseudo corpus");
  WordAlignment a = ibm1_align(pairs, cfg.ibm1_iterations);
  return build_phrase_table(pairs, a, std::move(src_vocab), std::move(tgt_vocab), cfg);
}

PhraseTable phrase_table_from_words(const WordTranslationTable& wt) {
  PhraseTable table(wt.src_vocab, wt.tgt_vocab, false, 1);
  for (std::size_t s = 0; s < wt.entries.size(); ++s) {
    for (const auto& c : wt.entries[s]) {
      PhraseEntry e;
      e.target = {c.target};
      e.p_fwd = c.forward;
      e.p_inv = c.inverse;
      table.add({static_cast<WordId>(s)}, std::move(e));
    }
  }
  table.sort();
  return table;
}

}  // namespace unmt::smt
