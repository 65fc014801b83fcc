#include "unmt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "unmt/log.hpp"

namespace unmt {

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else if (c < 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      current.push_back(ch);
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  add(std::string(kBosToken), 0);
  add(std::string(kEosToken), 0);
  add(std::string(kUnkToken), 0);
}

void Vocabulary::add(std::string token, std::int64_t count) {
  auto id = static_cast<WordId>(tokens_.size());
  auto [it, inserted] = index_.emplace(token, id);
  if (!inserted) throw Error("duplicate vocabulary token: " + token);
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
}

Vocabulary Vocabulary::build(const std::vector<Tokens>& corpus, int min_count,
                             std::size_t max_words) {
  if (min_count < 1) throw Error("min_count must be >= 1");
  std::unordered_map<std::string, std::int64_t> freq;
  std::size_t total = 0;
  for (const auto& line : corpus) {
    for (const auto& tok : line) {
      ++freq[tok];
      ++total;
    }
  }
  if (total == 0) throw Error("empty corpus");

  std::vector<std::pair<std::string, std::int64_t>> entries;
  entries.reserve(freq.size());
  for (auto& [tok, n] : freq) {
    if (tok == kBosToken || tok == kEosToken || tok == kUnkToken) continue;
    if (n >= min_count) entries.emplace_back(tok, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (max_words > 0 && entries.size() > max_words) entries.resize(max_words);

  Vocabulary v;
  auto unk = static_cast<std::int64_t>(total);
  for (auto& [tok, n] : entries) {
    unk -= n;
    v.add(tok, n);
  }
  v.counts_[kUnk] = unk;
  return v;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words,
                                  const std::vector<std::int64_t>& counts) {
  if (!counts.empty() && counts.size() != words.size()) {
    throw Error("from_words: counts size mismatch");
  }
  Vocabulary v;
  for (std::size_t i = 0; i < words.size(); ++i) {
    v.add(words[i], counts.empty() ? 0 : counts[i]);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file: " + path.string());
  std::vector<std::tuple<std::string, WordId, std::int64_t>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw Error("malformed vocabulary line: " + line);
    rows.emplace_back(line.substr(0, t1), std::stoi(line.substr(t1 + 1, t2 - t1 - 1)),
                      std::stoll(line.substr(t2 + 1)));
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return std::get<1>(a) < std::get<1>(b); });
  if (rows.size() < static_cast<std::size_t>(kNumSpecial) ||
      std::get<0>(rows[kBos]) != kBosToken || std::get<0>(rows[kEos]) != kEosToken ||
      std::get<0>(rows[kUnk]) != kUnkToken) {
    throw Error("vocabulary file lacks special tokens: " + path.string());
  }
  Vocabulary v;
  v.counts_[kBos] = std::get<2>(rows[kBos]);
  v.counts_[kEos] = std::get<2>(rows[kEos]);
  v.counts_[kUnk] = std::get<2>(rows[kUnk]);
  for (std::size_t i = kNumSpecial; i < rows.size(); ++i) {
    if (std::get<1>(rows[i]) != static_cast<WordId>(i)) {
      throw Error("vocabulary ids are not contiguous: " + path.string());
    }
    v.add(std::get<0>(rows[i]), std::get<2>(rows[i]));
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary file: " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << i << '\t' << counts_[i] << '\n';
  }
}

std::optional<WordId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

WordId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(WordId id) const {
  if (!contains(id)) throw Error("word id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::int64_t Vocabulary::count(WordId id) const {
  if (!contains(id)) throw Error("word id out of range: " + std::to_string(id));
  return counts_[static_cast<std::size_t>(id)];
}

Sentence Vocabulary::encode(const Tokens& tokens) const {
  Sentence s;
  s.reserve(tokens.size());
  for (const auto& t : tokens) s.push_back(id(t));
  return s;
}

Tokens Vocabulary::decode(const Sentence& sentence) const {
  Tokens t;
  t.reserve(sentence.size());
  for (WordId w : sentence) t.push_back(token(w));
  return t;
}

std::string Vocabulary::join(const Sentence& sentence) const {
  std::string out;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(sentence[i]);
  }
  return out;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Corpora

std::size_t MonolingualCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

MonolingualCorpus make_corpus(std::string language, const std::vector<Tokens>& lines,
                              VocabPtr vocab, std::string source) {
  if (!vocab) throw Error("make_corpus: null vocabulary");
  MonolingualCorpus c{std::move(language), vocab, {}, std::move(source)};
  c.sentences.reserve(lines.size());
  for (const auto& line : lines) {
    if (line.empty()) continue;
    c.sentences.push_back(vocab->encode(line));
  }
  return c;
}

std::size_t filter_by_length(std::vector<Tokens>& lines, std::size_t max_len) {
  auto before = lines.size();
  std::erase_if(lines, [&](const Tokens& t) { return t.empty() || t.size() > max_len; });
  auto dropped = before - lines.size();
  if (dropped > 0) log::info("filtered {} of {} lines (empty or longer than {} tokens)", dropped, before, max_len);
  return dropped;
}

std::vector<Tokens> read_token_lines(const std::filesystem::path& path, bool tokenize_lines) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path.string());
  std::vector<Tokens> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (tokenize_lines) {
      lines.push_back(tokenize(line));
    } else {
      Tokens t;
      std::istringstream ss(line);
      std::string w;
      while (ss >> w) t.push_back(std::move(w));
      lines.push_back(std::move(t));
    }
  }
  return lines;
}

void write_token_lines(const std::filesystem::path& path, const std::vector<Tokens>& lines) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file: " + path.string());
  for (const auto& line : lines) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) out << ' ';
      out << line[i];
    }
    out << '\n';
  }
}

void write_sentences(const std::filesystem::path& path, const Vocabulary& vocab,
                     const std::vector<Sentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file: " + path.string());
  for (const auto& s : sentences) out << vocab.join(s) << '\n';
}

GoldDictionary load_gold_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dictionary file: " + path.string());
  GoldDictionary d;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("malformed dictionary line: " + line);
    d.emplace(line.substr(0, tab), line.substr(tab + 1));
  }
  return d;
}

void save_gold_dictionary(const std::filesystem::path& path, const GoldDictionary& dict) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dictionary file: " + path.string());
  for (const auto& [x, y] : dict) out << x << '\t' << y << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

std::vector<std::string> make_pseudo_words(std::size_t n, std::string_view consonants,
                                           std::string_view vowels, std::mt19937_64& rng) {
  std::set<std::string> seen;
  std::vector<std::string> words;
  std::uniform_int_distribution<std::size_t> pick_c(0, consonants.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_v(0, vowels.size() - 1);
  std::uniform_int_distribution<int> syllables(2, 3);
  while (words.size() < n) {
    std::string w;
    int k = syllables(rng);
    for (int s = 0; s < k; ++s) {
      w.push_back(consonants[pick_c(rng)]);
      w.push_back(vowels[pick_v(rng)]);
    }
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

}  // namespace

std::vector<Tokens> generate_base_corpus(const BaseLanguageSpec& spec) {
  if (spec.vocab_size < 2 || spec.successors < 1 || spec.min_length < 1 ||
      spec.max_length < spec.min_length) {
    throw Error("invalid base language spec");
  }
  std::mt19937_64 rng(spec.seed);
  auto words = make_pseudo_words(spec.vocab_size, "bdfgklmnprstv", "aeiou", rng);

  std::vector<double> popularity(spec.vocab_size);
  for (std::size_t r = 0; r < spec.vocab_size; ++r) {
    popularity[r] = 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_exponent);
  }
  std::discrete_distribution<std::size_t> by_popularity(popularity.begin(), popularity.end());
  std::uniform_real_distribution<double> jitter(0.2, 1.0);

  // Sparse successor lists give every word its own distributional signature.
  auto fanout = std::min(spec.successors, spec.vocab_size);
  std::vector<std::vector<std::size_t>> next(spec.vocab_size);
  std::vector<std::discrete_distribution<std::size_t>> next_dist(spec.vocab_size);
  for (std::size_t w = 0; w < spec.vocab_size; ++w) {
    std::set<std::size_t> chosen;
    while (chosen.size() < fanout) chosen.insert(by_popularity(rng));
    next[w].assign(chosen.begin(), chosen.end());
    std::vector<double> weights;
    for (auto v : next[w]) weights.push_back(popularity[v] * jitter(rng));
    next_dist[w] = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
  }

  std::uniform_int_distribution<std::size_t> length(spec.min_length, spec.max_length);
  std::vector<Tokens> corpus;
  corpus.reserve(spec.sentences);
  for (std::size_t s = 0; s < spec.sentences; ++s) {
    auto n = length(rng);
    Tokens line;
    line.reserve(n);
    std::size_t w = by_popularity(rng);
    for (std::size_t i = 0; i < n; ++i) {
      line.push_back(words[w]);
      w = next[w][next_dist[w](rng)];
    }
    corpus.push_back(std::move(line));
  }
  return corpus;
}

std::vector<int> cipher_permutation(const std::vector<bool>& mobile, int window) {
  if (window < 0) throw Error("reorder window must be >= 0");
  const int n = static_cast<int>(mobile.size());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  int i = 0;
  while (i < n) {
    int d = std::min(window, n - 1 - i);
    if (mobile[static_cast<std::size_t>(i)] && d > 0) {
      for (int j = 0; j < d; ++j) perm[static_cast<std::size_t>(i + j)] = i + j + 1;
      perm[static_cast<std::size_t>(i + d)] = i;
      i += d + 1;
    } else {
      ++i;
    }
  }
  return perm;
}

SyntheticPair generate_synthetic_pair(const SyntheticPairSpec& spec) {
  if (spec.base.empty()) throw Error("synthetic pair: empty base corpus");
  if (spec.reorder_window < 0) throw Error("reorder window must be >= 0");
  if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0) throw Error("noise rate must be in [0,1)");
  if (spec.base.size() < spec.dev_size + 2) throw Error("synthetic pair: base corpus too small");

  std::mt19937_64 rng(spec.seed);

  // Relabeling over every type in the base corpus, in sorted order so that
  // the mapping only depends on the seed and the type inventory.
  std::set<std::string> types;
  for (const auto& line : spec.base) types.insert(line.begin(), line.end());
  auto y_names = make_pseudo_words(types.size(), "chjqwxz", "aeiouy", rng);
  std::shuffle(y_names.begin(), y_names.end(), rng);

  GoldDictionary gold;
  std::unordered_map<std::string, bool> mobile;
  std::bernoulli_distribution is_mobile(spec.mobile_fraction);
  {
    std::size_t i = 0;
    for (const auto& t : types) {
      gold.emplace(t, y_names[i++]);
      mobile.emplace(t, is_mobile(rng));
    }
  }

  auto cipher = [&](const Tokens& x, std::vector<int>* perm_out, bool noisy) {
    std::vector<bool> flags;
    flags.reserve(x.size());
    for (const auto& t : x) flags.push_back(mobile.at(t));
    auto perm = cipher_permutation(flags, spec.reorder_window);
    Tokens y;
    y.reserve(x.size());
    for (int p : perm) y.push_back(gold.at(x[static_cast<std::size_t>(p)]));
    if (noisy && spec.noise_rate > 0.0) {
      std::bernoulli_distribution flip(spec.noise_rate);
      std::uniform_int_distribution<std::size_t> any(0, y_names.size() - 1);
      for (auto& t : y) {
        if (flip(rng)) t = y_names[any(rng)];
      }
    }
    if (perm_out) *perm_out = std::move(perm);
    return y;
  };

  std::vector<std::size_t> order(spec.base.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  SyntheticPair out;
  std::size_t pos = 0;
  for (; pos < spec.dev_size; ++pos) {
    const auto& x = spec.base[order[pos]];
    out.dev_x.push_back(x);
    out.dev_y.push_back(cipher(x, nullptr, false));
  }
  const std::size_t rest = spec.base.size() - spec.dev_size;
  const std::size_t half = rest / 2;
  std::vector<Tokens> x_lines, y_lines;
  x_lines.reserve(half);
  y_lines.reserve(rest - half);
  for (std::size_t i = 0; i < half; ++i, ++pos) x_lines.push_back(spec.base[order[pos]]);
  for (; pos < spec.base.size(); ++pos) {
    const auto& x = spec.base[order[pos]];
    std::vector<int> perm;
    y_lines.push_back(cipher(x, &perm, true));
    out.y_base.push_back(x);
    out.y_permutation.push_back(std::move(perm));
  }

  auto xv = std::make_shared<const Vocabulary>(Vocabulary::build(x_lines, spec.min_count, spec.max_words));
  auto yv = std::make_shared<const Vocabulary>(Vocabulary::build(y_lines, spec.min_count, spec.max_words));
  out.x = make_corpus("x", x_lines, xv, "synthetic:x");
  out.y = make_corpus("y", y_lines, yv, "synthetic:y");
  out.gold = std::move(gold);
  return out;
}

}  // namespace unmt
