#include "unmt/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "unmt/log.hpp"

namespace unmt {

// ---------------------------------------------------------------------------
// File I/O

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file: " + path.string());
  std::size_t count = 0;
  Eigen::Index dim = 0;
  {
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    if (!(hs >> count >> dim) || dim <= 0) throw Error("malformed embedding header: " + header);
  }
  std::vector<std::string> words;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, std::vector<double>>> specials;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (auto& x : v) {
      if (!(ls >> x)) throw Error("short embedding row for token: " + tok);
    }
    if (tok == Vocabulary::kBosToken || tok == Vocabulary::kEosToken || tok == Vocabulary::kUnkToken) {
      specials.emplace_back(tok, std::move(v));
    } else {
      words.push_back(tok);
      rows.push_back(std::move(v));
    }
  }
  if (words.size() + specials.size() != count) {
    throw Error("embedding file row count does not match header: " + path.string());
  }
  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::from_words(words));
  EmbeddingMatrix emb{vocab, RowMatrix::Zero(static_cast<Eigen::Index>(vocab->size()), dim)};
  for (auto& [tok, v] : specials) {
    auto id = *vocab->find(tok);
    emb.values.row(id) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), dim);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    emb.values.row(static_cast<Eigen::Index>(i) + Vocabulary::kNumSpecial) =
        Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), dim);
  }
  return emb;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& emb) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write embedding file: " + path.string());
  out << emb.rows() << ' ' << emb.dim() << '\n';
  out.precision(17);
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    out << emb.vocab->token(static_cast<WordId>(i));
    for (Eigen::Index j = 0; j < emb.dim(); ++j) out << ' ' << emb.values(i, j);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Skip-gram with negative sampling

namespace {

constexpr std::size_t kUnigramTableSize = 1'000'000;

double sigmoid(double x) {
  if (x > 30.0) return 1.0;
  if (x < -30.0) return 0.0;
  return 1.0 / (1.0 + std::exp(-x));
}

struct SkipGramState {
  RowMatrix in;
  RowMatrix out;
  std::vector<WordId> unigram_table;
  std::vector<double> keep_prob;
};

void train_shard(SkipGramState& st, const std::vector<const Sentence*>& shard,
                 const SkipGramConfig& cfg, std::uint64_t seed, double total_words,
                 std::size_t words_before_shard) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> table_pick(0, st.unigram_table.size() - 1);
  std::uniform_int_distribution<int> shrink(0, cfg.window - 1);
  const Eigen::Index dim = st.in.cols();
  Eigen::RowVectorXd grad(dim);
  std::vector<WordId> seq;
  std::size_t processed = words_before_shard;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const Sentence* s : shard) {
      seq.clear();
      for (WordId w : *s) {
        ++processed;
        if (Vocabulary::is_special(w)) continue;
        if (cfg.subsample > 0.0 && unit(rng) > st.keep_prob[static_cast<std::size_t>(w)]) continue;
        seq.push_back(w);
      }
      double progress = static_cast<double>(processed) / (cfg.epochs * total_words + 1.0);
      double alpha = cfg.learning_rate * std::max(1e-4, 1.0 - progress);
      const int n = static_cast<int>(seq.size());
      for (int pos = 0; pos < n; ++pos) {
        const WordId center = seq[static_cast<std::size_t>(pos)];
        const int b = shrink(rng);
        for (int c = pos - cfg.window + b; c <= pos + cfg.window - b; ++c) {
          if (c == pos || c < 0 || c >= n) continue;
          const WordId ctx = seq[static_cast<std::size_t>(c)];
          auto l1 = st.in.row(ctx);
          grad.setZero();
          for (int d = 0; d <= cfg.negatives; ++d) {
            WordId target;
            double label;
            if (d == 0) {
              target = center;
              label = 1.0;
            } else {
              target = st.unigram_table[table_pick(rng)];
              if (target == center) continue;
              label = 0.0;
            }
            auto l2 = st.out.row(target);
            double g = (label - sigmoid(l1.dot(l2))) * alpha;
            grad.noalias() += g * l2;
            l2.noalias() += g * l1;
          }
          l1 += grad;
        }
      }
    }
    // Shards restart their progress counter each epoch from the shard's own
    // offset; keep the global schedule monotone.
    processed = words_before_shard + static_cast<std::size_t>((epoch + 1) * total_words);
  }
}

}  // namespace

EmbeddingMatrix train_skipgram(const MonolingualCorpus& corpus, const SkipGramConfig& cfg) {
  if (cfg.dim < 2) throw Error("skip-gram dimension must be >= 2");
  if (cfg.window < 1 || cfg.negatives < 1 || cfg.epochs < 1) throw Error("invalid skip-gram config");
  if (corpus.sentences.empty() || !corpus.vocab) throw Error("empty corpus");

  const std::size_t V = corpus.vocab->size();
  std::vector<std::int64_t> counts(V, 0);
  std::size_t total = 0;
  for (const auto& s : corpus.sentences) {
    for (WordId w : s) {
      if (!corpus.vocab->contains(w)) throw Error("word id out of range in corpus");
      ++counts[static_cast<std::size_t>(w)];
      ++total;
    }
  }
  std::size_t observed = 0;
  std::int64_t real_tokens = 0;
  for (std::size_t w = Vocabulary::kNumSpecial; w < V; ++w) {
    if (counts[w] > 0) {
      ++observed;
      real_tokens += counts[w];
    }
  }
  if (observed < static_cast<std::size_t>(cfg.negatives) + 1) throw Error("corpus too small");

  SkipGramState st;
  std::mt19937_64 init_rng(cfg.seed);
  std::uniform_real_distribution<double> init(-0.5 / cfg.dim, 0.5 / cfg.dim);
  st.in.resize(static_cast<Eigen::Index>(V), cfg.dim);
  for (Eigen::Index i = 0; i < st.in.size(); ++i) st.in.data()[i] = init(init_rng);
  st.out = RowMatrix::Zero(static_cast<Eigen::Index>(V), cfg.dim);

  double norm = 0.0;
  for (std::size_t w = Vocabulary::kNumSpecial; w < V; ++w) norm += std::pow(static_cast<double>(counts[w]), 0.75);
  st.unigram_table.reserve(kUnigramTableSize);
  {
    double cum = 0.0;
    std::size_t w = Vocabulary::kNumSpecial;
    while (w < V && counts[w] == 0) ++w;
    cum = std::pow(static_cast<double>(counts[w]), 0.75) / norm;
    for (std::size_t a = 0; a < kUnigramTableSize; ++a) {
      st.unigram_table.push_back(static_cast<WordId>(w));
      if (static_cast<double>(a) / kUnigramTableSize > cum) {
        do {
          ++w;
        } while (w < V && counts[w] == 0);
        if (w >= V) {
          w = V - 1;
          while (counts[w] == 0) --w;
        }
        cum += std::pow(static_cast<double>(counts[w]), 0.75) / norm;
      }
    }
  }

  st.keep_prob.assign(V, 1.0);
  if (cfg.subsample > 0.0) {
    for (std::size_t w = 0; w < V; ++w) {
      if (counts[w] == 0) continue;
      double f = static_cast<double>(counts[w]) / static_cast<double>(real_tokens);
      st.keep_prob[w] = std::min(1.0, (std::sqrt(f / cfg.subsample) + 1.0) * cfg.subsample / f);
    }
  }

  const int threads = std::max(1, cfg.threads);
  std::vector<std::vector<const Sentence*>> shards(static_cast<std::size_t>(threads));
  std::vector<std::size_t> offsets(static_cast<std::size_t>(threads), 0);
  {
    std::size_t per = (corpus.sentences.size() + threads - 1) / threads;
    std::size_t words = 0;
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
      std::size_t shard = i / per;
      if (shards[shard].empty()) offsets[shard] = words;
      shards[shard].push_back(&corpus.sentences[i]);
      words += corpus.sentences[i].size();
    }
  }
  const auto total_words = static_cast<double>(total);
  if (threads == 1) {
    train_shard(st, shards[0], cfg, cfg.seed + 1, total_words, 0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        train_shard(st, shards[static_cast<std::size_t>(t)], cfg, cfg.seed + 1 + static_cast<std::uint64_t>(t),
                    total_words, offsets[static_cast<std::size_t>(t)]);
      });
    }
    for (auto& th : pool) th.join();
  }
  return EmbeddingMatrix{corpus.vocab, std::move(st.in)};
}

// ---------------------------------------------------------------------------
// Cross-lingual mapping

namespace {

void unit_rows(RowMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
}

void center_rows(RowMatrix& m) {
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(m.cols());
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m.row(i).squaredNorm() > 0.0) {
      mean += m.row(i);
      ++used;
    }
  }
  if (used == 0) return;
  mean /= static_cast<double>(used);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m.row(i).squaredNorm() > 0.0) m.row(i) -= mean;
  }
}

void normalize_matrix(RowMatrix& m) {
  unit_rows(m);
  center_rows(m);
  unit_rows(m);
}

std::vector<WordId> usable_rows(const RowMatrix& m) {
  std::vector<WordId> rows;
  for (Eigen::Index i = Vocabulary::kNumSpecial; i < m.rows(); ++i) {
    if (m.row(i).squaredNorm() > 0.0) rows.push_back(static_cast<WordId>(i));
  }
  return rows;
}

RowMatrix gather(const RowMatrix& m, const std::vector<WordId>& rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

// Sorted cosine similarities of every row to the first `anchors` rows. The
// profile of a word does not change under a rotation of its space.
RowMatrix anchor_profiles(const RowMatrix& x, Eigen::Index anchors) {
  RowMatrix sim = x * x.topRows(anchors).transpose();
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    std::sort(sim.row(i).data(), sim.row(i).data() + sim.cols());
  }
  normalize_matrix(sim);
  return sim;
}

struct Refined {
  Eigen::MatrixXd w;
  std::vector<std::pair<WordId, WordId>> dict;
  double objective = -1.0;
};

// Procrustes / MNN alternation from a seed dictionary. Indices are rows of x
// and z. The objective is the summed MNN cosine divided by the row count, so
// a run that locks onto a consistent mapping scores high.
Refined refine(const RowMatrix& x, const RowMatrix& z, std::vector<std::pair<WordId, WordId>> dict,
               int rounds, std::size_t dict_size) {
  const Eigen::Index dim = x.cols();
  std::vector<WordId> xr(static_cast<std::size_t>(x.rows()));
  std::vector<WordId> zr(static_cast<std::size_t>(z.rows()));
  std::iota(xr.begin(), xr.end(), 0);
  std::iota(zr.begin(), zr.end(), 0);
  Refined out;
  out.w = Eigen::MatrixXd::Identity(dim, dim);
  for (int round = 0; round < rounds; ++round) {
    RowMatrix xd(static_cast<Eigen::Index>(dict.size()), dim);
    RowMatrix zd(static_cast<Eigen::Index>(dict.size()), dim);
    for (std::size_t i = 0; i < dict.size(); ++i) {
      xd.row(static_cast<Eigen::Index>(i)) = x.row(dict[i].first);
      zd.row(static_cast<Eigen::Index>(i)) = z.row(dict[i].second);
    }
    out.w = procrustes(xd, zd);
    RowMatrix mapped = x * out.w;
    auto next = mutual_nearest_neighbors(mapped, xr, z, zr);
    if (next.size() > dict_size) next.resize(dict_size);
    double obj = 0.0;
    for (auto [a, b] : next) obj += mapped.row(a).dot(z.row(b));
    out.objective = obj / static_cast<double>(std::min(x.rows(), z.rows()));
    bool same = next == dict;
    dict = std::move(next);
    if (same || dict.empty()) break;
  }
  out.dict = std::move(dict);
  return out;
}

}  // namespace

void normalize_embeddings(EmbeddingMatrix& emb) { normalize_matrix(emb.values); }

Eigen::MatrixXd procrustes(const RowMatrix& x, const RowMatrix& z) {
  if (x.rows() != z.rows() || x.cols() != z.cols()) throw Error("procrustes: shape mismatch");
  Eigen::MatrixXd m = x.transpose() * z;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

std::vector<std::pair<WordId, WordId>> mutual_nearest_neighbors(const RowMatrix& src,
                                                                const std::vector<WordId>& src_rows,
                                                                const RowMatrix& tgt,
                                                                const std::vector<WordId>& tgt_rows) {
  RowMatrix s = gather(src, src_rows);
  RowMatrix t = gather(tgt, tgt_rows);
  unit_rows(s);
  unit_rows(t);
  const Eigen::MatrixXd sim = s * t.transpose();
  std::vector<Eigen::Index> fwd(static_cast<std::size_t>(sim.rows()));
  std::vector<Eigen::Index> bwd(static_cast<std::size_t>(sim.cols()));
  for (Eigen::Index i = 0; i < sim.rows(); ++i) sim.row(i).maxCoeff(&fwd[static_cast<std::size_t>(i)]);
  for (Eigen::Index j = 0; j < sim.cols(); ++j) sim.col(j).maxCoeff(&bwd[static_cast<std::size_t>(j)]);

  struct Scored {
    double sim;
    WordId s, t;
  };
  std::vector<Scored> pairs;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    auto j = fwd[static_cast<std::size_t>(i)];
    if (bwd[static_cast<std::size_t>(j)] == i) {
      pairs.push_back({sim(i, j), src_rows[static_cast<std::size_t>(i)], tgt_rows[static_cast<std::size_t>(j)]});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.s < b.s;
  });
  std::vector<std::pair<WordId, WordId>> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.emplace_back(p.s, p.t);
  return out;
}

AlignmentResult align_embeddings(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                                 const AlignConfig& cfg) {
  if (src.dim() != tgt.dim()) throw Error("align_embeddings: dimension mismatch");
  if (cfg.rounds < 1) throw Error("align_embeddings: rounds must be >= 1");
  const Eigen::Index dim = src.dim();

  RowMatrix xn = src.values;
  RowMatrix zn = tgt.values;
  normalize_matrix(xn);
  normalize_matrix(zn);
  auto x_rows = usable_rows(xn);
  auto z_rows = usable_rows(zn);
  if (x_rows.empty() || z_rows.empty()) throw Error("alignment underdetermined");

  // Restarts run on the most frequent words only.
  std::size_t n = std::min({cfg.search_vocab, x_rows.size(), z_rows.size()});
  std::vector<WordId> xs(x_rows.begin(), x_rows.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<WordId> zs(z_rows.begin(), z_rows.begin() + static_cast<std::ptrdiff_t>(n));
  RowMatrix xsub = gather(xn, xs);
  RowMatrix zsub = gather(zn, zs);

  std::vector<std::vector<std::pair<WordId, WordId>>> seeds;
  std::size_t largest_seed = 0;
  if (cfg.init == AlignInit::kIdentity) {
    std::vector<WordId> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    seeds.push_back(mutual_nearest_neighbors(xsub, idx, zsub, idx));
    largest_seed = seeds.back().size();
  } else {
    std::vector<WordId> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t anchors : cfg.anchor_sizes) {
      if (anchors > n) continue;
      auto full = mutual_nearest_neighbors(anchor_profiles(xsub, static_cast<Eigen::Index>(anchors)), idx,
                                           anchor_profiles(zsub, static_cast<Eigen::Index>(anchors)), idx);
      largest_seed = std::max(largest_seed, full.size());
      for (std::size_t keep : cfg.seed_sizes) {
        auto d = full;
        if (keep > 0 && d.size() > keep) d.resize(keep);
        if (!d.empty()) seeds.push_back(std::move(d));
      }
    }
  }
  if (largest_seed < static_cast<std::size_t>(dim)) throw Error("alignment underdetermined");

  Refined best;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    Refined r = refine(xsub, zsub, seeds[i], cfg.rounds, cfg.dict_size);
    log::debug("align restart {}: seed {} pairs, objective {:.4f}", i, seeds[i].size(), r.objective);
    if (r.objective > best.objective) best = std::move(r);
  }
  log::info("alignment objective {:.4f} over {} restarts", best.objective, seeds.size());

  // Final pass over the whole vocabulary, seeded with the best dictionary.
  std::vector<std::pair<WordId, WordId>> dict;
  for (auto [a, b] : best.dict) dict.emplace_back(xs[static_cast<std::size_t>(a)], zs[static_cast<std::size_t>(b)]);
  Eigen::MatrixXd w = best.w;
  if (x_rows.size() > n || z_rows.size() > n) {
    std::vector<std::pair<WordId, WordId>> local;
    std::unordered_map<WordId, WordId> xpos, zpos;
    for (std::size_t i = 0; i < x_rows.size(); ++i) xpos[x_rows[i]] = static_cast<WordId>(i);
    for (std::size_t i = 0; i < z_rows.size(); ++i) zpos[z_rows[i]] = static_cast<WordId>(i);
    for (auto [a, b] : dict) local.emplace_back(xpos[a], zpos[b]);
    Refined r = refine(gather(xn, x_rows), gather(zn, z_rows), local, cfg.rounds, cfg.dict_size);
    w = r.w;
    dict.clear();
    for (auto [a, b] : r.dict) dict.emplace_back(x_rows[static_cast<std::size_t>(a)], z_rows[static_cast<std::size_t>(b)]);
  }

  AlignmentResult result;
  result.map = w;
  result.mapped = EmbeddingMatrix{src.vocab, src.values * w};
  result.dictionary = std::move(dict);
  result.objective = best.objective;
  return result;
}

// ---------------------------------------------------------------------------
// Word translation tables

const std::vector<WordTranslationTable::Entry>& WordTranslationTable::candidates(WordId src) const {
  static const std::vector<Entry> kEmpty;
  if (src < 0 || static_cast<std::size_t>(src) >= entries.size()) return kEmpty;
  return entries[static_cast<std::size_t>(src)];
}

std::size_t WordTranslationTable::size() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.size();
  return n;
}

namespace {

std::vector<WordId> induction_rows(const EmbeddingMatrix& emb, std::size_t cap) {
  std::vector<WordId> rows;
  auto limit = static_cast<std::size_t>(emb.rows());
  if (cap > 0) limit = std::min(limit, cap + Vocabulary::kNumSpecial);
  for (std::size_t i = Vocabulary::kNumSpecial; i < limit; ++i) {
    if (emb.values.row(static_cast<Eigen::Index>(i)).norm() == 0.0) {
      throw Error("zero-norm embedding row for token '" + emb.vocab->token(static_cast<WordId>(i)) + "'");
    }
    rows.push_back(static_cast<WordId>(i));
  }
  return rows;
}

RowMatrix unit_gather(const EmbeddingMatrix& emb, const std::vector<WordId>& rows) {
  RowMatrix m = gather(emb.values, rows);
  unit_rows(m);
  return m;
}

struct InductionSetup {
  std::vector<WordId> src_rows, tgt_rows;
  RowMatrix s, t;
};

InductionSetup setup_induction(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                               const InduceConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw Error("lambda must be > 0");
  if (cfg.k < 1) throw Error("k must be >= 1");
  if (src.dim() != tgt.dim()) throw Error("induce_translation_table: dimension mismatch");
  InductionSetup su;
  su.src_rows = induction_rows(src, cfg.max_src_words);
  su.tgt_rows = induction_rows(tgt, cfg.max_tgt_words);
  if (su.src_rows.empty() || su.tgt_rows.empty()) throw Error("induce_translation_table: no words");
  su.s = unit_gather(src, su.src_rows);
  su.t = unit_gather(tgt, su.tgt_rows);
  return su;
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

WordTranslationTable induce_translation_table(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                                              const InduceConfig& cfg) {
  auto su = setup_induction(src, tgt, cfg);
  const Eigen::Index ns = su.s.rows();
  const Eigen::Index nt = su.t.rows();
  constexpr Eigen::Index kBlock = 256;

  // Column log-normalizers for p(x|y), streamed over row blocks.
  Eigen::RowVectorXd col_max = Eigen::RowVectorXd::Constant(nt, -std::numeric_limits<double>::infinity());
  Eigen::RowVectorXd col_sum = Eigen::RowVectorXd::Zero(nt);
  for (Eigen::Index b = 0; b < ns; b += kBlock) {
    Eigen::Index rows = std::min(kBlock, ns - b);
    Eigen::MatrixXd scores = cfg.lambda * (su.s.middleRows(b, rows) * su.t.transpose());
    for (Eigen::Index j = 0; j < nt; ++j) {
      double m = std::max(col_max(j), scores.col(j).maxCoeff());
      col_sum(j) = col_sum(j) * std::exp(col_max(j) - m) + (scores.col(j).array() - m).exp().sum();
      col_max(j) = m;
    }
  }
  Eigen::RowVectorXd col_lse = col_max.array() + col_sum.array().log();

  WordTranslationTable table;
  table.src_vocab = src.vocab;
  table.tgt_vocab = tgt.vocab;
  table.lambda = cfg.lambda;
  table.k = cfg.k;
  table.entries.resize(static_cast<std::size_t>(src.rows()));
  const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(cfg.k, nt));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(nt));
  for (Eigen::Index b = 0; b < ns; b += kBlock) {
    Eigen::Index rows = std::min(kBlock, ns - b);
    Eigen::MatrixXd scores = cfg.lambda * (su.s.middleRows(b, rows) * su.t.transpose());
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::RowVectorXd row = scores.row(r);
      double lse = log_sum_exp(row);
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](Eigen::Index a, Eigen::Index c) {
                          if (row(a) != row(c)) return row(a) > row(c);
                          return a < c;
                        });
      auto& out = table.entries[static_cast<std::size_t>(su.src_rows[static_cast<std::size_t>(b + r)])];
      out.reserve(k);
      for (std::size_t i = 0; i < k; ++i) {
        Eigen::Index j = order[i];
        double fwd = std::max(std::exp(row(j) - lse), std::numeric_limits<double>::min());
        double inv = std::max(std::exp(row(j) - col_lse(j)), std::numeric_limits<double>::min());
        out.push_back({su.tgt_rows[static_cast<std::size_t>(j)], std::min(fwd, 1.0), std::min(inv, 1.0)});
      }
    }
  }
  return table;
}

std::vector<std::pair<WordId, double>> forward_distribution(const EmbeddingMatrix& src,
                                                            const EmbeddingMatrix& tgt,
                                                            const InduceConfig& cfg, WordId src_id) {
  auto su = setup_induction(src, tgt, cfg);
  auto it = std::find(su.src_rows.begin(), su.src_rows.end(), src_id);
  if (it == su.src_rows.end()) throw Error("forward_distribution: source word not considered");
  Eigen::Index r = it - su.src_rows.begin();
  Eigen::RowVectorXd row = cfg.lambda * (su.s.row(r) * su.t.transpose());
  double lse = log_sum_exp(row);
  std::vector<std::pair<WordId, double>> out;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    out.emplace_back(su.tgt_rows[static_cast<std::size_t>(j)], std::exp(row(j) - lse));
  }
  return out;
}

void save_translation_table(const std::filesystem::path& path, const WordTranslationTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write translation table: " + path.string());
  out.precision(17);
  for (std::size_t s = 0; s < table.entries.size(); ++s) {
    for (const auto& e : table.entries[s]) {
      out << table.src_vocab->token(static_cast<WordId>(s)) << " ||| " << table.tgt_vocab->token(e.target)
          << " ||| " << e.forward << ' ' << e.inverse << '\n';
    }
  }
}

WordTranslationTable load_translation_table(const std::filesystem::path& path, VocabPtr src_vocab,
                                            VocabPtr tgt_vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open translation table: " + path.string());
  WordTranslationTable table;
  table.src_vocab = src_vocab;
  table.tgt_vocab = tgt_vocab;
  table.entries.resize(src_vocab->size());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto a = line.find(" ||| ");
    auto b = a == std::string::npos ? a : line.find(" ||| ", a + 5);
    if (b == std::string::npos) throw Error("malformed translation table line: " + line);
    auto s = src_vocab->find(line.substr(0, a));
    auto t = tgt_vocab->find(line.substr(a + 5, b - a - 5));
    if (!s || !t) continue;
    std::istringstream ps(line.substr(b + 5));
    WordTranslationTable::Entry e;
    e.target = *t;
    if (!(ps >> e.forward >> e.inverse)) throw Error("malformed translation table line: " + line);
    table.entries[static_cast<std::size_t>(*s)].push_back(e);
  }
  int k = 0;
  for (auto& list : table.entries) {
    std::stable_sort(list.begin(), list.end(), [](const auto& x, const auto& y) { return x.forward > y.forward; });
    k = std::max(k, static_cast<int>(list.size()));
  }
  table.k = k;
  return table;
}

Sentence word_by_word(const WordTranslationTable& table, const Sentence& src) {
  Sentence out;
  out.reserve(src.size());
  for (WordId w : src) {
    const auto& c = table.candidates(w);
    out.push_back(c.empty() ? Vocabulary::kUnk : c.front().target);
  }
  return out;
}

}  // namespace unmt
