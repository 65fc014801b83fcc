#include "unmt/nmt/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace unmt::nmt {

namespace {

enum Param : std::size_t {
  kEmb,
  kEncFWx, kEncFWh, kEncFbx, kEncFbhn,
  kEncBWx, kEncBWh, kEncBbx, kEncBbhn,
  kInitW, kInitb,
  kDecWx, kDecWh, kDecbx, kDecbhn,
  kAttWa, kAttUa, kAttv,
  kOutWo, kOutbo, kOutWy, kOutby,
  kNumParams
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
Mat<S> sigmoid(const Mat<S>& x) {
  return (S(1) + (-x.array()).exp()).inverse().matrix();
}

// Views over one GRU's parameters (or their gradients).
template <typename S, typename Store>
struct GruParams {
  Eigen::Map<Store> wx, wh;
  Eigen::Map<Store> bx, bhn;
};

template <typename S>
struct GruStep {
  Mat<S> x, hprev, z, r, n, hn, h;
};

template <typename S, typename P>
void gru_forward(const P& p, GruStep<S>& st) {
  const Eigen::Index H = p.wh.cols();
  Mat<S> ax = p.wx * st.x;
  ax.colwise() += Vec<S>(p.bx);
  Mat<S> ah = p.wh * st.hprev;
  st.z = sigmoid<S>(ax.topRows(H) + ah.topRows(H));
  st.r = sigmoid<S>(ax.middleRows(H, H) + ah.middleRows(H, H));
  st.hn = ah.bottomRows(H);
  st.hn.colwise() += Vec<S>(p.bhn);
  st.n = (ax.bottomRows(H).array() + st.r.array() * st.hn.array()).tanh().matrix();
  st.h = ((S(1) - st.z.array()) * st.n.array() + st.z.array() * st.hprev.array()).matrix();
}

// dh is the gradient w.r.t. st.h; returns dx and adds to dhprev. Columns with
// valid[b] == false were carried over unchanged (h = hprev).
template <typename S, typename P, typename G>
Mat<S> gru_backward(const P& p, G& g, const GruStep<S>& st, const Mat<S>& dh, Mat<S>& dhprev,
                    const std::vector<char>* valid) {
  const Eigen::Index H = p.wh.cols();
  const Eigen::Index B = dh.cols();
  Mat<S> dhh = dh;
  if (valid) {
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!(*valid)[static_cast<std::size_t>(b)]) {
        dhprev.col(b) += dh.col(b);
        dhh.col(b).setZero();
      }
    }
  }
  auto z = st.z.array();
  auto r = st.r.array();
  auto n = st.n.array();
  Mat<S> dn = (dhh.array() * (S(1) - z)).matrix();
  Mat<S> dz = (dhh.array() * (st.hprev.array() - n)).matrix();
  dhprev += (dhh.array() * z).matrix();
  Mat<S> dan = (dn.array() * (S(1) - n * n)).matrix();
  Mat<S> dr = (dan.array() * st.hn.array()).matrix();
  Mat<S> dhn = (dan.array() * r).matrix();
  Mat<S> dax(3 * H, B), dah(3 * H, B);
  dax.topRows(H) = (dz.array() * z * (S(1) - z)).matrix();
  dax.middleRows(H, H) = (dr.array() * r * (S(1) - r)).matrix();
  dax.bottomRows(H) = dan;
  dah.topRows(2 * H) = dax.topRows(2 * H);
  dah.bottomRows(H) = dhn;
  g.wx.noalias() += dax * st.x.transpose();
  g.bx += dax.rowwise().sum();
  g.wh.noalias() += dah * st.hprev.transpose();
  g.bhn += dhn.rowwise().sum();
  dhprev.noalias() += p.wh.transpose() * dah;
  return p.wx.transpose() * dax;
}

constexpr char kMagic[8] = {'U', 'N', 'M', 'T', 'N', 'M', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("checkpoint: truncated file");
  return v;
}

}  // namespace

template <typename S>
BasicNMT<S>::BasicNMT(VocabPtr src_vocab, VocabPtr tgt_vocab, NMTConfig config)
    : src_vocab_(std::move(src_vocab)), tgt_vocab_(std::move(tgt_vocab)), config_(config) {
  if (!src_vocab_ || !tgt_vocab_) throw Error("nmt: vocabularies required");
  if (config_.emb < 1 || config_.hidden < 2 || config_.hidden % 2 != 0) {
    throw Error("nmt: emb must be >= 1 and hidden a positive even number");
  }
  // Shared embedding rows: specials, then source words, then target words
  // whose spelling is not already present.
  std::unordered_map<std::string, WordId> index;
  WordId next = 0;
  for (WordId i = 0; i < Vocabulary::kNumSpecial; ++i) index.emplace(src_vocab_->token(i), next++);
  src_to_union_.resize(src_vocab_->size());
  tgt_to_union_.resize(tgt_vocab_->size());
  for (WordId i = 0; static_cast<std::size_t>(i) < src_vocab_->size(); ++i) {
    auto [it, fresh] = index.emplace(src_vocab_->token(i), next);
    if (fresh) ++next;
    src_to_union_[static_cast<std::size_t>(i)] = it->second;
  }
  for (WordId i = 0; static_cast<std::size_t>(i) < tgt_vocab_->size(); ++i) {
    auto [it, fresh] = index.emplace(tgt_vocab_->token(i), next);
    if (fresh) ++next;
    tgt_to_union_[static_cast<std::size_t>(i)] = it->second;
  }
  union_size_ = next;
  build_layout();
  init_params();
}

template <typename S>
WordId BasicNMT<S>::embed_src(WordId w) const {
  if (!src_vocab_->contains(w)) throw Error(fmt::format("nmt: source id {} out of range", w));
  return src_to_union_[static_cast<std::size_t>(w)];
}

template <typename S>
WordId BasicNMT<S>::embed_tgt(WordId w) const {
  if (!tgt_vocab_->contains(w)) throw Error(fmt::format("nmt: target id {} out of range", w));
  return tgt_to_union_[static_cast<std::size_t>(w)];
}

template <typename S>
void BasicNMT<S>::build_layout() {
  const Eigen::Index E = config_.emb, H = config_.hidden, H2 = H / 2, A = H;
  const auto V = static_cast<Eigen::Index>(tgt_vocab_->size());
  const std::vector<std::tuple<const char*, Eigen::Index, Eigen::Index>> shapes = {
      {"emb", E, union_size_},
      {"enc_f.wx", 3 * H2, E}, {"enc_f.wh", 3 * H2, H2}, {"enc_f.bx", 3 * H2, 1}, {"enc_f.bhn", H2, 1},
      {"enc_b.wx", 3 * H2, E}, {"enc_b.wh", 3 * H2, H2}, {"enc_b.bx", 3 * H2, 1}, {"enc_b.bhn", H2, 1},
      {"init.w", H, H}, {"init.b", H, 1},
      {"dec.wx", 3 * H, E}, {"dec.wh", 3 * H, H}, {"dec.bx", 3 * H, 1}, {"dec.bhn", H, 1},
      {"att.wa", A, H}, {"att.ua", A, H}, {"att.v", A, 1},
      {"out.wo", H, 2 * H}, {"out.bo", H, 1}, {"out.wy", V, H}, {"out.by", V, 1},
  };
  layout_.clear();
  std::size_t offset = 0;
  for (const auto& [name, r, c] : shapes) {
    layout_.push_back({name, r, c, offset});
    offset += static_cast<std::size_t>(r * c);
    constexpr std::size_t kAlign = 64 / sizeof(S);
    offset = (offset + kAlign - 1) / kAlign * kAlign;
  }
  params_.assign(offset, S(0));
}

template <typename S>
void BasicNMT<S>::init_params() {
  std::mt19937_64 rng(config_.seed);
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const auto& info = layout_[i];
    if (info.cols == 1) continue;  // biases start at zero
    double bound = i == kEmb ? 0.1 : std::sqrt(6.0 / static_cast<double>(info.rows + info.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    S* p = params_.data() + info.offset;
    for (Eigen::Index k = 0; k < info.rows * info.cols; ++k) p[k] = static_cast<S>(dist(rng));
  }
}

template <typename S>
TrainBatch BasicNMT<S>::make_batch(const std::vector<Sentence>& src, const std::vector<Sentence>& tgt,
                                   const std::vector<double>& weights) const {
  if (src.size() != tgt.size()) throw Error("nmt: batch side sizes differ");
  if (!weights.empty() && weights.size() != src.size()) throw Error("nmt: weight count mismatch");
  TrainBatch b;
  const auto B = static_cast<Eigen::Index>(src.size());
  Eigen::Index ts = 0, ty = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ts = std::max<Eigen::Index>(ts, static_cast<Eigen::Index>(src[i].size()));
    ty = std::max<Eigen::Index>(ty, static_cast<Eigen::Index>(tgt[i].size()) + 1);
  }
  b.src = Eigen::MatrixXi::Zero(ts, B);
  b.tgt_in = Eigen::MatrixXi::Zero(ty, B);
  b.tgt_out = Eigen::MatrixXi::Zero(ty, B);
  for (Eigen::Index c = 0; c < B; ++c) {
    const auto& s = src[static_cast<std::size_t>(c)];
    const auto& t = tgt[static_cast<std::size_t>(c)];
    for (std::size_t j = 0; j < s.size(); ++j) b.src(static_cast<Eigen::Index>(j), c) = embed_src(s[j]);
    b.tgt_in(0, c) = embed_tgt(Vocabulary::kBos);
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (!tgt_vocab_->contains(t[j])) throw Error(fmt::format("nmt: target id {} out of range", t[j]));
      b.tgt_in(static_cast<Eigen::Index>(j + 1), c) = embed_tgt(t[j]);
      b.tgt_out(static_cast<Eigen::Index>(j), c) = t[j];
    }
    b.tgt_out(static_cast<Eigen::Index>(t.size()), c) = Vocabulary::kEos;
    b.src_len.push_back(static_cast<int>(s.size()));
    b.tgt_len.push_back(static_cast<int>(t.size()) + 1);
    double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(c)];
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("nmt: weights must be finite and >= 0");
    b.weight.push_back(w);
  }
  return b;
}

template <typename S>
double BasicNMT<S>::loss(const TrainBatch& batch, ParamVector<S>* grad) const {
  using M = Mat<S>;
  using ConstMap = Eigen::Map<const M>;
  using MutMap = Eigen::Map<M>;
  const Eigen::Index E = config_.emb, H = config_.hidden, H2 = H / 2;
  const Eigen::Index B = batch.size();
  const Eigen::Index Ts = batch.src.rows();
  const Eigen::Index Ty = batch.tgt_in.rows();
  if (B == 0) throw Error("nmt: empty batch");

  auto P = [this](std::size_t i) { return param(i); };
  auto gru = [&](std::size_t first) {
    return GruParams<S, const M>{P(first), P(first + 1), P(first + 2), P(first + 3)};
  };
  const auto pf = gru(kEncFWx), pb = gru(kEncBWx), pd = gru(kDecWx);
  const ConstMap emb = P(kEmb);

  double total_weight = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) total_weight += batch.weight[static_cast<std::size_t>(b)] * batch.tgt_len[static_cast<std::size_t>(b)];
  if (total_weight <= 0.0) return 0.0;

  auto gather = [&](const Eigen::MatrixXi& ids, Eigen::Index t) {
    M x(E, B);
    for (Eigen::Index b = 0; b < B; ++b) x.col(b) = emb.col(ids(t, b));
    return x;
  };

  // Encoder.
  std::vector<std::vector<char>> valid(static_cast<std::size_t>(Ts), std::vector<char>(static_cast<std::size_t>(B)));
  for (Eigen::Index t = 0; t < Ts; ++t) {
    for (Eigen::Index b = 0; b < B; ++b) valid[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)] = t < batch.src_len[static_cast<std::size_t>(b)];
  }
  auto run_dir = [&](const auto& p, bool backward) {
    std::vector<GruStep<S>> steps(static_cast<std::size_t>(Ts));
    M h = M::Zero(H2, B);
    for (Eigen::Index k = 0; k < Ts; ++k) {
      Eigen::Index t = backward ? Ts - 1 - k : k;
      auto& st = steps[static_cast<std::size_t>(t)];
      st.x = gather(batch.src, t);
      st.hprev = h;
      gru_forward<S>(p, st);
      for (Eigen::Index b = 0; b < B; ++b) {
        if (!valid[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)]) st.h.col(b) = st.hprev.col(b);
      }
      h = st.h;
    }
    return steps;
  };
  auto fwd = run_dir(pf, false);
  auto bwd = run_dir(pb, true);
  std::vector<M> ann(static_cast<std::size_t>(Ts));
  for (Eigen::Index t = 0; t < Ts; ++t) {
    M a(H, B);
    a.topRows(H2) = fwd[static_cast<std::size_t>(t)].h;
    a.bottomRows(H2) = bwd[static_cast<std::size_t>(t)].h;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!valid[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)]) a.col(b).setZero();
    }
    ann[static_cast<std::size_t>(t)] = std::move(a);
  }

  // Decoder initial state from the mean annotation.
  M mean = M::Zero(H, B);
  for (Eigen::Index t = 0; t < Ts; ++t) mean += ann[static_cast<std::size_t>(t)];
  for (Eigen::Index b = 0; b < B; ++b) {
    int len = batch.src_len[static_cast<std::size_t>(b)];
    if (len > 0) mean.col(b) /= static_cast<S>(len);
  }
  M s0 = P(kInitW) * mean;
  s0.colwise() += Vec<S>(P(kInitb));
  s0 = s0.array().tanh().matrix();

  std::vector<GruStep<S>> dec(static_cast<std::size_t>(Ty));
  {
    M h = s0;
    for (Eigen::Index i = 0; i < Ty; ++i) {
      auto& st = dec[static_cast<std::size_t>(i)];
      st.x = gather(batch.tgt_in, i);
      st.hprev = h;
      gru_forward<S>(pd, st);
      h = st.h;
    }
  }

  // Attention + readout + loss, per decoder step.
  const ConstMap wa = P(kAttWa), ua = P(kAttUa), v = P(kAttv), wo = P(kOutWo), wy = P(kOutWy);
  const Vec<S> bo = P(kOutbo), by = P(kOutby);
  std::vector<M> keys(static_cast<std::size_t>(Ts));
  for (Eigen::Index t = 0; t < Ts; ++t) keys[static_cast<std::size_t>(t)] = ua * ann[static_cast<std::size_t>(t)];

  struct StepCache {
    std::vector<M> act;  // tanh(q + key_j), A x B
    M alpha;             // Ts x B
    M c, o, prob;        // H x B, H x B, V x B
  };
  std::vector<StepCache> cache(static_cast<std::size_t>(Ty));
  double total = 0.0;
  for (Eigen::Index i = 0; i < Ty; ++i) {
    auto& sc = cache[static_cast<std::size_t>(i)];
    const M& s = dec[static_cast<std::size_t>(i)].h;
    M q = wa * s;
    sc.act.resize(static_cast<std::size_t>(Ts));
    M e(Ts, B);
    for (Eigen::Index j = 0; j < Ts; ++j) {
      sc.act[static_cast<std::size_t>(j)] = (q + keys[static_cast<std::size_t>(j)]).array().tanh().matrix();
      e.row(j) = v.transpose() * sc.act[static_cast<std::size_t>(j)];
    }
    sc.alpha = M::Zero(Ts, B);
    sc.c = M::Zero(H, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      int len = batch.src_len[static_cast<std::size_t>(b)];
      if (len == 0) continue;
      auto col = e.col(b).head(len);
      S mx = col.maxCoeff();
      Vec<S> w = (col.array() - mx).exp().matrix();
      w /= w.sum();
      sc.alpha.col(b).head(len) = w;
      for (int j = 0; j < len; ++j) sc.c.col(b) += w(j) * ann[static_cast<std::size_t>(j)].col(b);
    }
    M so(2 * H, B);
    so.topRows(H) = s;
    so.bottomRows(H) = sc.c;
    sc.o = wo * so;
    sc.o.colwise() += bo;
    sc.o = sc.o.array().tanh().matrix();
    M logits = wy * sc.o;
    logits.colwise() += by;
    sc.prob.resize(logits.rows(), B);
    for (Eigen::Index b = 0; b < B; ++b) {
      auto col = logits.col(b);
      S mx = col.maxCoeff();
      Vec<S> ex = (col.array() - mx).exp().matrix();
      S z = ex.sum();
      sc.prob.col(b) = ex / z;
      if (i < batch.tgt_len[static_cast<std::size_t>(b)]) {
        int y = batch.tgt_out(i, b);
        double lp = static_cast<double>(col(y) - mx) - std::log(static_cast<double>(z));
        total -= batch.weight[static_cast<std::size_t>(b)] * lp;
      }
    }
  }
  const double loss_value = total / total_weight;
  if (!grad) return loss_value;

  // Backward.
  if (grad->size() != params_.size()) grad->assign(params_.size(), S(0));
  auto G = [&](std::size_t i) {
    return MutMap(grad->data() + layout_[i].offset, layout_[i].rows, layout_[i].cols);
  };
  auto ggru = [&](std::size_t first) { return GruParams<S, M>{G(first), G(first + 1), G(first + 2), G(first + 3)}; };
  auto gf = ggru(kEncFWx), gb = ggru(kEncBWx), gd = ggru(kDecWx);
  MutMap gemb = G(kEmb), gwa = G(kAttWa), gua = G(kAttUa), gv = G(kAttv), gwo = G(kOutWo), gbo = G(kOutbo),
         gwy = G(kOutWy), gby = G(kOutby);

  std::vector<M> dann(static_cast<std::size_t>(Ts), M::Zero(H, B));
  std::vector<M> dkeys(static_cast<std::size_t>(Ts), M::Zero(wa.rows(), B));
  std::vector<M> ds(static_cast<std::size_t>(Ty));
  for (Eigen::Index i = 0; i < Ty; ++i) {
    auto& sc = cache[static_cast<std::size_t>(i)];
    const M& s = dec[static_cast<std::size_t>(i)].h;
    M dlogits = sc.prob;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (i < batch.tgt_len[static_cast<std::size_t>(b)]) {
        dlogits(batch.tgt_out(i, b), b) -= S(1);
        dlogits.col(b) *= static_cast<S>(batch.weight[static_cast<std::size_t>(b)] / total_weight);
      } else {
        dlogits.col(b).setZero();
      }
    }
    gwy.noalias() += dlogits * sc.o.transpose();
    gby += dlogits.rowwise().sum();
    M dpo = ((wy.transpose() * dlogits).array() * (S(1) - sc.o.array().square())).matrix();
    M so(2 * H, B);
    so.topRows(H) = s;
    so.bottomRows(H) = sc.c;
    gwo.noalias() += dpo * so.transpose();
    gbo += dpo.rowwise().sum();
    M dso = wo.transpose() * dpo;
    ds[static_cast<std::size_t>(i)] = dso.topRows(H);
    M dc = dso.bottomRows(H);

    M dq = M::Zero(wa.rows(), B);
    for (Eigen::Index b = 0; b < B; ++b) {
      int len = batch.src_len[static_cast<std::size_t>(b)];
      if (len == 0) continue;
      Vec<S> dalpha(len);
      for (int j = 0; j < len; ++j) {
        dalpha(j) = ann[static_cast<std::size_t>(j)].col(b).dot(dc.col(b));
        dann[static_cast<std::size_t>(j)].col(b) += sc.alpha(j, b) * dc.col(b);
      }
      Vec<S> a = sc.alpha.col(b).head(len);
      S dot = a.dot(dalpha);
      Vec<S> de = (a.array() * (dalpha.array() - dot)).matrix();
      for (int j = 0; j < len; ++j) {
        const auto act = sc.act[static_cast<std::size_t>(j)].col(b);
        gv += de(j) * act;
        Vec<S> dpre = (de(j) * v.array() * (S(1) - act.array().square())).matrix();
        dq.col(b) += dpre;
        dkeys[static_cast<std::size_t>(j)].col(b) += dpre;
      }
    }
    gwa.noalias() += dq * s.transpose();
    ds[static_cast<std::size_t>(i)].noalias() += wa.transpose() * dq;
  }
  for (Eigen::Index t = 0; t < Ts; ++t) {
    gua.noalias() += dkeys[static_cast<std::size_t>(t)] * ann[static_cast<std::size_t>(t)].transpose();
    dann[static_cast<std::size_t>(t)].noalias() += ua.transpose() * dkeys[static_cast<std::size_t>(t)];
  }

  auto scatter = [&](const Eigen::MatrixXi& ids, Eigen::Index t, const M& dx) {
    for (Eigen::Index b = 0; b < B; ++b) gemb.col(ids(t, b)) += dx.col(b);
  };

  // Decoder BPTT.
  M dh = M::Zero(H, B);
  for (Eigen::Index i = Ty - 1; i >= 0; --i) {
    dh += ds[static_cast<std::size_t>(i)];
    M dprev = M::Zero(H, B);
    M dx = gru_backward<S>(pd, gd, dec[static_cast<std::size_t>(i)], dh, dprev, nullptr);
    scatter(batch.tgt_in, i, dx);
    dh = std::move(dprev);
  }
  // Init layer.
  M dpre0 = (dh.array() * (S(1) - s0.array().square())).matrix();
  G(kInitW).noalias() += dpre0 * mean.transpose();
  G(kInitb) += dpre0.rowwise().sum();
  M dmean = P(kInitW).transpose() * dpre0;
  for (Eigen::Index b = 0; b < B; ++b) {
    int len = batch.src_len[static_cast<std::size_t>(b)];
    if (len > 0) dmean.col(b) /= static_cast<S>(len);
  }
  for (Eigen::Index t = 0; t < Ts; ++t) {
    auto& d = dann[static_cast<std::size_t>(t)];
    d += dmean;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!valid[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)]) d.col(b).setZero();
    }
  }
  // Encoder BPTT, both directions.
  {
    M dhf = M::Zero(H2, B);
    for (Eigen::Index t = Ts - 1; t >= 0; --t) {
      dhf += dann[static_cast<std::size_t>(t)].topRows(H2);
      M dprev = M::Zero(H2, B);
      M dx = gru_backward<S>(pf, gf, fwd[static_cast<std::size_t>(t)], dhf, dprev, &valid[static_cast<std::size_t>(t)]);
      scatter(batch.src, t, dx);
      dhf = std::move(dprev);
    }
    M dhb = M::Zero(H2, B);
    for (Eigen::Index t = 0; t < Ts; ++t) {
      dhb += dann[static_cast<std::size_t>(t)].bottomRows(H2);
      M dprev = M::Zero(H2, B);
      M dx = gru_backward<S>(pb, gb, bwd[static_cast<std::size_t>(t)], dhb, dprev, &valid[static_cast<std::size_t>(t)]);
      scatter(batch.src, t, dx);
      dhb = std::move(dprev);
    }
  }
  return loss_value;
}

template <typename S>
typename BasicNMT<S>::State BasicNMT<S>::encode(const Sentence& src) const {
  using M = Mat<S>;
  const Eigen::Index E = config_.emb, H = config_.hidden, H2 = H / 2;
  const auto T = static_cast<Eigen::Index>(src.size());
  const auto emb = param(kEmb);
  State st;
  st.annotations = M::Zero(H, T);
  auto run = [&](std::size_t first, bool backward) {
    GruParams<S, const M> p{param(first), param(first + 1), param(first + 2), param(first + 3)};
    GruStep<S> g;
    M h = M::Zero(H2, 1);
    for (Eigen::Index k = 0; k < T; ++k) {
      Eigen::Index t = backward ? T - 1 - k : k;
      g.x = emb.col(embed_src(src[static_cast<std::size_t>(t)]));
      g.hprev = h;
      gru_forward<S>(p, g);
      h = g.h;
      st.annotations.block(backward ? H2 : 0, t, H2, 1) = h;
    }
  };
  (void)E;
  run(kEncFWx, false);
  run(kEncBWx, true);
  st.keys = param(kAttUa) * st.annotations;
  Vec<S> mean = Vec<S>::Zero(H);
  if (T > 0) mean = st.annotations.rowwise().sum() / static_cast<S>(T);
  st.s = (param(kInitW) * mean + Vec<S>(param(kInitb))).array().tanh().matrix();
  return st;
}

template <typename S>
typename BasicNMT<S>::Vector BasicNMT<S>::step(State& st, WordId prev) const {
  using M = Mat<S>;
  const Eigen::Index H = config_.hidden;
  GruParams<S, const M> p{param(kDecWx), param(kDecWh), param(kDecbx), param(kDecbhn)};
  GruStep<S> g;
  g.x = param(kEmb).col(embed_tgt(prev));
  g.hprev = st.s;
  gru_forward<S>(p, g);
  st.s = g.h;
  const Eigen::Index T = st.annotations.cols();
  Vec<S> c = Vec<S>::Zero(H);
  if (T > 0) {
    Vec<S> q = param(kAttWa) * st.s;
    Vec<S> e(T);
    const auto v = param(kAttv);
    for (Eigen::Index j = 0; j < T; ++j) e(j) = v.col(0).dot((q + st.keys.col(j)).array().tanh().matrix());
    S mx = e.maxCoeff();
    Vec<S> w = (e.array() - mx).exp().matrix();
    w /= w.sum();
    c = st.annotations * w;
  }
  Vec<S> so(2 * H);
  so.head(H) = st.s;
  so.tail(H) = c;
  Vec<S> o = (param(kOutWo) * so + Vec<S>(param(kOutbo))).array().tanh().matrix();
  Vec<S> logits = param(kOutWy) * o + Vec<S>(param(kOutby));
  S mx = logits.maxCoeff();
  S lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

template <typename S>
double BasicNMT<S>::forward_logprob(const Sentence& x, const Sentence& y) const {
  State st = encode(x);
  double total = 0.0;
  WordId prev = Vocabulary::kBos;
  for (WordId w : y) {
    if (!tgt_vocab_->contains(w)) throw Error(fmt::format("nmt: target id {} out of range", w));
    total += static_cast<double>(step(st, prev)(w));
    prev = w;
  }
  total += static_cast<double>(step(st, prev)(Vocabulary::kEos));
  return total;
}

namespace {

// Argmax excluding the begin marker; lowest id wins ties.
template <typename V>
WordId best_token(const V& lp) {
  WordId best = -1;
  for (Eigen::Index k = 0; k < lp.size(); ++k) {
    if (k == Vocabulary::kBos) continue;
    if (best < 0 || lp(k) > lp(best)) best = static_cast<WordId>(k);
  }
  return best;
}

}  // namespace

template <typename S>
Sentence BasicNMT<S>::greedy(const Sentence& x, int max_len) const {
  State st = encode(x);
  Sentence out;
  WordId prev = Vocabulary::kBos;
  while (static_cast<int>(out.size()) < max_len) {
    WordId w = best_token(step(st, prev));
    if (w == Vocabulary::kEos) break;
    out.push_back(w);
    prev = w;
  }
  return out;
}

template <typename S>
double BasicNMT<S>::normalized_score(const Sentence& x, const Sentence& y, int max_len) const {
  State st = encode(x);
  double total = 0.0;
  WordId prev = Vocabulary::kBos;
  for (WordId w : y) {
    total += static_cast<double>(step(st, prev)(w));
    prev = w;
  }
  std::size_t n = y.size();
  if (static_cast<int>(y.size()) < max_len) {
    total += static_cast<double>(step(st, prev)(Vocabulary::kEos));
    ++n;
  }
  return total / static_cast<double>(std::max<std::size_t>(n, 1));
}

template <typename S>
Sentence BasicNMT<S>::beam(const Sentence& x, int beam_size, int max_len) const {
  if (beam_size < 1) throw Error("nmt: beam must be >= 1");
  if (beam_size == 1) return greedy(x, max_len);
  struct Hyp {
    Sentence words;
    double logp = 0.0;
    State state;
  };
  struct Done {
    Sentence words;
    double score;
  };
  State root = encode(x);
  std::vector<Hyp> live{{{}, 0.0, root}};
  std::vector<Done> done;
  auto better = [](double a, const Sentence& wa, double b, const Sentence& wb) {
    if (a != b) return a > b;
    return wa < wb;
  };
  for (int t = 0; t <= max_len && !live.empty(); ++t) {
    struct Cand {
      std::size_t parent;
      WordId word;
      double logp;
    };
    std::vector<Cand> cands;
    std::vector<Vector> dists;
    for (std::size_t h = 0; h < live.size(); ++h) {
      State st = live[h].state;
      WordId prev = live[h].words.empty() ? Vocabulary::kBos : live[h].words.back();
      Vector lp = step(st, prev);
      live[h].state = std::move(st);
      if (t == max_len) {
        // Length cap reached: the hypothesis ends without an end marker.
        done.push_back({live[h].words, live[h].logp / static_cast<double>(std::max<std::size_t>(live[h].words.size(), 1))});
        continue;
      }
      for (Eigen::Index k = 0; k < lp.size(); ++k) {
        if (k == Vocabulary::kBos) continue;
        cands.push_back({h, static_cast<WordId>(k), live[h].logp + static_cast<double>(lp(k))});
      }
    }
    if (t == max_len) break;
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.word < b.word;
    });
    std::vector<Hyp> next;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size()) >= beam_size) break;
      Sentence words = live[c.parent].words;
      if (c.word == Vocabulary::kEos) {
        done.push_back({words, c.logp / static_cast<double>(words.size() + 1)});
        continue;
      }
      words.push_back(c.word);
      next.push_back({std::move(words), c.logp, live[c.parent].state});
    }
    live = std::move(next);
  }
  Sentence g = greedy(x, max_len);
  Done best{g, normalized_score(x, g, max_len)};
  for (const auto& d : done) {
    if (better(d.score, d.words, best.score, best.words)) best = d;
  }
  return best.words;
}

template <typename S>
std::vector<Sentence> BasicNMT<S>::greedy_batch(const std::vector<Sentence>& xs, int max_len, int batch_size) const {
  using M = Mat<S>;
  const Eigen::Index H = config_.hidden, H2 = H / 2;
  std::vector<Sentence> out(xs.size());
  // Sort by length so padding stays small; results go back to input order.
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&xs](std::size_t a, std::size_t b) { return xs[a].size() < xs[b].size(); });
  const auto emb = param(kEmb);
  GruParams<S, const M> pf{param(kEncFWx), param(kEncFWh), param(kEncFbx), param(kEncFbhn)};
  GruParams<S, const M> pb{param(kEncBWx), param(kEncBWh), param(kEncBbx), param(kEncBbhn)};
  GruParams<S, const M> pd{param(kDecWx), param(kDecWh), param(kDecbx), param(kDecbhn)};
  const auto wa = param(kAttWa), ua = param(kAttUa), v = param(kAttv), wo = param(kOutWo), wy = param(kOutWy);
  const Vec<S> bo = param(kOutbo), by = param(kOutby), bi = param(kInitb);

  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    const auto B = static_cast<Eigen::Index>(end - start);
    Eigen::Index Ts = 0;
    std::vector<int> len(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) {
      len[static_cast<std::size_t>(b)] = static_cast<int>(xs[order[start + static_cast<std::size_t>(b)]].size());
      Ts = std::max<Eigen::Index>(Ts, len[static_cast<std::size_t>(b)]);
    }
    std::vector<M> ann(static_cast<std::size_t>(Ts), M::Zero(H, B));
    auto run = [&](const auto& p, bool backward) {
      GruStep<S> g;
      M h = M::Zero(H2, B);
      for (Eigen::Index k = 0; k < Ts; ++k) {
        Eigen::Index t = backward ? Ts - 1 - k : k;
        g.x = M::Zero(config_.emb, B);
        for (Eigen::Index b = 0; b < B; ++b) {
          if (t < len[static_cast<std::size_t>(b)]) {
            g.x.col(b) = emb.col(embed_src(xs[order[start + static_cast<std::size_t>(b)]][static_cast<std::size_t>(t)]));
          }
        }
        g.hprev = h;
        gru_forward<S>(p, g);
        for (Eigen::Index b = 0; b < B; ++b) {
          if (t < len[static_cast<std::size_t>(b)]) {
            h.col(b) = g.h.col(b);
            ann[static_cast<std::size_t>(t)].block(backward ? H2 : 0, b, H2, 1) = h.col(b);
          }
        }
      }
    };
    run(pf, false);
    run(pb, true);
    std::vector<M> keys(static_cast<std::size_t>(Ts));
    M mean = M::Zero(H, B);
    for (Eigen::Index t = 0; t < Ts; ++t) {
      keys[static_cast<std::size_t>(t)] = ua * ann[static_cast<std::size_t>(t)];
      mean += ann[static_cast<std::size_t>(t)];
    }
    for (Eigen::Index b = 0; b < B; ++b) {
      if (len[static_cast<std::size_t>(b)] > 0) mean.col(b) /= static_cast<S>(len[static_cast<std::size_t>(b)]);
    }
    M s = param(kInitW) * mean;
    s.colwise() += bi;
    s = s.array().tanh().matrix();

    std::vector<WordId> prev(static_cast<std::size_t>(B), Vocabulary::kBos);
    std::vector<char> finished(static_cast<std::size_t>(B), 0);
    std::size_t remaining = static_cast<std::size_t>(B);
    GruStep<S> g;
    for (int t = 0; t < max_len && remaining > 0; ++t) {
      g.x.resize(config_.emb, B);
      for (Eigen::Index b = 0; b < B; ++b) g.x.col(b) = emb.col(embed_tgt(prev[static_cast<std::size_t>(b)]));
      g.hprev = s;
      gru_forward<S>(pd, g);
      s = g.h;
      M q = wa * s;
      M c = M::Zero(H, B);
      for (Eigen::Index b = 0; b < B; ++b) {
        int l = len[static_cast<std::size_t>(b)];
        if (l == 0 || finished[static_cast<std::size_t>(b)]) continue;
        Vec<S> e(l);
        for (int j = 0; j < l; ++j) {
          e(j) = v.col(0).dot((q.col(b) + keys[static_cast<std::size_t>(j)].col(b)).array().tanh().matrix());
        }
        S mx = e.maxCoeff();
        Vec<S> w = (e.array() - mx).exp().matrix();
        w /= w.sum();
        for (int j = 0; j < l; ++j) c.col(b) += w(j) * ann[static_cast<std::size_t>(j)].col(b);
      }
      M so(2 * H, B);
      so.topRows(H) = s;
      so.bottomRows(H) = c;
      M o = wo * so;
      o.colwise() += bo;
      o = o.array().tanh().matrix();
      M logits = wy * o;
      logits.colwise() += by;
      for (Eigen::Index b = 0; b < B; ++b) {
        if (finished[static_cast<std::size_t>(b)]) continue;
        WordId w = best_token(logits.col(b));
        if (w == Vocabulary::kEos) {
          finished[static_cast<std::size_t>(b)] = 1;
          --remaining;
          continue;
        }
        out[order[start + static_cast<std::size_t>(b)]].push_back(w);
        prev[static_cast<std::size_t>(b)] = w;
      }
    }
  }
  return out;
}

template <typename S>
void BasicNMT<S>::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(config_.emb));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(config_.hidden));
  write_le<std::uint64_t>(out, config_.seed);
  write_le<std::uint64_t>(out, src_vocab_->fingerprint());
  write_le<std::uint64_t>(out, tgt_vocab_->fingerprint());
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(layout_.size()));
  for (const auto& info : layout_) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(info.name.size()));
    out.write(info.name.data(), static_cast<std::streamsize>(info.name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(info.rows));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(info.cols));
    for (Eigen::Index k = 0; k < info.rows * info.cols; ++k) {
      write_le<float>(out, static_cast<float>(params_[info.offset + static_cast<std::size_t>(k)]));
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

template <typename S>
BasicNMT<S> BasicNMT<S>::load(const std::filesystem::path& path, VocabPtr src_vocab, VocabPtr tgt_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("checkpoint: bad magic");
  if (read_le<std::uint32_t>(in) != kVersion) throw Error("checkpoint: unsupported version");
  NMTConfig cfg;
  cfg.emb = static_cast<int>(read_le<std::uint32_t>(in));
  cfg.hidden = static_cast<int>(read_le<std::uint32_t>(in));
  cfg.seed = read_le<std::uint64_t>(in);
  if (read_le<std::uint64_t>(in) != src_vocab->fingerprint() ||
      read_le<std::uint64_t>(in) != tgt_vocab->fingerprint()) {
    throw Error("checkpoint: vocabulary mismatch");
  }
  BasicNMT model(std::move(src_vocab), std::move(tgt_vocab), cfg);
  auto count = read_le<std::uint32_t>(in);
  if (count != model.layout_.size()) throw Error("checkpoint: tensor count mismatch");
  for (const auto& info : model.layout_) {
    auto n = read_le<std::uint32_t>(in);
    std::string name(n, '\0');
    in.read(name.data(), n);
    auto rows = read_le<std::uint32_t>(in);
    auto cols = read_le<std::uint32_t>(in);
    if (name != info.name || rows != info.rows || cols != info.cols) {
      throw Error("checkpoint: unexpected tensor " + name);
    }
    for (Eigen::Index k = 0; k < info.rows * info.cols; ++k) {
      float f = read_le<float>(in);
      if (!std::isfinite(f)) throw Error("checkpoint: non-finite value in " + name);
      model.params_[info.offset + static_cast<std::size_t>(k)] = static_cast<S>(f);
    }
  }
  return model;
}

template class BasicNMT<float>;
template class BasicNMT<double>;

}  // namespace unmt::nmt
