#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "scoring.hpp"
#include "unmt/log.hpp"
#include "unmt/smt/model.hpp"

namespace unmt::smt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Option {
  int begin = 0;
  int end = 0;
  const Sentence* target = nullptr;
  const PhraseEntry* entry = nullptr;  // null for pass-through
  double static_part = 0.0;
  double estimate = 0.0;  // static part + context-free LM estimate
};

struct Hyp {
  std::uint64_t coverage = 0;
  int covered = 0;
  int last_end = 0;
  NGramLM::State lm;
  double score = 0.0;
  double future = 0.0;
  int parent = -1;
  const Option* option = nullptr;
};

struct RecombKey {
  std::uint64_t coverage;
  int last_end;
  NGramLM::State lm;
  friend bool operator==(const RecombKey& a, const RecombKey& b) {
    return a.coverage == b.coverage && a.last_end == b.last_end && a.lm == b.lm;
  }
};

struct RecombHash {
  std::size_t operator()(const RecombKey& k) const noexcept {
    std::uint64_t h = k.coverage * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(k.last_end);
    for (std::uint8_t i = 0; i < k.lm.size; ++i) h = (h ^ static_cast<std::uint64_t>(k.lm.words[i])) * 0x100000001B3ULL;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

const Sentence kUnkTarget{Vocabulary::kUnk};

class Decoder {
 public:
  Decoder(const SMTModel& m, const Sentence& src, DecoderConfig cfg) : m_(m), src_(src), cfg_(cfg) {
    n_ = static_cast<int>(src.size());
    build_options();
    build_future();
  }

  std::vector<Translation> run(std::size_t nbest) {
    pool_.clear();
    std::vector<std::vector<int>> stacks(static_cast<std::size_t>(n_ + 1));
    std::vector<std::unordered_map<RecombKey, int, RecombHash>> seen(static_cast<std::size_t>(n_ + 1));
    Hyp root;
    root.lm = m_.lm->begin_state();
    root.future = future_of(0);
    pool_.push_back(root);
    stacks[0].push_back(0);

    for (int k = 0; k < n_; ++k) {
      auto& stack = stacks[static_cast<std::size_t>(k)];
      prune(stack);
      for (int hi : stack) {
        const Hyp h = pool_[static_cast<std::size_t>(hi)];
        for (int b = 0; b < n_; ++b) {
          if (h.coverage >> b & 1U) continue;
          if (cfg_.distortion_limit >= 0 && std::abs(b - h.last_end) > cfg_.distortion_limit) continue;
          for (int e = b + 1; e <= n_ && e - b <= max_len_; ++e) {
            if (h.coverage >> (e - 1) & 1U) break;
            for (const Option& opt : options_[index(b, e)]) expand(hi, h, opt, stacks, seen);
          }
        }
      }
    }

    auto& last = stacks[static_cast<std::size_t>(n_)];
    struct Final {
      int hyp;
      double score;
      Sentence target;
    };
    std::vector<Final> finals;
    for (int hi : last) {
      NGramLM::State st = pool_[static_cast<std::size_t>(hi)].lm;
      double total = pool_[static_cast<std::size_t>(hi)].score + detail::end_score(m_, st);
      finals.push_back({hi, total, target_of(hi)});
    }
    const Vocabulary& tv = m_.tgt_vocab();
    std::sort(finals.begin(), finals.end(), [&](const Final& a, const Final& b) {
      if (a.score != b.score) return a.score > b.score;
      return tokens_less(tv, a.target, b.target);
    });
    std::vector<Translation> out;
    for (std::size_t i = 0; i < finals.size() && out.size() < nbest; ++i) {
      out.push_back(assemble(finals[i].hyp, finals[i].score));
    }
    return out;
  }

 private:
  std::size_t index(int b, int e) const { return static_cast<std::size_t>(b * (n_ + 1) + e); }

  static bool tokens_less(const Vocabulary& v, const Sentence& a, const Sentence& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                        [&v](WordId x, WordId y) { return v.token(x) < v.token(y); });
  }

  void build_options() {
    const PhraseTable& t = *m_.table;
    max_len_ = t.max_phrase_len();
    options_.assign(static_cast<std::size_t>((n_ + 1) * (n_ + 1)), {});
    const Vocabulary& tv = m_.tgt_vocab();
    for (int b = 0; b < n_; ++b) {
      for (int e = b + 1; e <= n_ && e - b <= max_len_; ++e) {
        std::span<const WordId> source(src_.data() + b, static_cast<std::size_t>(e - b));
        auto& opts = options_[index(b, e)];
        if (const auto* entries = t.find(source)) {
          for (const auto& entry : *entries) {
            Option o{b, e, &entry.target, &entry, detail::static_score(m_.weights, &entry, entry.target.size()), 0.0};
            opts.push_back(o);
          }
        } else if (e == b + 1) {
          opts.push_back({b, e, &kUnkTarget, nullptr, detail::static_score(m_.weights, nullptr, 1), 0.0});
        }
        for (auto& o : opts) {
          NGramLM::State empty;
          double lm = 0.0;
          for (WordId w : *o.target) lm += m_.lm->score_word(empty, w);
          o.estimate = o.static_part + m_.weights.lm * lm;
        }
        std::stable_sort(opts.begin(), opts.end(), [&tv](const Option& a, const Option& b) {
          if (a.estimate != b.estimate) return a.estimate > b.estimate;
          return tokens_less(tv, *a.target, *b.target);
        });
        if (opts.size() > cfg_.beam_width) opts.resize(cfg_.beam_width);
      }
    }
  }

  void build_future() {
    future_.assign(static_cast<std::size_t>((n_ + 1) * (n_ + 1)), kNegInf);
    for (int len = 1; len <= n_; ++len) {
      for (int b = 0; b + len <= n_; ++b) {
        int e = b + len;
        double best = kNegInf;
        for (const auto& o : options_[index(b, e)]) best = std::max(best, o.estimate);
        for (int mid = b + 1; mid < e; ++mid) best = std::max(best, future_[index(b, mid)] + future_[index(mid, e)]);
        future_[index(b, e)] = best;
      }
    }
  }

  double future_of(std::uint64_t coverage) const {
    double f = 0.0;
    int i = 0;
    while (i < n_) {
      if (coverage >> i & 1U) {
        ++i;
        continue;
      }
      int j = i;
      while (j < n_ && !(coverage >> j & 1U)) ++j;
      f += future_[index(i, j)];
      i = j;
    }
    return f;
  }

  void expand(int parent, const Hyp& h, const Option& opt, std::vector<std::vector<int>>& stacks,
              std::vector<std::unordered_map<RecombKey, int, RecombHash>>& seen) {
    Hyp nh;
    nh.coverage = h.coverage;
    for (int i = opt.begin; i < opt.end; ++i) nh.coverage |= std::uint64_t{1} << i;
    nh.covered = h.covered + (opt.end - opt.begin);
    nh.last_end = opt.end;
    nh.lm = h.lm;
    nh.score = h.score + detail::step_score(m_, opt.static_part, opt.begin, h.last_end, nh.lm, *opt.target);
    nh.future = future_of(nh.coverage);
    nh.parent = parent;
    nh.option = &opt;

    auto& bucket = seen[static_cast<std::size_t>(nh.covered)];
    RecombKey key{nh.coverage, nh.last_end, nh.lm};
    auto it = bucket.find(key);
    if (it != bucket.end()) {
      Hyp& old = pool_[static_cast<std::size_t>(it->second)];
      bool better = nh.score > old.score;
      if (nh.score == old.score) {
        pool_.push_back(nh);
        int cand = static_cast<int>(pool_.size()) - 1;
        better = tokens_less(m_.tgt_vocab(), target_of(cand), target_of(it->second));
        pool_.pop_back();
      }
      if (better) pool_[static_cast<std::size_t>(it->second)] = nh;
      return;
    }
    pool_.push_back(nh);
    int idx = static_cast<int>(pool_.size()) - 1;
    bucket.emplace(key, idx);
    stacks[static_cast<std::size_t>(nh.covered)].push_back(idx);
  }

  void prune(std::vector<int>& stack) {
    if (stack.size() <= cfg_.stack_size) return;
    std::stable_sort(stack.begin(), stack.end(), [this](int a, int b) {
      const Hyp& x = pool_[static_cast<std::size_t>(a)];
      const Hyp& y = pool_[static_cast<std::size_t>(b)];
      return x.score + x.future > y.score + y.future;
    });
    stack.resize(cfg_.stack_size);
  }

  Sentence target_of(int hi) const {
    std::vector<const Option*> path;
    for (int i = hi; i >= 0 && pool_[static_cast<std::size_t>(i)].option; i = pool_[static_cast<std::size_t>(i)].parent) {
      path.push_back(pool_[static_cast<std::size_t>(i)].option);
    }
    Sentence out;
    for (auto it = path.rbegin(); it != path.rend(); ++it) out.insert(out.end(), (*it)->target->begin(), (*it)->target->end());
    return out;
  }

  Translation assemble(int hi, double score) const {
    std::vector<const Option*> path;
    for (int i = hi; i >= 0 && pool_[static_cast<std::size_t>(i)].option; i = pool_[static_cast<std::size_t>(i)].parent) {
      path.push_back(pool_[static_cast<std::size_t>(i)].option);
    }
    Translation t;
    t.score = score;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      const Option& o = **it;
      DerivationStep step{o.begin, o.end, *o.target, o.entry == nullptr};
      for (WordId w : *o.target) {
        t.target.push_back(w);
        t.surface.push_back(step.passthrough ? m_.src_vocab().token(src_[static_cast<std::size_t>(o.begin)])
                                             : m_.tgt_vocab().token(w));
      }
      t.derivation.push_back(std::move(step));
    }
    return t;
  }

  const SMTModel& m_;
  const Sentence& src_;
  DecoderConfig cfg_;
  int n_ = 0;
  int max_len_ = 1;
  std::vector<std::vector<Option>> options_;
  std::vector<double> future_;
  std::vector<Hyp> pool_;
};

}  // namespace

std::vector<Translation> decode_nbest(const SMTModel& model, const Sentence& src, std::size_t n) {
  if (src.size() > model.decoder.max_source_len || src.size() > 64) {
    throw Error("decode: source longer than the length cap");
  }
  if (src.empty()) {
    Translation t;
    NGramLM::State st = model.lm->begin_state();
    t.score = detail::end_score(model, st);
    return {t};
  }
  auto out = Decoder(model, src, model.decoder).run(n);
  if (out.empty()) {
    log::debug("decode: no complete hypothesis, falling back to monotone search");
    DecoderConfig mono = model.decoder;
    mono.distortion_limit = 0;
    out = Decoder(model, src, mono).run(n);
  }
  if (out.empty()) throw Error("decode: search failed");
  return out;
}

Translation decode(const SMTModel& model, const Sentence& src) { return decode_nbest(model, src, 1).front(); }

}  // namespace unmt::smt
