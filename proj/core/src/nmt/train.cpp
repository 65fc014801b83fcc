#include "unmt/nmt/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unmt/log.hpp"

namespace unmt::nmt {

namespace {

template <typename S>
double clip_scale(const ParamVector<S>& grad, double clip) {
  if (clip <= 0.0) return 1.0;
  double sq = 0.0;
  for (S g : grad) sq += static_cast<double>(g) * static_cast<double>(g);
  double norm = std::sqrt(sq);
  return norm > clip ? clip / norm : 1.0;
}

}  // namespace

template <typename S>
double train_step(BasicNMT<S>& model, const TrainBatch& batch, double lr, double clip) {
  ParamVector<S> grad(model.params().size(), S(0));
  double loss = model.loss(batch, &grad);
  if (!std::isfinite(loss)) throw Error("divergence");
  const double scale = clip_scale(grad, clip);
  auto& p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= static_cast<S>(lr * scale * static_cast<double>(grad[i]));
  return loss;
}

template <typename S>
double Optimizer<S>::step(BasicNMT<S>& model, const TrainBatch& batch) {
  auto& p = model.params();
  grad_.assign(p.size(), S(0));
  double loss = model.loss(batch, &grad_);
  if (!std::isfinite(loss)) throw Error("divergence");
  const double scale = clip_scale(grad_, config_.clip);
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= static_cast<S>(lr * scale * static_cast<double>(grad_[i]));
    return loss;
  }
  if (m_.size() != p.size()) {
    m_.assign(p.size(), 0.0);
    v_.assign(p.size(), 0.0);
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    double g = scale * static_cast<double>(grad_[i]);
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    p[i] -= static_cast<S>(lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.epsilon));
  }
  return loss;
}

TrainStats train(NMTModel& model, const ParallelData& data, const TrainConfig& cfg) {
  TrainStats stats;
  if (cfg.steps <= 0) return stats;
  if (data.size() == 0) throw Error("nmt: empty training data");
  if (cfg.batch_size < 1) throw Error("nmt: batch size must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  Optimizer<float> opt(cfg.optimizer);

  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::vector<std::size_t>> batches;
  std::size_t next_batch = 0;
  auto refill = [&] {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    // Sort within pools of 32 batches so sentences of similar length share
    // a batch.
    const std::size_t pool = bs * 32;
    for (std::size_t start = 0; start < order.size(); start += pool) {
      auto b = order.begin() + static_cast<std::ptrdiff_t>(start);
      auto e = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + pool));
      std::stable_sort(b, e, [&data](std::size_t x, std::size_t y) {
        return std::max(data.src[x].size(), data.tgt[x].size()) < std::max(data.src[y].size(), data.tgt[y].size());
      });
    }
    batches.clear();
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
    }
    std::shuffle(batches.begin(), batches.end(), rng);
    next_batch = 0;
  };

  double window_sum = 0.0;
  int window_n = 0;
  double prev_window = std::numeric_limits<double>::infinity();
  std::vector<Sentence> src, tgt;
  std::vector<double> w;
  for (int s = 0; s < cfg.steps; ++s) {
    if (next_batch >= batches.size()) refill();
    const auto& idx = batches[next_batch++];
    src.clear();
    tgt.clear();
    w.clear();
    for (std::size_t i : idx) {
      src.push_back(data.src[i]);
      tgt.push_back(data.tgt[i]);
      w.push_back(data.weight[i]);
    }
    if (cfg.optimizer.kind == OptimizerKind::kAdam && cfg.final_lr_scale != 1.0) {
      const double frac = cfg.steps > 1 ? static_cast<double>(s) / (cfg.steps - 1) : 1.0;
      opt.set_learning_rate(cfg.optimizer.learning_rate * (1.0 - (1.0 - cfg.final_lr_scale) * frac));
    }
    double loss = opt.step(model, model.make_batch(src, tgt, w));
    if (s == 0) stats.first_loss = loss;
    window_sum += loss;
    ++window_n;
    const int window = cfg.plateau_window > 0 ? cfg.plateau_window : 200;
    if (window_n == window || s + 1 == cfg.steps) {
      double mean = window_sum / window_n;
      stats.last_loss = mean;
      log::debug("nmt step {}: mean loss {:.4f}, lr {:.5g}", s + 1, mean, opt.config().learning_rate);
      if (cfg.plateau_window > 0 && cfg.optimizer.kind == OptimizerKind::kSgd && window_n == window &&
          mean >= prev_window) {
        opt.set_learning_rate(opt.config().learning_rate * 0.5);
      }
      prev_window = mean;
      window_sum = 0.0;
      window_n = 0;
    }
    ++stats.steps;
  }
  return stats;
}

template double train_step<float>(BasicNMT<float>&, const TrainBatch&, double, double);
template double train_step<double>(BasicNMT<double>&, const TrainBatch&, double, double);
template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace unmt::nmt
