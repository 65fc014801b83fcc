#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "unmt/nmt/model.hpp"

namespace unmt::nmt {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 0.002;
  /// Global gradient-norm clip; 0 disables.
  double clip = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Plain SGD step with clipping. Returns the batch loss before the update and
/// throws "divergence" when it is not finite.
template <typename S>
double train_step(BasicNMT<S>& model, const TrainBatch& batch, double learning_rate, double clip = 5.0);

/// Optimizer with persistent state (Adam moments).
template <typename S>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  /// One update on `batch`; returns the loss before the update.
  double step(BasicNMT<S>& model, const TrainBatch& batch);

 private:
  OptimizerConfig config_;
  ParamVector<S> grad_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t t_ = 0;
};

/// Weighted parallel data for one training run.
struct ParallelData {
  std::vector<Sentence> src;
  std::vector<Sentence> tgt;
  std::vector<double> weight;

  std::size_t size() const { return src.size(); }
  void add(Sentence s, Sentence t, double w = 1.0) {
    src.push_back(std::move(s));
    tgt.push_back(std::move(t));
    weight.push_back(w);
  }
};

struct TrainConfig {
  int steps = 1000;
  int batch_size = 64;
  OptimizerConfig optimizer;
  /// With SGD: halve the rate when the mean loss over this many steps does not
  /// improve on the previous window. 0 disables.
  int plateau_window = 200;
  /// With Adam: the rate falls linearly to learning_rate * final_lr_scale
  /// over the run. 1 keeps it constant.
  double final_lr_scale = 1.0;
  std::uint64_t seed = 1;
};

struct TrainStats {
  int steps = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;  ///< mean over the final window
};

/// Runs `config.steps` updates over length-bucketed, shuffled batches of
/// `data` (reshuffled on every pass). Deterministic for a fixed seed.
TrainStats train(NMTModel& model, const ParallelData& data, const TrainConfig& config);

extern template double train_step<float>(BasicNMT<float>&, const TrainBatch&, double, double);
extern template double train_step<double>(BasicNMT<double>&, const TrainBatch&, double, double);
extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace unmt::nmt
