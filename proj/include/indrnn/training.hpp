#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "indrnn/network.hpp"

namespace indrnn {

struct LossValue {
  double loss = 0.0;
  Vec grad;  // dLoss/dprediction, one entry per batch row
};

struct CeLossValue {
  double loss = 0.0;  // mean negative log-likelihood, nats
  double bpc = 0.0;   // the same quantity in bits
  Mat grad;           // dLoss/dlogits, rows x classes
};

// Mean squared error over the batch; grad is 2*(pred - target)/B.
LossValue mse_loss(const Vec& pred, const Vec& target);

// Softmax cross entropy, averaged over rows. labels[i] indexes the correct
// class of row i.
CeLossValue cross_entropy_loss(const Mat& logits, const std::vector<int>& labels);

struct TrainState {
  Vec m;  // first moment
  Vec v;  // second moment
  std::uint64_t step = 0;
  double lr = 2e-4;
  // Plateau-schedule bookkeeping.
  double best_metric = std::numeric_limits<double>::quiet_NaN();
  Index bad_evals = 0;
  Index patience = 100;
  double lr_factor = 5.0;
};

TrainState init_train_state(const Network& net, double lr);

// One bias-corrected Adam update, in place on the network parameters.
// Throws NumericError naming the parameter if any gradient is not finite.
void adam_step(TrainState& state, Network& net, const Vec& grads,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// L2 pull toward zero for input-processing and embedding weights only;
// recurrent gains, biases and normalization parameters are left alone.
// Adds lambda * theta to the matching gradient segments.
void apply_weight_decay(const Network& net, Vec& grads, double lambda);

enum class PlateauAction { Kept, Reduced };

// Divides lr by state.lr_factor once the metric has gone state.patience
// consecutive updates without strict improvement (a tie is not an
// improvement); the streak counter then resets.
PlateauAction plateau_update(TrainState& state, double metric,
                             bool lower_is_better = true);

// ---------------------------------------------------------------------------
// Gradient verification.

struct FdProblem {
  Network* net = nullptr;
  const SequenceBatch* x = nullptr;  // dense input path
  const IdMat* ids = nullptr;        // id input path
  // Evaluates the scalar loss of a network output; fills *dY when non-null.
  std::function<double(const SequenceBatch& y, SequenceBatch* dY)> loss;
};

struct FdReport {
  double max_rel_err = 0.0;
  Index worst_param = -1;
  std::string worst_name;
  Index evaluated = 0;
  Index excluded = 0;  // coordinates straddling a relu kink
};

// Central differences against the analytic gradient. Coordinates whose +h/-h
// evaluations land on different relu activation patterns are excluded (the
// loss is not differentiable across the kink) and counted in the report.
// When sample > 0, only that many randomly chosen coordinates are probed.
FdReport finite_difference_check(const FdProblem& problem, double h = 1e-6,
                                 Index sample = -1, Rng* rng = nullptr);

}  // namespace indrnn
