#include "indrnn/diagnostics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace indrnn {

GradientTrace record_gradient_flow(Network& net, const std::vector<SequenceBatch>& batches,
                                   const LossGradFn& loss_grad) {
  if (batches.empty()) throw ConfigError("record_gradient_flow: no batches given");

  const auto ranges = net.depth_weight_ranges();
  GradientTrace trace;
  trace.over_time = Vec::Zero(batches.front().steps());
  trace.over_depth = Vec::Zero(static_cast<Index>(ranges.size()));

  NetCaches caches;
  Vec grads = Vec::Zero(net.n_params());
  SequenceBatch dx;
  for (const auto& x : batches) {
    if (x.steps() != trace.over_time.size()) {
      throw ShapeError("record_gradient_flow: batches must share a step count");
    }
    net.forward(caches, x, /*train=*/false);
    SequenceBatch dy = loss_grad(net.output(caches));
    net.backward(caches, dy, grads, &dx);
    for (Index t = 0; t < dx.steps(); ++t) {
      trace.over_time[t] += dx.step(t).rowwise().norm().mean();
    }
    for (std::size_t l = 0; l < ranges.size(); ++l) {
      const auto [offset, size] = ranges[l];
      trace.over_depth[static_cast<Index>(l)] +=
          grads.segment(offset, size).cwiseAbs().mean();
    }
  }
  const double inv = 1.0 / static_cast<double>(batches.size());
  trace.over_time *= inv;
  trace.over_depth *= inv;
  return trace;
}

Histogram histogram(const Vec& values, Index bins, double lo, double hi) {
  if (bins < 1) throw ConfigError("histogram: need at least one bin");
  if (!(lo < hi)) throw ConfigError("histogram: lo must be less than hi");

  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double scale = static_cast<double>(bins) / (hi - lo);
  for (Index i = 0; i < values.size(); ++i) {
    auto bin = static_cast<Index>(std::floor((values[i] - lo) * scale));
    if (bin < 0) bin = 0;
    if (bin >= bins) bin = bins - 1;  // folds hi itself into the last bin
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

MemoryClass classify_memory(double gain, Index horizon, double epsilon, double act_grad) {
  if (horizon < 1) throw ConfigError("classify_memory: horizon must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("classify_memory: epsilon must be positive");
  const double kept = std::pow(std::abs(gain) * act_grad, static_cast<double>(horizon));
  return kept > epsilon ? MemoryClass::Long : MemoryClass::Short;
}

MemoryReport classify_layer_memory(const Vec& gains, Index horizon, double epsilon,
                                   double act_grad) {
  MemoryReport report;
  report.horizon = horizon;
  report.epsilon = epsilon;
  report.neurons.reserve(static_cast<std::size_t>(gains.size()));
  for (Index i = 0; i < gains.size(); ++i) {
    NeuronMemory n;
    n.gain = gains[i];
    n.cls = classify_memory(gains[i], horizon, epsilon, act_grad);
    (n.cls == MemoryClass::Long ? report.n_long : report.n_short) += 1;
    if (gains[i] < 0.0) ++report.n_negative;
    report.neurons.push_back(n);
  }
  return report;
}

TwoLayerForm rnn_to_indrnn(const LinearRnn& rnn, const EquivOptions& opt) {
  const Index n = rnn.U.rows();
  require_shape(rnn.U.cols() == n, "rnn_to_indrnn: recurrent matrix must be square");
  require_shape(rnn.W.rows() == n, "rnn_to_indrnn: input map must have one row per state");

  Eigen::EigenSolver<Mat> solver(rnn.U);
  if (solver.info() != Eigen::Success) {
    throw NotRepresentableError("rnn_to_indrnn: eigendecomposition failed");
  }
  const auto& lambdas = solver.eigenvalues();
  for (Index i = 0; i < n; ++i) {
    const double re = lambdas[i].real();
    const double im = lambdas[i].imag();
    if (std::abs(im) > opt.imag_tol * std::max(1.0, std::abs(re))) {
      std::ostringstream msg;
      msg << "rnn_to_indrnn: eigenvalue " << i << " is complex (" << re << " + " << im
          << "i); rotational dynamics have no elementwise form";
      throw NotRepresentableError(msg.str());
    }
  }

  Mat vectors = solver.eigenvectors().real();
  Eigen::JacobiSVD<Mat> svd(vectors);
  const double smin = svd.singularValues()[n - 1];
  const double cond =
      smin > 0.0 ? svd.singularValues()[0] / smin : std::numeric_limits<double>::infinity();
  if (!(cond <= opt.cond_limit)) {
    std::ostringstream msg;
    msg << "rnn_to_indrnn: eigenvector matrix is ill-conditioned (cond " << cond
        << " exceeds " << opt.cond_limit << "); the recurrence is not diagonalizable";
    throw NotRepresentableError(msg.str());
  }

  TwoLayerForm form;
  form.first.W = vectors.fullPivLu().solve(rnn.W);
  form.first.u = lambdas.real();
  form.first.b = Vec::Zero(n);
  form.first.activation = Activation::Linear;
  form.mix = vectors;
  return form;
}

double verify_equivalence(const LinearRnn& rnn, const TwoLayerForm& form,
                          const SequenceBatch& x, Index steps) {
  require_shape(steps >= 1 && steps <= x.steps(),
                "verify_equivalence: steps out of range for the given input");
  require_shape(x.features() == rnn.W.cols(),
                "verify_equivalence: input features must match the input map");

  const Index n = rnn.U.rows();
  const Index b = x.batch();
  Mat dense = Mat::Zero(b, n);
  Mat elem = Mat::Zero(b, n);
  double worst = 0.0;
  for (Index t = 0; t < steps; ++t) {
    dense = x.step(t) * rnn.W.transpose() + dense * rnn.U.transpose();
    elem = forward_step(form.first, x.step(t), elem);
    const Mat mixed = elem * form.mix.transpose();
    worst = std::max(worst, (dense - mixed).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace indrnn
