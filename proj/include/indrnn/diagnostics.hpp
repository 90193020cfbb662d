#pragma once

#include <functional>
#include <string>
#include <vector>

#include "indrnn/layer.hpp"
#include "indrnn/network.hpp"
#include "indrnn/types.hpp"

namespace indrnn {

// ---------------------------------------------------------------------------
// Gradient-flow traces.

struct GradientTrace {
  Vec over_time;   // mean L2 norm of dLoss/dx_t per step, averaged over rows
  Vec over_depth;  // mean |entry| of each depth level's input weights
};

// Produces the loss gradient dY for a given network output.
using LossGradFn = std::function<SequenceBatch(const SequenceBatch& y)>;

// Runs forward/backward over the given batches and averages the input and
// per-level weight gradient magnitudes.
GradientTrace record_gradient_flow(Network& net, const std::vector<SequenceBatch>& batches,
                                   const LossGradFn& loss_grad);

// ---------------------------------------------------------------------------
// Recurrent-gain histograms.

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<Index> counts;  // counts.size() bins of equal width
};

// Uniform binning with [edge, edge) bins except the last, which includes its
// right edge; out-of-range values land in the nearest edge bin, so counts
// always sum to the input size.
Histogram histogram(const Vec& values, Index bins, double lo, double hi);

inline Histogram weight_histogram(const IndRnnLayer& layer, Index bins, double lo,
                                  double hi) {
  return histogram(layer.u, bins, lo, hi);
}

// ---------------------------------------------------------------------------
// Memory classification of recurrent gains.

enum class MemoryClass { Short, Long };

// Long iff |gain * act_grad|^horizon > epsilon; the boundary itself counts
// as Short.
MemoryClass classify_memory(double gain, Index horizon, double epsilon,
                            double act_grad = 1.0);

struct NeuronMemory {
  double gain = 0.0;
  MemoryClass cls = MemoryClass::Short;
};

struct MemoryReport {
  std::vector<NeuronMemory> neurons;
  Index horizon = 0;
  double epsilon = 0.0;
  Index n_long = 0;
  Index n_short = 0;
  Index n_negative = 0;  // learned gains can go negative; counted, not judged
};

MemoryReport classify_layer_memory(const Vec& gains, Index horizon, double epsilon,
                                   double act_grad = 1.0);

// ---------------------------------------------------------------------------
// Linear-RNN equivalence: a dense linear recurrence with a diagonalizable
// recurrent matrix equals a two-layer form whose first layer has elementwise
// recurrence (the eigenvalues) and whose second layer mixes with the
// eigenvector matrix.

struct LinearRnn {
  Mat U;  // N x N recurrent map
  Mat W;  // N x M input map
};

struct EquivOptions {
  double cond_limit = 1e6;   // reject eigenvector matrices beyond this
  double imag_tol = 1e-9;    // relative tolerance for calling eigenvalues real
};

struct TwoLayerForm {
  IndRnnLayer first;  // linear activation; u holds the eigenvalues
  Mat mix;            // N x N second-layer weights (the eigenvector matrix)
};

// Throws NotRepresentableError for complex eigenvalues or an eigenvector
// matrix whose condition number exceeds the limit (defective matrices land
// here too).
TwoLayerForm rnn_to_indrnn(const LinearRnn& rnn, const EquivOptions& opt = {});

// Simulates both systems from h0 = 0 over the first `steps` steps of x and
// returns the max absolute deviation between the dense states and the mixed
// elementwise states.
double verify_equivalence(const LinearRnn& rnn, const TwoLayerForm& form,
                          const SequenceBatch& x, Index steps);

}  // namespace indrnn
