#pragma once

#include <cstdint>

#include "indrnn/ops.hpp"
#include "indrnn/rng.hpp"
#include "indrnn/types.hpp"

namespace indrnn {

// One recurrent layer with elementwise (per-neuron) recurrence:
//   h[n,t] = act(W.row(n) . x_t + u[n] * h[n,t-1] + b[n])
// Neurons never mix through time; cross-neuron mixing happens only through W
// of this or the next layer.
struct IndRnnLayer {
  Mat W;   // N x M input weights
  Vec u;   // N recurrent gains, one per neuron
  Vec b;   // N biases
  Activation activation = Activation::Relu;

  Index in_dim() const { return W.cols(); }
  Index out_dim() const { return W.rows(); }
};

// How the recurrent gain magnitudes are initialized. Layers whose output is
// consumed at every step draw u from [0, bound]; a layer read only at the
// final step keeps gains away from zero, [epsilon^(1/T), bound], so the last
// state still reflects early inputs.
enum class RecurrentInit { EveryStep, LastStepOnly };

struct ForwardCache {
  SequenceBatch inputs;    // T x B x M, the x_t actually used
  SequenceBatch preacts;   // T x B x N, pre-activation values
  SequenceBatch states;    // (T+1) x B x N; slab 0 is h_0, slab t+1 = act(preacts[t])
};

struct LayerGrads {
  Mat dW;
  Vec du;
  Vec db;
  SequenceBatch dX;  // T x B x M
  Mat dH0;           // B x N, gradient reaching the initial state
};

// Draw W Glorot-uniform over [-sqrt(6/(M+N)), +sqrt(6/(M+N))] in row-major
// entry order, then u per the mode with bound gamma^(1/T) (bound 1 when gamma
// is infinite), then b = 0. Throws ConfigError on bad dims or epsilon >= gamma.
IndRnnLayer init_layer(Rng& rng, Index in_dim, Index out_dim, Index horizon,
                       double gamma, RecurrentInit mode, Activation act,
                       double epsilon = 0.5);

// One step for a batch: rows of x are batch elements. Each output element is
// produced by a single fused pass (dot, axpy, bias, activation) with no
// intermediate matrix temporaries.
Mat forward_step(const IndRnnLayer& layer, const Mat& x, const Mat& h_prev);

// Runs forward_step T times, caching everything backward_sequence needs.
// h0 may be empty (treated as zeros).
ForwardCache forward_sequence(const IndRnnLayer& layer, const SequenceBatch& x,
                              const Mat& h0 = Mat());

// Reverse-time accumulation. dH holds dLoss/dh_t for every step (zero slabs
// for steps without direct loss). Cost is linear in T*B*N.
LayerGrads backward_sequence(const IndRnnLayer& layer, const ForwardCache& cache,
                             const SequenceBatch& dH);

// |dh_T / dh_t| for one neuron: gain^(T-t) times the product of activation
// derivatives along the trace. `act_grads` holds the T-t derivative factors.
double grad_wrt_past_state(double gain, const Vec& act_grads);

// Clamp every |u[n]| to gamma^(1/horizon). No-op when gamma is infinite.
// Entries already inside the bound are left bit-identical.
void clamp_recurrent(IndRnnLayer& layer, double gamma, Index horizon);

std::int64_t param_count(const IndRnnLayer& layer);

// Recurrence-only kernels, shared by the full cell and the network engine
// (which batches the input projection across steps and only loops over the
// elementwise part). Activation derivatives are recovered from the stored
// outputs, so only out and h0 are kept:
//   out[t] = act(s_t + u o out[t-1]),  out[-1] meaning h0 (empty = zeros)
void recur_forward(const Vec& u, Activation act, const SequenceBatch& s,
                   const Mat& h0, SequenceBatch& out);

// Fills ds (same shape as dH) and dh0; accumulates into du (caller zeroes).
void recur_backward(const Vec& u, Activation act, const SequenceBatch& out,
                    const Mat& h0, const SequenceBatch& dH, SequenceBatch& ds,
                    Vec& du, Mat& dh0);

// Dense-recurrence tanh baseline used for comparisons:
//   out[t] = act(s_t + out[t-1] * U^T)
void vanilla_recur_forward(const Mat& U, Activation act, const SequenceBatch& s,
                           const Mat& h0, SequenceBatch& out);

void vanilla_recur_backward(const Mat& U, Activation act, const SequenceBatch& out,
                            const Mat& h0, const SequenceBatch& dH, SequenceBatch& ds,
                            Mat& dU, Mat& dh0);

}  // namespace indrnn
