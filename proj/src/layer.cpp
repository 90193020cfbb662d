#include "indrnn/layer.hpp"

#include <cmath>
#include <mutex>
#include <vector>

#include "indrnn/parallel.hpp"

namespace indrnn {

IndRnnLayer init_layer(Rng& rng, Index in_dim, Index out_dim, Index horizon,
                       double gamma, RecurrentInit mode, Activation act,
                       double epsilon) {
  if (in_dim < 1 || out_dim < 1) throw ConfigError("init_layer: dims must be >= 1");
  if (horizon < 1) throw ConfigError("init_layer: horizon must be >= 1");
  if (!(gamma > 0)) throw ConfigError("init_layer: gamma must be positive");

  IndRnnLayer layer;
  layer.activation = act;
  layer.W.resize(out_dim, in_dim);
  layer.u.resize(out_dim);
  layer.b = Vec::Zero(out_dim);

  const double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (Index n = 0; n < out_dim; ++n)
    for (Index m = 0; m < in_dim; ++m) layer.W(n, m) = rng.uniform(-a, a);

  const double inv_t = 1.0 / static_cast<double>(horizon);
  const double hi = std::isinf(gamma) ? 1.0 : std::pow(gamma, inv_t);
  double lo = 0.0;
  if (mode == RecurrentInit::LastStepOnly) {
    if (!(epsilon > 0) || !(epsilon < gamma))
      throw ConfigError("init_layer: epsilon must satisfy 0 < epsilon < gamma");
    lo = std::pow(epsilon, inv_t);
  }
  for (Index n = 0; n < out_dim; ++n) layer.u[n] = rng.uniform(lo, hi);
  return layer;
}

namespace {

// The fused step: one pass per (row, neuron) pair producing preact and state
// together. preact_out may alias nothing or be null when not needed.
void fused_step(const IndRnnLayer& layer, const Mat& x, const Mat& h_prev,
                Mat* preact_out, Mat& h_out) {
  const Index rows = x.rows();
  const Index n_out = layer.out_dim();
  parallel_for(rows, [&](Index r0, Index r1) {
    for (Index i = r0; i < r1; ++i) {
      const auto xi = x.row(i);
      for (Index n = 0; n < n_out; ++n) {
        const double pre = layer.W.row(n).dot(xi) + layer.u[n] * h_prev(i, n) + layer.b[n];
        if (preact_out) (*preact_out)(i, n) = pre;
        h_out(i, n) = activate(layer.activation, pre);
      }
    }
  });
}

}  // namespace

Mat forward_step(const IndRnnLayer& layer, const Mat& x, const Mat& h_prev) {
  require_shape(x.cols() == layer.in_dim(),
                "forward_step: input width " + std::to_string(x.cols()) +
                    " != layer in_dim " + std::to_string(layer.in_dim()));
  require_shape(h_prev.rows() == x.rows() && h_prev.cols() == layer.out_dim(),
                "forward_step: state shape mismatch");
  Mat h(x.rows(), layer.out_dim());
  fused_step(layer, x, h_prev, nullptr, h);
  return h;
}

ForwardCache forward_sequence(const IndRnnLayer& layer, const SequenceBatch& x,
                              const Mat& h0) {
  const Index t_len = x.steps();
  const Index batch = x.batch();
  require_shape(t_len >= 1, "forward_sequence: empty sequence");
  require_shape(x.features() == layer.in_dim(), "forward_sequence: input width mismatch");

  ForwardCache cache;
  cache.inputs = x;
  cache.preacts.resize(t_len, batch, layer.out_dim());
  cache.states.resize(t_len + 1, batch, layer.out_dim());
  if (h0.size() == 0) {
    cache.states.step(0).setZero();
  } else {
    require_shape(h0.rows() == batch && h0.cols() == layer.out_dim(),
                  "forward_sequence: h0 shape mismatch");
    cache.states.step(0) = h0;
  }

  for (Index t = 0; t < t_len; ++t) {
    Mat pre(batch, layer.out_dim());
    Mat h(batch, layer.out_dim());
    const Mat xt = x.step(t);
    const Mat hp = cache.states.step(t);
    fused_step(layer, xt, hp, &pre, h);
    cache.preacts.step(t) = pre;
    cache.states.step(t + 1) = h;
  }
  return cache;
}

LayerGrads backward_sequence(const IndRnnLayer& layer, const ForwardCache& cache,
                             const SequenceBatch& dH) {
  const Index t_len = cache.preacts.steps();
  const Index batch = cache.preacts.batch();
  const Index n_out = layer.out_dim();
  require_shape(dH.steps() == t_len && dH.batch() == batch && dH.features() == n_out,
                "backward_sequence: dH shape mismatch");

  LayerGrads g;
  g.dW = Mat::Zero(n_out, layer.in_dim());
  g.du = Vec::Zero(n_out);
  g.db = Vec::Zero(n_out);
  g.dX.resize(t_len, batch, layer.in_dim());
  g.dH0.resize(batch, n_out);

  Mat delta_next = Mat::Zero(batch, n_out);  // delta at step t+1
  Mat delta(batch, n_out);
  for (Index t = t_len - 1; t >= 0; --t) {
    // Total gradient into h_t: direct loss term plus the elementwise
    // recurrent path, then through the activation.
    for (Index i = 0; i < batch; ++i)
      for (Index n = 0; n < n_out; ++n) {
        const double into_h = dH.at(t, i, n) + layer.u[n] * delta_next(i, n);
        delta(i, n) = into_h * activate_grad_from_value(layer.activation,
                                                        cache.states.at(t + 1, i, n));
      }
    g.dW.noalias() += delta.transpose() * cache.inputs.step(t);
    g.du += (delta.array() * cache.states.step(t).array()).colwise().sum().matrix().transpose();
    g.db += delta.colwise().sum().transpose();
    g.dX.step(t).noalias() = delta * layer.W;
    delta_next.swap(delta);
  }
  g.dH0 = delta_next;
  scale_cols_inplace(g.dH0, layer.u);
  return g;
}

double grad_wrt_past_state(double gain, const Vec& act_grads) {
  double prod = 1.0;
  for (Index k = 0; k < act_grads.size(); ++k) prod *= gain * act_grads[k];
  return prod;
}

void clamp_recurrent(IndRnnLayer& layer, double gamma, Index horizon) {
  if (!(gamma > 0)) throw ConfigError("clamp_recurrent: gamma must be positive");
  if (horizon < 1) throw ConfigError("clamp_recurrent: horizon must be >= 1");
  if (std::isinf(gamma)) return;
  const double bound = std::pow(gamma, 1.0 / static_cast<double>(horizon));
  for (Index n = 0; n < layer.u.size(); ++n) {
    if (layer.u[n] > bound) layer.u[n] = bound;
    else if (layer.u[n] < -bound) layer.u[n] = -bound;
  }
}

std::int64_t param_count(const IndRnnLayer& layer) {
  return static_cast<std::int64_t>(layer.W.size()) + 2 * layer.u.size();
}

void recur_forward(const Vec& u, Activation act, const SequenceBatch& s,
                   const Mat& h0, SequenceBatch& out) {
  const Index t_len = s.steps();
  const Index batch = s.batch();
  const Index width = s.features();
  require_shape(u.size() == width, "recur_forward: gain width mismatch");
  require_shape(h0.size() == 0 || (h0.rows() == batch && h0.cols() == width),
                "recur_forward: h0 shape mismatch");
  out.resize(t_len, batch, width);
  const bool with_h0 = h0.size() != 0;

  parallel_for(batch, [&](Index b0, Index b1) {
    for (Index i = b0; i < b1; ++i) {
      for (Index t = 0; t < t_len; ++t) {
        const Index row = t * batch + i;
        for (Index n = 0; n < width; ++n) {
          const double prev = t > 0 ? out.flat()(row - batch, n)
                                    : (with_h0 ? h0(i, n) : 0.0);
          out.flat()(row, n) = activate(act, s.flat()(row, n) + u[n] * prev);
        }
      }
    }
  });
}

void recur_backward(const Vec& u, Activation act, const SequenceBatch& out,
                    const Mat& h0, const SequenceBatch& dH, SequenceBatch& ds,
                    Vec& du, Mat& dh0) {
  const Index t_len = dH.steps();
  const Index batch = dH.batch();
  const Index width = dH.features();
  require_shape(out.steps() == t_len, "recur_backward: out/dH length mismatch");
  require_shape(du.size() == width, "recur_backward: du must be pre-sized");
  ds.resize(t_len, batch, width);
  dh0.resize(batch, width);
  const bool with_h0 = h0.size() != 0;

  // Rows of the batch are independent; du is accumulated per worker range and
  // merged afterwards so splitting cannot reorder a single neuron's sum.
  std::vector<Vec> du_parts;
  std::mutex du_mutex;
  parallel_for(batch, [&](Index b0, Index b1) {
    Vec du_local = Vec::Zero(width);
    Vec delta_next(width);
    for (Index i = b0; i < b1; ++i) {
      delta_next.setZero();
      for (Index t = t_len - 1; t >= 0; --t) {
        const Index row = t * batch + i;
        for (Index n = 0; n < width; ++n) {
          const double into_h = dH.flat()(row, n) + u[n] * delta_next[n];
          const double d = into_h * activate_grad_from_value(act, out.flat()(row, n));
          ds.flat()(row, n) = d;
          const double h_prev = t > 0 ? out.flat()(row - batch, n)
                                      : (with_h0 ? h0(i, n) : 0.0);
          du_local[n] += d * h_prev;
          delta_next[n] = d;
        }
      }
      for (Index n = 0; n < width; ++n) dh0(i, n) = u[n] * delta_next[n];
    }
    std::lock_guard<std::mutex> lock(du_mutex);
    du_parts.push_back(std::move(du_local));
  });
  for (const auto& part : du_parts) du += part;
}

void vanilla_recur_forward(const Mat& U, Activation act, const SequenceBatch& s,
                           const Mat& h0, SequenceBatch& out) {
  const Index t_len = s.steps();
  const Index batch = s.batch();
  const Index width = s.features();
  require_shape(U.rows() == width && U.cols() == width, "vanilla_recur_forward: U shape");
  out.resize(t_len, batch, width);
  Mat pre(batch, width);
  for (Index t = 0; t < t_len; ++t) {
    if (t > 0) pre.noalias() = out.step(t - 1) * U.transpose();
    else if (h0.size() != 0) pre.noalias() = h0 * U.transpose();
    else pre.setZero();
    pre += s.step(t);
    for (Index i = 0; i < batch; ++i)
      for (Index n = 0; n < width; ++n) out.at(t, i, n) = activate(act, pre(i, n));
  }
}

void vanilla_recur_backward(const Mat& U, Activation act, const SequenceBatch& out,
                            const Mat& h0, const SequenceBatch& dH, SequenceBatch& ds,
                            Mat& dU, Mat& dh0) {
  const Index t_len = dH.steps();
  const Index batch = dH.batch();
  const Index width = dH.features();
  require_shape(out.steps() == t_len, "vanilla_recur_backward: out/dH length mismatch");
  ds.resize(t_len, batch, width);
  dh0.resize(batch, width);
  dU = Mat::Zero(width, width);

  Mat delta_next = Mat::Zero(batch, width);
  Mat delta(batch, width);
  Mat into_h(batch, width);
  for (Index t = t_len - 1; t >= 0; --t) {
    into_h = dH.step(t);
    into_h.noalias() += delta_next * U;
    for (Index i = 0; i < batch; ++i)
      for (Index n = 0; n < width; ++n)
        delta(i, n) = into_h(i, n) * activate_grad_from_value(act, out.at(t, i, n));
    ds.step(t) = delta;
    if (t > 0) dU.noalias() += delta.transpose() * out.step(t - 1);
    else if (h0.size() != 0) dU.noalias() += delta.transpose() * h0;
    delta_next.swap(delta);
  }
  dh0.noalias() = delta_next * U;
}

}  // namespace indrnn
