#include "indrnn/training.hpp"

#include <algorithm>
#include <cmath>

namespace indrnn {

LossValue mse_loss(const Vec& pred, const Vec& target) {
  require_shape(pred.size() == target.size(), "mse_loss: size mismatch");
  require_shape(pred.size() > 0, "mse_loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(pred.size());
  LossValue out;
  const Vec diff = pred - target;
  out.loss = diff.squaredNorm() * inv_b;
  out.grad = 2.0 * inv_b * diff;
  return out;
}

CeLossValue cross_entropy_loss(const Mat& logits, const std::vector<int>& labels) {
  const Index rows = logits.rows();
  const Index classes = logits.cols();
  require_shape(rows > 0, "cross_entropy_loss: empty batch");
  require_shape(static_cast<Index>(labels.size()) == rows,
                "cross_entropy_loss: labels/logits row mismatch");

  CeLossValue out;
  out.grad.resize(rows, classes);
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(rows);
  for (Index i = 0; i < rows; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= classes)
      throw ShapeError("cross_entropy_loss: label " + std::to_string(label) +
                       " outside [0, " + std::to_string(classes) + ")");
    // Shifted softmax keeps exp() in range for any logit magnitudes.
    const double mx = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Index c = 0; c < classes; ++c) z += std::exp(logits(i, c) - mx);
    const double log_z = std::log(z) + mx;
    total += log_z - logits(i, label);
    for (Index c = 0; c < classes; ++c)
      out.grad(i, c) = inv_b * (std::exp(logits(i, c) - log_z) - (c == label ? 1.0 : 0.0));
  }
  out.loss = total * inv_b;
  out.bpc = out.loss / std::log(2.0);
  return out;
}

TrainState init_train_state(const Network& net, double lr) {
  TrainState st;
  st.m = Vec::Zero(net.n_params());
  st.v = Vec::Zero(net.n_params());
  st.lr = lr;
  return st;
}

namespace {

const std::string& param_name_at(const Network& net, Index flat_index) {
  for (const auto& p : net.param_info())
    if (flat_index >= p.offset && flat_index < p.offset + p.size) return p.name;
  static const std::string unknown = "<unknown>";
  return unknown;
}

}  // namespace

void adam_step(TrainState& state, Network& net, const Vec& grads, double beta1,
               double beta2, double eps) {
  require_shape(grads.size() == net.n_params(), "adam_step: gradient size mismatch");
  require_shape(state.m.size() == net.n_params(), "adam_step: state size mismatch");
  if (!grads.allFinite()) {
    for (Index i = 0; i < grads.size(); ++i)
      if (!std::isfinite(grads[i]))
        throw NumericError("non-finite gradient in " + param_name_at(net, i));
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);

  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseProduct(grads);

  for (const auto& p : net.param_info()) {
    Eigen::Map<Vec> theta(p.data, p.size);
    const auto mh = state.m.segment(p.offset, p.size) / bc1;
    const auto vh = state.v.segment(p.offset, p.size) / bc2;
    theta -= state.lr * (mh.array() / (vh.array().sqrt() + eps)).matrix();
  }
  net.bump_revision();
}

void apply_weight_decay(const Network& net, Vec& grads, double lambda) {
  if (lambda == 0.0) return;
  require_shape(grads.size() == net.n_params(), "apply_weight_decay: size mismatch");
  for (const auto& p : net.param_info()) {
    if (p.cls != ParamClass::InputWeight && p.cls != ParamClass::Embedding) continue;
    grads.segment(p.offset, p.size) += lambda * Eigen::Map<const Vec>(p.data, p.size);
  }
}

PlateauAction plateau_update(TrainState& state, double metric, bool lower_is_better) {
  if (!(state.lr_factor > 1.0)) throw ConfigError("plateau_update: factor must be > 1");
  if (state.patience < 1) throw ConfigError("plateau_update: patience must be >= 1");

  const bool improved =
      std::isnan(state.best_metric) ||
      (lower_is_better ? metric < state.best_metric : metric > state.best_metric);
  if (improved) {
    state.best_metric = metric;
    state.bad_evals = 0;
    return PlateauAction::Kept;
  }
  if (++state.bad_evals >= state.patience) {
    state.lr /= state.lr_factor;
    state.bad_evals = 0;
    return PlateauAction::Reduced;
  }
  return PlateauAction::Kept;
}

namespace {

double fd_eval(const FdProblem& problem, NetCaches& caches, SequenceBatch* dY,
               std::vector<std::uint8_t>* signature) {
  Network& net = *problem.net;
  if (problem.ids)
    net.forward_ids(caches, *problem.ids, /*train=*/true);
  else
    net.forward(caches, *problem.x, /*train=*/true);
  if (signature) *signature = net.activation_signature(caches);
  return problem.loss(net.output(caches), dY);
}

}  // namespace

FdReport finite_difference_check(const FdProblem& problem, double h, Index sample,
                                 Rng* rng) {
  if (!problem.net || !problem.loss || (!problem.x && !problem.ids))
    throw ContractError("finite_difference_check: incomplete problem");
  if (!(h > 0)) throw ConfigError("finite_difference_check: step must be positive");

  Network& net = *problem.net;
  NetCaches caches;
  SequenceBatch dY;
  fd_eval(problem, caches, &dY, nullptr);
  Vec analytic;
  net.backward(caches, dY, analytic);

  std::vector<Index> coords;
  const Index total = net.n_params();
  if (sample > 0 && sample < total) {
    if (!rng) throw ContractError("finite_difference_check: sampling needs an rng");
    coords.reserve(static_cast<std::size_t>(sample));
    for (Index k = 0; k < sample; ++k)
      coords.push_back(static_cast<Index>(rng->below(static_cast<std::uint64_t>(total))));
  } else {
    coords.resize(static_cast<std::size_t>(total));
    for (Index i = 0; i < total; ++i) coords[static_cast<std::size_t>(i)] = i;
  }

  // Per-coordinate pointer into the owning node's storage, so a probe only
  // touches one scalar instead of re-writing every parameter.
  std::vector<double*> where(static_cast<std::size_t>(total));
  for (const auto& p : net.param_info())
    for (Index k = 0; k < p.size; ++k)
      where[static_cast<std::size_t>(p.offset + k)] = p.data + k;

  FdReport report;
  std::vector<std::uint8_t> sig_plus, sig_minus;
  for (Index i : coords) {
    double* slot = where[static_cast<std::size_t>(i)];
    const double saved = *slot;

    *slot = saved + h;
    const double f_plus = fd_eval(problem, caches, nullptr, &sig_plus);
    *slot = saved - h;
    const double f_minus = fd_eval(problem, caches, nullptr, &sig_minus);
    *slot = saved;

    if (sig_plus != sig_minus) {
      ++report.excluded;
      continue;
    }
    const double g_fd = (f_plus - f_minus) / (2.0 * h);
    const double rel = std::abs(analytic[i] - g_fd) / std::max(std::abs(g_fd), 1e-8);
    ++report.evaluated;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = i;
      report.worst_name = param_name_at(net, i);
    }
  }
  return report;
}

}  // namespace indrnn
