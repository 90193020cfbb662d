// Acceptance gate. Each invocation runs one numbered criterion end to end
// and prints exactly one verdict line of the form
//   criterion N: PASS: <measured numbers>
//   criterion N: FAIL: <what missed and by how much>
// The process exits 0 on PASS and 1 on FAIL. Every tolerance is pinned here
// in code, next to the check that uses it.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "indrnn/bench.hpp"
#include "indrnn/checkpoint.hpp"
#include "indrnn/config.hpp"
#include "indrnn/diagnostics.hpp"
#include "indrnn/runner.hpp"
#include "indrnn/tasks.hpp"
#include "indrnn/text.hpp"
#include "indrnn/training.hpp"

namespace {

using namespace indrnn;
namespace fs = std::filesystem;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

SequenceBatch randn_input(Rng& rng, Index t, Index b, Index f) {
  SequenceBatch x(t, b, f);
  for (Index i = 0; i < x.flat().rows(); ++i) {
    for (Index j = 0; j < x.flat().cols(); ++j) x.flat()(i, j) = rng.normal(0.0, 1.0);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Adding-problem training, shared by criteria 1 and 2. Mirrors the adding
// task runner but stops as soon as the eval target is met.

struct AddingOutcome {
  bool reached = false;
  std::uint64_t batches = 0;    // batches consumed when the target was met
  double final_eval = kNan;     // last eval mse seen
  double best_eval = kNan;
};

AddingOutcome train_adding(CellKind cell, Activation act, Index t_len, Index layers,
                           Index hidden, double lr, double gamma,
                           std::uint64_t budget, double target, std::uint64_t seed,
                           Index eval_every) {
  NetworkSpec spec;
  spec.kind = NetKind::Stacked;
  spec.cell = cell;
  spec.activation = act;
  spec.output_mode = OutputMode::LastStep;
  spec.input_dim = 2;
  spec.output_dim = 1;
  spec.layers = layers;
  spec.hidden = hidden;
  spec.gamma = gamma;
  spec.horizon = t_len;

  const Index batch = 32;
  Rng rng(seed);
  Network net = build_network(spec, rng);
  TrainState state = init_train_state(net, lr);

  Rng eval_rng(seed ^ 0x5eed5eedULL);
  std::vector<AddingBatch> eval_set;
  for (int i = 0; i < 8; ++i) eval_set.push_back(gen_adding_batch(eval_rng, t_len, batch));

  AddingOutcome out;
  NetCaches caches;
  Vec grads = Vec::Zero(net.n_params());
  for (std::uint64_t s = 0; s < budget; ++s) {
    const AddingBatch b = gen_adding_batch(rng, t_len, batch);
    net.forward(caches, b.x, true, &rng);
    const LossValue loss = mse_loss(net.output(caches).flat().col(0), b.y);
    SequenceBatch dY(1, batch, 1);
    dY.flat().col(0) = loss.grad;
    net.backward(caches, dY, grads);
    adam_step(state, net, grads);
    net.clamp_recurrent(gamma, t_len);

    if ((s + 1) % static_cast<std::uint64_t>(eval_every) == 0) {
      double eval = 0.0;
      for (const auto& eb : eval_set) {
        net.forward(caches, eb.x, false);
        eval += mse_loss(net.output(caches).flat().col(0), eb.y).loss;
      }
      eval /= static_cast<double>(eval_set.size());
      out.final_eval = eval;
      out.best_eval = std::isnan(out.best_eval) ? eval : std::min(out.best_eval, eval);
      plateau_update(state, eval);
      if (target > 0.0 && eval < target) {
        out.reached = true;
        out.batches = s + 1;
        return out;
      }
    }
  }
  out.batches = budget;
  return out;
}

// ---------------------------------------------------------------------------
// Pixel-task training, shared by criteria 5, 6 and 8.

struct Digits {
  PixelDataset train;
  PixelDataset test;
};

Digits load_digits(const std::string& data_dir) {
  Digits d;
  d.train = load_idx(data_dir + "/digits8x8-train-images.idx",
                     data_dir + "/digits8x8-train-labels.idx");
  d.test = load_idx(data_dir + "/digits8x8-test-images.idx",
                    data_dir + "/digits8x8-test-labels.idx");
  return d;
}

Index count_correct(const Mat& logits, const std::vector<int>& labels) {
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index pick = 0;
    logits.row(i).maxCoeff(&pick);
    if (pick == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return correct;
}

double eval_accuracy(Network& net, NetCaches& caches, const PixelDataset& ds,
                     Index batch) {
  SequenceBatch x;
  std::vector<int> labels;
  Index correct = 0;
  std::vector<Index> rows;
  for (Index start = 0; start < ds.count; start += batch) {
    rows.clear();
    for (Index i = start; i < std::min(ds.count, start + batch); ++i) rows.push_back(i);
    pixel_batch(ds, rows, x, labels);
    net.forward(caches, x, false);
    correct += count_correct(net.output(caches).flat(), labels);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.count);
}

struct PixelRun {
  Network net;
  double test_acc = kNan;
  double tail_acc = kNan;    // mean test accuracy over the last five epochs
  double train_loss = kNan;  // mean over the last epoch
  Index epochs = 0;
};

struct PixelConfig {
  CellKind cell = CellKind::IndRnn;
  Activation act = Activation::Relu;
  Index layers = 6;
  Index hidden = 64;
  bool bn = true;
  double gamma = 2.0;
  double lr = 1e-3;
  Index batch = 32;
  Index max_epochs = 40;
  Index decay_every = 0;         // > 0: halve the learning rate at this cadence
  double stop_train_loss = 0.0;  // > 0: stop once the epoch loss drops below
  double stop_test_acc = 0.0;    // > 0: stop once test accuracy reaches this
  std::uint64_t seed = 1;
};

PixelRun train_pixels(const Digits& data, const PixelConfig& pc) {
  const Index t_steps = data.train.height * data.train.width;
  NetworkSpec spec;
  spec.kind = NetKind::Stacked;
  spec.cell = pc.cell;
  spec.activation = pc.act;
  spec.output_mode = OutputMode::LastStep;
  spec.input_dim = 1;
  spec.output_dim = 10;
  spec.layers = pc.layers;
  spec.hidden = pc.hidden;
  spec.use_bn = pc.bn;
  spec.gamma = pc.gamma;
  spec.horizon = t_steps;

  Rng rng(pc.seed);
  PixelRun run{build_network(spec, rng), kNan, kNan, kNan, 0};
  TrainState state = init_train_state(run.net, pc.lr);

  NetCaches caches;
  Vec grads = Vec::Zero(run.net.n_params());
  std::vector<Index> order(static_cast<std::size_t>(data.train.count));
  std::vector<double> recent;
  SequenceBatch x;
  std::vector<int> labels;
  const Index steps_per_epoch = data.train.count / pc.batch;

  for (Index epoch = 0; epoch < pc.max_epochs; ++epoch) {
    if (pc.decay_every > 0 && epoch > 0 && epoch % pc.decay_every == 0) state.lr *= 0.5;
    for (Index i = 0; i < data.train.count; ++i) order[static_cast<std::size_t>(i)] = i;
    for (Index i = data.train.count - 1; i > 0; --i) {
      std::swap(order[static_cast<std::size_t>(i)],
                order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    double loss_sum = 0.0;
    for (Index step = 0; step < steps_per_epoch; ++step) {
      const std::vector<Index> chunk(
          order.begin() + static_cast<std::ptrdiff_t>(step * pc.batch),
          order.begin() + static_cast<std::ptrdiff_t>((step + 1) * pc.batch));
      pixel_batch(data.train, chunk, x, labels);
      run.net.forward(caches, x, true, &rng);
      const CeLossValue ce = cross_entropy_loss(run.net.output(caches).flat(), labels);
      SequenceBatch dY(1, pc.batch, 10);
      dY.flat() = ce.grad;
      run.net.backward(caches, dY, grads);
      adam_step(state, run.net, grads);
      run.net.clamp_recurrent(pc.gamma, t_steps);
      loss_sum += ce.loss;
    }
    run.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    run.test_acc = eval_accuracy(run.net, caches, data.test, pc.batch);
    recent.push_back(run.test_acc);
    if (recent.size() > 5) recent.erase(recent.begin());
    run.epochs = epoch + 1;
    if (pc.stop_train_loss > 0.0 && run.train_loss <= pc.stop_train_loss) break;
    if (pc.stop_test_acc > 0.0 && run.test_acc >= pc.stop_test_acc) break;
  }
  run.tail_acc = 0.0;
  for (const double a : recent) run.tail_acc += a / static_cast<double>(recent.size());
  return run;
}

// ---------------------------------------------------------------------------
// criterion 1: the adding problem at T=100 trains to a small eval error
// quickly. Bound 0.02 distinguishes a solved run from the mean-predicting
// plateau at ~0.167.

bool criterion_1() {
  const auto t0 = Clock::now();
  const AddingOutcome r = train_adding(CellKind::IndRnn, Activation::Relu,
                                       /*t_len=*/100, /*layers=*/2, /*hidden=*/128,
                                       /*lr=*/2e-4, /*gamma=*/2.0,
                                       /*budget=*/30000, /*target=*/0.02,
                                       /*seed=*/1, /*eval_every=*/200);
  const double elapsed = seconds_since(t0);
  const bool in_time = elapsed <= 1200.0;
  if (r.reached && in_time) {
    std::printf("criterion 1: PASS: adding T=100 eval mse %.4f after %llu batches in %.0fs\n",
                r.final_eval, static_cast<unsigned long long>(r.batches), elapsed);
    return true;
  }
  std::printf("criterion 1: FAIL: adding T=100 best eval mse %.4f after %llu batches "
              "in %.0fs (need < 0.02 within 30000 batches and 1200s)\n",
              r.best_eval, static_cast<unsigned long long>(r.batches), elapsed);
  return false;
}

// criterion 2: the adding problem at T=500 still trains; a dense-recurrence
// tanh baseline stays pinned at the mean-prediction plateau; and the
// one-neuron state-to-state gradient stays bounded for horizons up to 5000
// once |u| <= 1.

bool criterion_2() {
  // Part 1: elementwise recurrence solves T=500.
  const auto t0 = Clock::now();
  const AddingOutcome ind = train_adding(CellKind::IndRnn, Activation::Relu,
                                         500, 2, 128, 2e-4, 2.0,
                                         /*budget=*/100000, /*target=*/0.05,
                                         /*seed=*/1, /*eval_every=*/500);
  const double ind_secs = seconds_since(t0);
  std::printf("  T=500 elementwise: eval mse %.4f after %llu batches (%.0fs)\n",
              ind.final_eval, static_cast<unsigned long long>(ind.batches), ind_secs);

  // Part 2: the dense tanh baseline cannot move off the mean-prediction
  // plateau at 1/6. Its full 100K-batch budget is hours of dense matmuls on
  // one core, so it gets a 6000-batch window: long enough for Adam to learn
  // the output mean (a few thousand steps at this lr), after which it must
  // sit within 20% of 1/6 and never dip meaningfully below it.
  const AddingOutcome van = train_adding(CellKind::VanillaTanh, Activation::Tanh,
                                         500, 2, 128, 2e-4, kInf,
                                         /*budget=*/6000, /*target=*/0.0,
                                         /*seed=*/1, /*eval_every=*/500);
  const double plateau = 1.0 / 6.0;
  const bool vanilla_pinned = van.final_eval >= 0.8 * plateau &&
                              van.final_eval <= 1.2 * plateau &&
                              van.best_eval >= 0.8 * plateau;
  std::printf("  T=500 dense tanh baseline: final eval mse %.4f, best %.4f\n",
              van.final_eval, van.best_eval);

  // Part 3: with |u| <= 1 the magnitude of dh_T/dh_t never leaves [0, 1],
  // for any horizon up to 5000.
  bool grads_bounded = true;
  for (const double u : {-1.0, -0.999, -0.5, 0.0, 0.3, 0.9, 0.99, 0.999, 1.0}) {
    for (const Index horizon : {Index(1), Index(10), Index(100), Index(1000), Index(5000)}) {
      const double g = grad_wrt_past_state(u, Vec::Ones(horizon));
      if (!(std::abs(g) >= 0.0 && std::abs(g) <= 1.0)) grads_bounded = false;
    }
  }

  if (ind.reached && vanilla_pinned && grads_bounded) {
    std::printf("criterion 2: PASS: T=500 eval mse %.4f in %llu batches; dense tanh "
                "pinned at %.4f; |dh_T/dh_t| within [0,1] through horizon 5000\n",
                ind.final_eval, static_cast<unsigned long long>(ind.batches),
                van.final_eval);
    return true;
  }
  std::printf("criterion 2: FAIL: solved=%d (best %.4f, need < 0.05), baseline_pinned=%d "
              "(final %.4f, need within 20%% of 0.1667), grads_bounded=%d\n",
              ind.reached ? 1 : 0, ind.best_eval, vanilla_pinned ? 1 : 0,
              van.final_eval, grads_bounded ? 1 : 0);
  return false;
}

// criterion 3: analytic gradients match central differences on tiny networks
// of all three layouts, and the one-neuron relu gradient matches its closed
// form.

NetworkSpec fd_spec(NetKind kind) {
  NetworkSpec spec;
  spec.kind = kind;
  spec.activation = Activation::Tanh;
  spec.output_mode = OutputMode::EveryStep;
  spec.input_dim = 3;
  spec.output_dim = 2;
  spec.horizon = 5;
  switch (kind) {
    case NetKind::Stacked:
      spec.layers = 2;
      spec.hidden = 8;
      break;
    case NetKind::Residual:
      spec.layers = 2;
      spec.hidden = 6;
      break;
    case NetKind::Dense:
      spec.growth = 2;
      spec.block_config = {2};
      spec.hidden = 4;
      break;
  }
  return spec;
}

bool criterion_3() {
  // Random-target quadratic loss keeps output gradients O(1), which keeps
  // every coordinate's finite-difference signal well above rounding noise.
  double worst = 0.0;
  std::string worst_name;
  int nets = 0;
  for (const NetKind kind : {NetKind::Stacked, NetKind::Residual, NetKind::Dense}) {
    for (std::uint64_t seed = 1; seed <= 7; ++seed) {
      Rng rng(seed);
      Network net = build_network(fd_spec(kind), rng);
      SequenceBatch x = randn_input(rng, 5, 3, 3);
      SequenceBatch target = randn_input(rng, 5, 3, 2);

      FdProblem problem;
      problem.net = &net;
      problem.x = &x;
      problem.loss = [&target](const SequenceBatch& y, SequenceBatch* dY) {
        const double n = static_cast<double>(y.flat().size());
        if (dY) {
          *dY = y;
          dY->flat() = 2.0 * (y.flat() - target.flat()) / n;
        }
        return (y.flat() - target.flat()).squaredNorm() / n;
      };
      const FdReport report = finite_difference_check(problem, 1e-5);
      ++nets;
      if (report.max_rel_err > worst) {
        worst = report.max_rel_err;
        worst_name = report.worst_name;
      }
    }
  }

  // One relu neuron: h_t = relu(w x_t + u h_{t-1} + b), loss = h_{T-1}. The
  // chain rule collapses to running products of u and the step gates, which
  // we accumulate here independently of the library's reverse pass.
  IndRnnLayer unit;
  unit.W = Mat::Constant(1, 1, 0.8);
  unit.u = Vec::Constant(1, 0.6);
  unit.b = Vec::Constant(1, 0.05);
  unit.activation = Activation::Relu;
  const Index t_len = 6;
  SequenceBatch x(t_len, 1, 1);
  const double xs[t_len] = {0.4, -0.9, 1.2, 0.3, -0.2, 0.7};
  for (Index t = 0; t < t_len; ++t) x.at(t, 0, 0) = xs[t];

  const ForwardCache cache = forward_sequence(unit, x);
  SequenceBatch dH(t_len, 1, 1);
  dH.flat().setZero();
  dH.at(t_len - 1, 0, 0) = 1.0;
  const LayerGrads grads = backward_sequence(unit, cache, dH);

  double du = 0.0, dw = 0.0, db = 0.0, chain = 1.0;
  for (Index t = t_len - 1; t >= 0; --t) {
    const double gate = cache.preacts.at(t, 0, 0) > 0.0 ? 1.0 : 0.0;
    const double reach = chain * gate;  // dLoss/dpreact_t
    du += reach * cache.states.at(t, 0, 0);  // states slab t is h_{t-1}
    dw += reach * xs[t];
    db += reach;
    chain = reach * unit.u(0);
  }
  const double unit_err = std::max({std::abs(grads.du(0) - du) / std::max(std::abs(du), 1e-12),
                                    std::abs(grads.dW(0, 0) - dw) / std::max(std::abs(dw), 1e-12),
                                    std::abs(grads.db(0) - db) / std::max(std::abs(db), 1e-12)});

  const bool fd_ok = worst < 1e-5;
  const bool unit_ok = unit_err < 1e-13;
  if (fd_ok && unit_ok && nets >= 20) {
    std::printf("criterion 3: PASS: max rel err %.3g across %d tiny nets (worst %s); "
                "one-neuron relu closed form agrees to %.3g\n",
                worst, nets, worst_name.c_str(), unit_err);
    return true;
  }
  std::printf("criterion 3: FAIL: fd max rel err %.3g at %s (need < 1e-5 over >= 20 nets, "
              "ran %d); one-neuron closed-form rel err %.3g (need < 1e-13)\n",
              worst, worst_name.c_str(), nets, unit_err);
  return false;
}

// criterion 4: dense linear recurrences with a clean eigenbasis convert to
// the elementwise-plus-mixing form and simulate identically; a defective
// matrix is refused.

bool criterion_4() {
  Rng rng(4242);
  double worst = 0.0;
  const Index trials = 50;
  for (Index trial = 0; trial < trials; ++trial) {
    const Index n = (trial % 2 == 0) ? 3 : 5;
    Vec lambdas(n);
    for (Index i = 0; i < n; ++i) {
      bool ok = false;
      while (!ok) {
        lambdas[i] = rng.uniform(-0.9, 0.9);
        ok = true;
        for (Index j = 0; j < i; ++j) ok = ok && std::abs(lambdas[i] - lambdas[j]) > 0.05;
      }
    }
    Mat basis(n, n);
    while (true) {
      for (Index r = 0; r < n; ++r) {
        for (Index c = 0; c < n; ++c) basis(r, c) = rng.uniform(-1.0, 1.0);
      }
      Eigen::JacobiSVD<Mat> svd(basis);
      const double smin = svd.singularValues()[n - 1];
      if (smin > 0.0 && svd.singularValues()[0] / smin < 50.0) break;
    }
    LinearRnn rnn;
    rnn.U = basis * lambdas.asDiagonal() * basis.inverse();
    rnn.W = Mat(n, 2);
    for (Index r = 0; r < n; ++r) {
      for (Index c = 0; c < 2; ++c) rnn.W(r, c) = rng.uniform(-1.0, 1.0);
    }
    SequenceBatch x(10, 2, 2);
    for (Index r = 0; r < x.flat().rows(); ++r) {
      for (Index c = 0; c < x.flat().cols(); ++c) x.flat()(r, c) = rng.uniform(-1.0, 1.0);
    }
    const TwoLayerForm form = rnn_to_indrnn(rnn);
    worst = std::max(worst, verify_equivalence(rnn, form, x, 10));
  }

  bool rejected = false;
  try {
    LinearRnn nil;
    nil.U = Mat::Zero(2, 2);
    nil.U(0, 1) = 1.0;  // single Jordan block, no eigenbasis
    nil.W = Mat::Ones(2, 2);
    rnn_to_indrnn(nil);
  } catch (const NotRepresentableError&) {
    rejected = true;
  }

  if (worst < 1e-8 && rejected) {
    std::printf("criterion 4: PASS: max deviation %.3g over %lld systems; defective "
                "matrix rejected\n",
                worst, static_cast<long long>(trials));
    return true;
  }
  std::printf("criterion 4: FAIL: max deviation %.3g (need < 1e-8), defective "
              "rejected=%d\n",
              worst, rejected ? 1 : 0);
  return false;
}

// criterion 5: after training deep elementwise and dense-recurrence nets to
// the same modest loss on the 64-step digit task, the elementwise net must
// deliver at least 10x more gradient to the first input step.

bool criterion_5(const std::string& data_dir) {
  const Digits data = load_digits(data_dir);

  PixelConfig ind;
  ind.cell = CellKind::IndRnn;
  ind.act = Activation::Relu;
  ind.layers = 8;
  ind.hidden = 16;
  ind.bn = false;
  ind.gamma = 2.0;
  ind.lr = 1e-3;
  ind.max_epochs = 40;
  ind.stop_train_loss = 1.9;
  ind.seed = 5;

  PixelConfig van = ind;
  van.cell = CellKind::VanillaTanh;
  van.act = Activation::Tanh;
  van.gamma = kInf;

  PixelRun ind_run = train_pixels(data, ind);
  PixelRun van_run = train_pixels(data, van);
  std::printf("  elementwise: train loss %.3f after %lld epochs; dense tanh: %.3f after %lld\n",
              ind_run.train_loss, static_cast<long long>(ind_run.epochs),
              van_run.train_loss, static_cast<long long>(van_run.epochs));
  const bool both_trained = ind_run.train_loss <= 1.9 && van_run.train_loss <= 1.9;

  // Equal-footing probe batches; the loss surrogate only scales the trace.
  std::vector<SequenceBatch> probes;
  SequenceBatch x;
  std::vector<int> labels;
  for (Index k = 0; k < 3; ++k) {
    std::vector<Index> rows;
    for (Index i = k * 32; i < (k + 1) * 32; ++i) rows.push_back(i);
    pixel_batch(data.train, rows, x, labels);
    probes.push_back(x);
  }
  const LossGradFn quad = [](const SequenceBatch& y) {
    SequenceBatch dY = y;
    dY.flat() *= 2.0 / static_cast<double>(y.flat().size());
    return dY;
  };
  const GradientTrace ind_trace = record_gradient_flow(ind_run.net, probes, quad);
  const GradientTrace van_trace = record_gradient_flow(van_run.net, probes, quad);
  const double ratio = ind_trace.over_time[0] / van_trace.over_time[0];

  if (both_trained && ratio >= 10.0) {
    std::printf("criterion 5: PASS: gradient reaching t=0 is %.1fx larger for the "
                "elementwise net (%.3g vs %.3g)\n",
                ratio, ind_trace.over_time[0], van_trace.over_time[0]);
    return true;
  }
  std::printf("criterion 5: FAIL: both_trained=%d (losses %.3f / %.3f, need <= 1.9), "
              "t=0 gradient ratio %.2f (need >= 10)\n",
              both_trained ? 1 : 0, ind_run.train_loss, van_run.train_loss, ratio);
  return false;
}

// criterion 6: a 6-layer stacked net reads digits pixel by pixel. The
// bundled 8x8 set (64 steps) must reach 90% test accuracy inside 5 minutes;
// the full 28x28 set is attempted only when its files are supplied.

std::string find_idx(const std::string& dir, const char* base) {
  for (const char* ext : {"", ".gz"}) {
    const std::string path = dir + "/" + base + ext;
    if (fs::exists(path)) return path;
  }
  return "";
}

bool criterion_6(const std::string& data_dir, const std::string& mnist_dir) {
  const auto t0 = Clock::now();
  PixelConfig pc;
  pc.layers = 6;
  pc.hidden = 80;
  pc.bn = true;
  pc.lr = 2e-3;
  pc.max_epochs = 80;
  pc.decay_every = 20;
  pc.stop_test_acc = 0.93;
  pc.seed = 6;
  const PixelRun bundled = train_pixels(load_digits(data_dir), pc);
  const double bundled_secs = seconds_since(t0);
  const bool bundled_ok = bundled.test_acc >= 0.90 && bundled_secs <= 300.0;
  std::printf("  bundled 8x8: test acc %.4f after %lld epochs in %.0fs\n",
              bundled.test_acc, static_cast<long long>(bundled.epochs), bundled_secs);

  // Full 28x28 half, only when the four files are present.
  const std::string dir = mnist_dir.empty() ? data_dir + "/mnist" : mnist_dir;
  const std::string ti = find_idx(dir, "train-images-idx3-ubyte");
  const std::string tl = find_idx(dir, "train-labels-idx1-ubyte");
  const std::string vi = find_idx(dir, "t10k-images-idx3-ubyte");
  const std::string vl = find_idx(dir, "t10k-labels-idx1-ubyte");
  bool full_ok = true;
  std::string full_note = "full 28x28 files not supplied, skipped";
  if (!ti.empty() && !tl.empty() && !vi.empty() && !vl.empty()) {
    Digits mnist;
    mnist.train = load_idx(ti, tl);
    mnist.test = load_idx(vi, vl);
    PixelConfig full;
    full.layers = 6;
    full.hidden = 128;
    full.bn = true;
    full.lr = 2e-4;
    full.batch = 32;
    full.max_epochs = 50;
    full.stop_test_acc = 0.971;
    full.seed = 6;
    const PixelRun run = train_pixels(mnist, full);
    full_ok = run.test_acc >= 0.97;
    full_note = "full 28x28 test acc " + std::to_string(run.test_acc) + " after " +
                std::to_string(run.epochs) + " epochs";
  }

  if (bundled_ok && full_ok) {
    std::printf("criterion 6: PASS: bundled 8x8 test acc %.4f in %.0fs; %s\n",
                bundled.test_acc, bundled_secs, full_note.c_str());
    return true;
  }
  std::printf("criterion 6: FAIL: bundled acc %.4f in %.0fs (need >= 0.90 within 300s); %s\n",
              bundled.test_acc, bundled_secs, full_note.c_str());
  return false;
}

// criterion 7: byte-level modeling of a generated >= 1 MB corpus. Validation
// BPC must land strictly between 0 and the order-0 entropy with a monotone
// best-so-far trace, and doubling T must not cost more than 0.02 BPC.

std::string synth_corpus(std::uint64_t seed, std::size_t min_bytes) {
  // Markov word soup: the next word is drawn near the previous one, so there
  // is local structure for the model to pick up beyond byte frequencies.
  static const char* words[] = {
      "moon",   "river", "stone",  "cloud",  "amber",  "forest", "quiet",
      "signal", "walker", "harbor", "ember",  "violet", "meadow", "copper",
      "island", "winter", "lantern", "sparrow", "thistle", "orchard",
  };
  constexpr int n_words = static_cast<int>(sizeof(words) / sizeof(words[0]));
  Rng rng(seed);
  std::string out;
  out.reserve(min_bytes + 64);
  int word = 0;
  while (out.size() < min_bytes) {
    const int len = 4 + static_cast<int>(rng.below(6));
    for (int i = 0; i < len; ++i) {
      word = (word + n_words + static_cast<int>(rng.below(7)) - 3) % n_words;
      out += words[word];
      out += (i + 1 == len) ? "." : " ";
    }
    out += (rng.below(4) == 0) ? "\n" : " ";
  }
  return out;
}

struct LmOutcome {
  double best_bpc = kNan;
  double final_bpc = kNan;
  double entropy0 = kNan;
  bool best_monotone = true;
};

LmOutcome parse_lm_run(const fs::path& out_dir) {
  LmOutcome o;
  std::ifstream metrics(out_dir / "metrics.csv");
  std::string line;
  std::getline(metrics, line);  // header
  double prev_best = kInf;
  while (std::getline(metrics, line)) {
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    // columns: epoch,train_bpc,valid_bpc,lr,best_valid_bpc
    o.final_bpc = std::stod(cells.at(2));
    const double best = std::stod(cells.at(4));
    if (best > prev_best + 1e-12) o.best_monotone = false;
    prev_best = best;
    o.best_bpc = best;
  }
  std::ifstream report(out_dir / "report.txt");
  while (std::getline(report, line)) {
    const std::string key = "order0 entropy (valid, bits) = ";
    if (line.rfind(key, 0) == 0) o.entropy0 = std::stod(line.substr(key.size()));
  }
  return o;
}

bool criterion_7() {
  const fs::path scratch =
      fs::temp_directory_path() / ("indrnn_accept7_" + std::to_string(::getpid()));
  fs::create_directories(scratch);
  const fs::path corpus_path = scratch / "corpus.txt";
  {
    const std::string corpus = synth_corpus(7, 1 << 20);  // >= 1 MiB
    std::ofstream out(corpus_path, std::ios::binary);
    out << corpus;
  }

  RunConfig cfg;
  cfg.task = "charlm";
  cfg.seed = 7;
  cfg.arch = "stacked";
  cfg.layers = 4;
  cfg.hidden = 64;
  cfg.batch = 32;
  cfg.lr = 1e-3;
  cfg.epochs = 5;
  cfg.t_len = 50;
  cfg.corpus = corpus_path.string();
  cfg.plots = false;
  cfg.checkpoints = false;
  cfg.out_dir = (scratch / "t50").string();

  RunConfig cfg100 = cfg;
  cfg100.t_len = 100;
  cfg100.epochs = 10;  // batches are half as many per epoch; match step count
  cfg100.out_dir = (scratch / "t100").string();

  const int rc50 = run_task(cfg);
  const int rc100 = run_task(cfg100);
  const LmOutcome t50 = parse_lm_run(scratch / "t50");
  const LmOutcome t100 = parse_lm_run(scratch / "t100");
  fs::remove_all(scratch);

  std::printf("  T=50: best bpc %.4f (order-0 entropy %.4f); T=100: best bpc %.4f\n",
              t50.best_bpc, t50.entropy0, t100.best_bpc);
  const bool beats_order0 = t50.best_bpc > 0.0 && t50.best_bpc < t50.entropy0;
  const bool longer_ok = t100.best_bpc <= t50.best_bpc + 0.02;
  const bool ran = rc50 == 0 && rc100 == 0;

  if (ran && beats_order0 && t50.best_monotone && t100.best_monotone && longer_ok) {
    std::printf("criterion 7: PASS: valid bpc %.4f beats order-0 entropy %.4f; "
                "best-so-far monotone; T=100 bpc %.4f within +0.02\n",
                t50.best_bpc, t50.entropy0, t100.best_bpc);
    return true;
  }
  std::printf("criterion 7: FAIL: ran=%d, bpc %.4f vs entropy %.4f (need inside (0, H0)), "
              "monotone=%d/%d, T=100 %.4f vs limit %.4f\n",
              ran ? 1 : 0, t50.best_bpc, t50.entropy0, t50.best_monotone ? 1 : 0,
              t100.best_monotone ? 1 : 0, t100.best_bpc, t50.best_bpc + 0.02);
  return false;
}

// criterion 8: the recurrent-gain budget gamma barely moves digit accuracy.
// Four runs, identical but for gamma, must land within 2 points of each
// other.

bool criterion_8(const std::string& data_dir) {
  const Digits data = load_digits(data_dir);
  // Single runs at this budget jitter by a point or two, which would swamp
  // the effect under test; three seeds and a trailing-epoch average give a
  // stable per-gamma estimate.
  const double gammas[] = {1.0, 2.0, 10.0, kInf};
  const std::uint64_t seeds[] = {8, 81, 802};
  double lo = 1.0, hi = 0.0;
  std::string detail;
  for (const double gamma : gammas) {
    double mean = 0.0;
    for (const std::uint64_t seed : seeds) {
      PixelConfig pc;
      pc.layers = 6;
      pc.hidden = 64;
      pc.bn = true;
      pc.lr = 2e-3;
      pc.gamma = gamma;
      pc.max_epochs = 50;  // fixed saturating budget keeps the runs comparable
      pc.decay_every = 20;
      pc.seed = seed;
      mean += train_pixels(data, pc).tail_acc / 3.0;
    }
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
    detail += (detail.empty() ? "" : ", ") + format_double(gamma) + ": " +
              std::to_string(mean).substr(0, 6);
    std::printf("  gamma %s: mean test acc %.4f\n", format_double(gamma).c_str(), mean);
  }
  const double spread = hi - lo;
  if (spread <= 0.02) {
    std::printf("criterion 8: PASS: accuracy spread %.4f across gamma {1,2,10,inf} (%s)\n",
                spread, detail.c_str());
    return true;
  }
  std::printf("criterion 8: FAIL: accuracy spread %.4f exceeds 0.02 (%s)\n", spread,
              detail.c_str());
  return false;
}

// criterion 9: runtime scaling in the state width. The elementwise kernel
// must stay near-linear, the dense kernel near-quadratic, and the crossover
// must favor the elementwise kernel by N=512.

bool criterion_9() {
  std::vector<BenchResult> fused, dense;
  for (const Index width : {Index(64), Index(128), Index(256), Index(512), Index(1024)}) {
    for (const BenchKind kind : {BenchKind::IndRnnFused, BenchKind::VanillaMatmul}) {
      BenchSpec spec;
      spec.kind = kind;
      spec.width = width;
      spec.steps = 100;
      spec.batch = 32;
      spec.reps = 15;
      spec.seed = 9;
      (kind == BenchKind::IndRnnFused ? fused : dense).push_back(time_recurrence(spec));
    }
  }
  const ScalingFit f_fit = scaling_fit(fused);
  const ScalingFit d_fit = scaling_fit(dense);
  const double fused_512 = fused[3].median_ms;
  const double dense_512 = dense[3].median_ms;

  const bool ok = f_fit.slope <= 1.3 && d_fit.slope >= 1.7 && fused_512 < dense_512;
  if (ok) {
    std::printf("criterion 9: PASS: exponents %.2f (elementwise) vs %.2f (dense); "
                "at N=512 %.3f ms vs %.3f ms\n",
                f_fit.slope, d_fit.slope, fused_512, dense_512);
    return true;
  }
  std::printf("criterion 9: FAIL: exponents %.2f (need <= 1.3) and %.2f (need >= 1.7); "
              "N=512 medians %.3f vs %.3f ms\n",
              f_fit.slope, d_fit.slope, fused_512, dense_512);
  return false;
}

// criterion 10: the cheap behavioral invariants, all in one timed sweep:
// clamp-after-step, one dropout mask per sequence, BN statistics policies,
// weight-decay exclusions, determinism by seed, checkpoint round-trip.

bool invariant_clamp_after_step() {
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.output_dim = 1;
  spec.layers = 2;
  spec.hidden = 12;
  spec.output_mode = OutputMode::LastStep;
  spec.horizon = 8;
  Rng rng(101);
  Network net = build_network(spec, rng);
  TrainState state = init_train_state(net, 0.05);  // large steps so the clamp works
  const double bound = std::pow(2.0, 1.0 / 8.0);

  NetCaches caches;
  Vec grads = Vec::Zero(net.n_params());
  for (int iter = 0; iter < 30; ++iter) {
    const AddingBatch b = gen_adding_batch(rng, 8, 8);
    net.forward(caches, b.x, true);
    const LossValue loss = mse_loss(net.output(caches).flat().col(0), b.y);
    SequenceBatch dY(1, 8, 1);
    dY.flat().col(0) = loss.grad;
    net.backward(caches, dY, grads);
    adam_step(state, net, grads);
    net.clamp_recurrent(2.0, 8);
    for (const auto& [name, u] : net.recurrent_gains()) {
      if (u->cwiseAbs().maxCoeff() > bound + 1e-15) return false;
    }
  }
  return true;
}

bool invariant_dropout_time_share() {
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.output_dim = 4;
  spec.layers = 1;
  spec.hidden = 4;
  spec.output_mode = OutputMode::EveryStep;
  spec.horizon = 6;
  spec.dropout.layer = 0.5;
  Rng rng(102);
  Network net = build_network(spec, rng);

  // Identity readout makes the mask visible in the output.
  Vec theta(net.n_params());
  net.copy_params_to(theta);
  for (const auto& info : net.param_info()) {
    if (info.name == "readout.w.W") {
      Mat eye = Mat::Identity(4, 4);
      theta.segment(info.offset, info.size) = Eigen::Map<Vec>(eye.data(), 16);
    } else if (info.name == "readout.w.b") {
      theta.segment(info.offset, info.size).setZero();
    }
  }
  net.set_params(theta);

  Rng data(7);
  SequenceBatch x = randn_input(data, 6, 2, 3);
  NetCaches ec, tc;
  net.forward(ec, x, false);
  const SequenceBatch h = net.output(ec);
  Rng mask_rng(123);
  net.forward(tc, x, true, &mask_rng);
  const SequenceBatch& y = net.output(tc);

  for (Index b = 0; b < 2; ++b) {
    for (Index f = 0; f < 4; ++f) {
      const bool dropped = y.at(0, b, f) == 0.0;
      for (Index t = 0; t < 6; ++t) {
        const double want = dropped ? 0.0 : 2.0 * h.at(t, b, f);
        if (y.at(t, b, f) != want) return false;
      }
    }
  }
  return true;
}

bool invariant_bn_policies() {
  Rng rng(103);
  BatchNorm all = make_batchnorm(3, BnPolicy::AllSteps);
  BatchNorm per = make_batchnorm(3, BnPolicy::PerStep);
  SequenceBatch x = randn_input(rng, 4, 5, 3);
  BnCache cache;
  batchnorm_apply(all, x, true, &cache);
  batchnorm_apply(per, x, true, &cache);
  if (all.running_mean.rows() != 1 || per.running_mean.rows() != 4) return false;

  // All-steps statistics are length-agnostic; per-step statistics are not.
  SequenceBatch longer = randn_input(rng, 6, 5, 3);
  batchnorm_apply(all, longer, true, &cache);
  try {
    batchnorm_apply(per, longer, true, &cache);
    return false;
  } catch (const ShapeError&) {
  }
  return true;
}

bool invariant_decay_exclusion() {
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.output_dim = 2;
  spec.layers = 2;
  spec.hidden = 5;
  spec.use_bn = true;
  spec.output_mode = OutputMode::LastStep;
  spec.horizon = 4;
  Rng rng(104);
  Network net = build_network(spec, rng);
  Vec theta(net.n_params());
  net.copy_params_to(theta);
  Vec grads = Vec::Zero(net.n_params());
  apply_weight_decay(net, grads, 0.1);
  for (const auto& info : net.param_info()) {
    const Vec seg = grads.segment(info.offset, info.size);
    const Vec want = 0.1 * theta.segment(info.offset, info.size);
    const bool decayed = info.cls == ParamClass::InputWeight ||
                         info.cls == ParamClass::Embedding;
    if (decayed && (seg - want).cwiseAbs().maxCoeff() > 0.0) return false;
    if (!decayed && seg.cwiseAbs().maxCoeff() > 0.0) return false;
  }
  return true;
}

bool invariant_determinism() {
  auto run_once = [](std::uint64_t seed) {
    NetworkSpec spec;
    spec.input_dim = 2;
    spec.output_dim = 1;
    spec.layers = 1;
    spec.hidden = 12;
    spec.output_mode = OutputMode::LastStep;
    spec.horizon = 8;
    Rng rng(seed);
    Network net = build_network(spec, rng);
    TrainState state = init_train_state(net, 1e-3);
    NetCaches caches;
    Vec grads = Vec::Zero(net.n_params());
    for (int s = 0; s < 40; ++s) {
      const AddingBatch b = gen_adding_batch(rng, 8, 8);
      net.forward(caches, b.x, true, &rng);
      const LossValue loss = mse_loss(net.output(caches).flat().col(0), b.y);
      SequenceBatch dY(1, 8, 1);
      dY.flat().col(0) = loss.grad;
      net.backward(caches, dY, grads);
      adam_step(state, net, grads);
      net.clamp_recurrent(2.0, 8);
    }
    Vec theta;
    net.copy_params_to(theta);
    return theta;
  };
  const Vec a = run_once(11), b = run_once(11), c = run_once(12);
  return (a - b).cwiseAbs().maxCoeff() == 0.0 && (a - c).cwiseAbs().maxCoeff() > 0.0;
}

bool invariant_checkpoint_round_trip() {
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.output_dim = 2;
  spec.layers = 2;
  spec.hidden = 6;
  spec.use_bn = true;
  spec.output_mode = OutputMode::LastStep;
  spec.horizon = 4;
  Rng rng(106);
  Network net = build_network(spec, rng);
  TrainState state = init_train_state(net, 1e-3);
  SequenceBatch x = randn_input(rng, 4, 3, 2);
  NetCaches caches;
  net.forward(caches, x, true);  // size the BN buffers
  const Checkpoint ck = make_checkpoint("cfg", net, state, rng, 3);
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = deserialize_checkpoint(bytes);
  if (serialize_checkpoint(back) != bytes) return false;

  Rng rng2(999);
  Network other = build_network(spec, rng2);
  TrainState state2 = init_train_state(other, 1.0);
  restore_checkpoint(back, other, state2, rng2);
  NetCaches ca, cb;
  net.forward(ca, x, false);
  other.forward(cb, x, false);
  return (net.output(ca).flat() - other.output(cb).flat()).cwiseAbs().maxCoeff() == 0.0 &&
         rng2.next_u64() == rng.next_u64();
}

bool criterion_10() {
  const auto t0 = Clock::now();
  struct NamedCheck {
    const char* name;
    bool (*fn)();
  };
  const NamedCheck checks[] = {
      {"clamp applies after every optimizer step", invariant_clamp_after_step},
      {"one dropout mask per sequence", invariant_dropout_time_share},
      {"batchnorm statistics policies", invariant_bn_policies},
      {"weight decay skips gains, biases and normalization", invariant_decay_exclusion},
      {"training is a pure function of config and seed", invariant_determinism},
      {"checkpoint round-trip is exact", invariant_checkpoint_round_trip},
  };
  std::string failed;
  for (const auto& check : checks) {
    if (!check.fn()) failed += std::string(failed.empty() ? "" : ", ") + check.name;
  }
  const double elapsed = seconds_since(t0);
  if (failed.empty() && elapsed < 120.0) {
    std::printf("criterion 10: PASS: 6 invariant suites in %.1fs\n", elapsed);
    return true;
  }
  std::printf("criterion 10: FAIL: %s%s(%.1fs, limit 120s)\n", failed.c_str(),
              failed.empty() ? "" : " failed ", elapsed);
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);  // progress lines survive timeouts
  CLI::App app{"acceptance gate: run one numbered criterion"};
  int criterion = 0;
  std::string data_dir = "data";
  std::string mnist_dir;
  app.add_option("--criterion", criterion, "criterion number, 1 through 10")
      ->required()
      ->check(CLI::Range(1, 10));
  app.add_option("--data-dir", data_dir, "directory holding the bundled idx files");
  app.add_option("--mnist-dir", mnist_dir, "directory with the full 28x28 idx files");
  CLI11_PARSE(app, argc, argv);

  bool pass = false;
  try {
    switch (criterion) {
      case 1: pass = criterion_1(); break;
      case 2: pass = criterion_2(); break;
      case 3: pass = criterion_3(); break;
      case 4: pass = criterion_4(); break;
      case 5: pass = criterion_5(data_dir); break;
      case 6: pass = criterion_6(data_dir, mnist_dir); break;
      case 7: pass = criterion_7(); break;
      case 8: pass = criterion_8(data_dir); break;
      case 9: pass = criterion_9(); break;
      case 10: pass = criterion_10(); break;
    }
  } catch (const std::exception& e) {
    std::printf("criterion %d: FAIL: unexpected error: %s\n", criterion, e.what());
    return 1;
  }
  return pass ? 0 : 1;
}
