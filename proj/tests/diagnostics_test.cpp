#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "indrnn/diagnostics.hpp"

using namespace indrnn;

namespace {

SequenceBatch random_input(Rng& rng, Index t, Index b, Index m) {
  SequenceBatch x(t, b, m);
  for (Index i = 0; i < x.flat().rows(); ++i)
    for (Index j = 0; j < m; ++j) x.flat()(i, j) = rng.normal(0.0, 1.0);
  return x;
}

// Single linear neuron with a fixed recurrent gain; the input-gradient trace
// then has the closed form |dY/dx_t| = |u|^(T-1-t).
Network unit_chain(double gain) {
  NetworkSpec spec;
  spec.kind = NetKind::Stacked;
  spec.activation = Activation::Linear;
  spec.layers = 1;
  spec.hidden = 1;
  spec.input_dim = 1;
  spec.output_dim = 1;
  spec.output_mode = OutputMode::LastStep;
  spec.horizon = 6;
  Rng rng(1);
  Network net = build_network(spec, rng);

  Vec theta(net.n_params());
  net.copy_params_to(theta);
  for (const auto& p : net.param_info()) {
    if (p.cls == ParamClass::Recurrent)
      theta.segment(p.offset, p.size).setConstant(gain);
    else if (p.cls == ParamClass::InputWeight)
      theta.segment(p.offset, p.size).setConstant(1.0);
    else
      theta.segment(p.offset, p.size).setZero();
  }
  net.set_params(theta);
  return net;
}

LossGradFn sum_grad() {
  return [](const SequenceBatch& y) {
    SequenceBatch dY = y;
    dY.flat().setOnes();
    return dY;
  };
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("gradient flow through a neutral gain is flat over time") {
  Network net = unit_chain(1.0);
  Rng rng(2);
  std::vector<SequenceBatch> batches;
  batches.push_back(random_input(rng, 6, 3, 1));
  GradientTrace trace = record_gradient_flow(net, batches, sum_grad());

  REQUIRE(trace.over_time.size() == 6);
  for (Index t = 0; t < 6; ++t)
    CHECK(trace.over_time(t) == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(trace.over_depth.size() == 1);
  CHECK(trace.over_depth(0) > 0.0);
}

TEST_CASE("gradient flow decays geometrically for a small gain") {
  Network net = unit_chain(0.5);
  Rng rng(3);
  std::vector<SequenceBatch> batches;
  batches.push_back(random_input(rng, 6, 3, 1));
  batches.push_back(random_input(rng, 6, 3, 1));
  GradientTrace trace = record_gradient_flow(net, batches, sum_grad());

  for (Index t = 0; t < 6; ++t)
    CHECK(trace.over_time(t) ==
          doctest::Approx(std::pow(0.5, 5 - t)).epsilon(1e-12));
}

TEST_CASE("gradient flow rejects bad batch lists") {
  Network net = unit_chain(1.0);
  std::vector<SequenceBatch> none;
  CHECK_THROWS_AS(record_gradient_flow(net, none, sum_grad()), ConfigError);

  Rng rng(4);
  std::vector<SequenceBatch> ragged;
  ragged.push_back(random_input(rng, 6, 3, 1));
  ragged.push_back(random_input(rng, 5, 3, 1));
  CHECK_THROWS_AS(record_gradient_flow(net, ragged, sum_grad()), ShapeError);
}

TEST_CASE("histogram bins left-closed with a right-inclusive last bin") {
  Vec v(2);
  v << 1.0, 2.0;
  Histogram h = histogram(v, 2, 1.0, 2.0);
  REQUIRE(h.counts.size() == 2);
  CHECK(h.counts[0] == 1);
  CHECK(h.counts[1] == 1);  // the right edge belongs to the last bin

  Vec w(5);
  w << -1.0, 0.0, 0.499, 0.5, 3.0;
  Histogram g = histogram(w, 2, 0.0, 1.0);
  CHECK(g.counts[0] == 3);  // -1 clamps into the first bin
  CHECK(g.counts[1] == 2);  // 0.5 crosses the midpoint; 3 clamps right
  CHECK(g.counts[0] + g.counts[1] == 5);

  CHECK_THROWS_AS(histogram(v, 0, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(histogram(v, 2, 1.0, 1.0), ConfigError);
}

TEST_CASE("weight histogram reads the recurrent gains") {
  IndRnnLayer layer;
  layer.u = Vec(4);
  layer.u << -0.9, 0.1, 0.8, 0.95;
  Histogram h = weight_histogram(layer, 2, -1.0, 1.0);
  CHECK(h.counts[0] == 1);
  CHECK(h.counts[1] == 3);
}

TEST_CASE("memory classification thresholds the gain power") {
  // 0.9^100 = 2.656e-5: above an epsilon of 1e-5, below 1e-4.
  CHECK(classify_memory(0.9, 100, 1e-5) == MemoryClass::Long);
  CHECK(classify_memory(0.9, 100, 1e-4) == MemoryClass::Short);
  CHECK(classify_memory(-0.9, 100, 1e-5) == MemoryClass::Long);  // magnitude rules

  // The boundary counts as short: 1^T == epsilon of 1.
  CHECK(classify_memory(1.0, 50, 1.0) == MemoryClass::Short);
  CHECK(classify_memory(1.01, 50, 1.0) == MemoryClass::Long);

  // The activation derivative scales the per-step factor.
  CHECK(classify_memory(1.0, 100, 1e-4, 0.9) == MemoryClass::Short);
  CHECK(classify_memory(1.0, 100, 1e-5, 0.9) == MemoryClass::Long);
  CHECK(classify_memory(2.0, 100, 1.0, 0.5) == MemoryClass::Short);  // exactly 1^100

  CHECK_THROWS_AS(classify_memory(0.9, 0, 1e-5), ConfigError);
  CHECK_THROWS_AS(classify_memory(0.9, 10, 0.0), ConfigError);
}

TEST_CASE("layer memory report counts classes and signs") {
  Vec gains(5);
  gains << 0.999, 0.5, -0.999, -0.1, 1.1;
  MemoryReport report = classify_layer_memory(gains, 100, 1e-5);
  CHECK(report.neurons.size() == 5);
  CHECK(report.horizon == 100);
  CHECK(report.n_long == 3);   // 0.999^100 = 0.905, likewise -0.999 and 1.1
  CHECK(report.n_short == 2);  // 0.5 and 0.1 die out fast
  CHECK(report.n_negative == 2);
  CHECK(report.neurons[0].cls == MemoryClass::Long);
  CHECK(report.neurons[1].cls == MemoryClass::Short);
}

TEST_CASE("diagonal systems convert exactly") {
  LinearRnn rnn;
  rnn.U = Mat::Zero(3, 3);
  rnn.U.diagonal() << 0.5, -0.25, 0.75;
  rnn.W = Mat(3, 2);
  rnn.W << 1.0, 0.0, 0.0, 1.0, 0.5, -0.5;

  TwoLayerForm form = rnn_to_indrnn(rnn);
  Vec sorted = form.first.u;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  CHECK(sorted(0) == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(sorted(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sorted(2) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(form.first.activation == Activation::Linear);

  Rng rng(5);
  SequenceBatch x = random_input(rng, 10, 2, 2);
  CHECK(verify_equivalence(rnn, form, x, 10) < 1e-12);
}

TEST_CASE("symmetric and permutation systems convert within tolerance") {
  LinearRnn sym;
  sym.U = Mat(2, 2);
  sym.U << 0.3, 0.2, 0.2, 0.3;  // eigenvalues 0.5 and 0.1
  sym.W = Mat(2, 2);
  sym.W << 1.0, 0.5, -0.25, 0.75;
  TwoLayerForm f1 = rnn_to_indrnn(sym);
  Vec u1 = f1.first.u;
  std::sort(u1.data(), u1.data() + u1.size());
  CHECK(u1(0) == doctest::Approx(0.1).epsilon(1e-10));
  CHECK(u1(1) == doctest::Approx(0.5).epsilon(1e-10));

  Rng rng(6);
  SequenceBatch x = random_input(rng, 10, 3, 2);
  CHECK(verify_equivalence(sym, f1, x, 10) < 1e-10);

  // The swap map has real eigenvalues +1 and -1.
  LinearRnn swap;
  swap.U = Mat(2, 2);
  swap.U << 0.0, 1.0, 1.0, 0.0;
  swap.W = Mat::Identity(2, 2);
  TwoLayerForm f2 = rnn_to_indrnn(swap);
  Vec u2 = f2.first.u;
  std::sort(u2.data(), u2.data() + u2.size());
  CHECK(u2(0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(u2(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(verify_equivalence(swap, f2, x, 10) < 1e-10);
}

TEST_CASE("rotation and defective matrices are rejected") {
  // A rotation has complex eigenvalues; no real elementwise form exists.
  LinearRnn rot;
  rot.U = Mat(2, 2);
  rot.U << 0.0, -1.0, 1.0, 0.0;
  rot.W = Mat::Identity(2, 2);
  CHECK_THROWS_AS(rnn_to_indrnn(rot), NotRepresentableError);

  // A nilpotent Jordan block is defective: eigenvectors do not span.
  LinearRnn jordan;
  jordan.U = Mat(2, 2);
  jordan.U << 0.0, 1.0, 0.0, 0.0;
  jordan.W = Mat::Identity(2, 2);
  CHECK_THROWS_AS(rnn_to_indrnn(jordan), NotRepresentableError);

  // Nearly defective: eigenvectors exist but are pathologically conditioned.
  LinearRnn skew;
  skew.U = Mat(2, 2);
  skew.U << 0.5, 1.0, 0.0, 0.5 + 1e-13;
  skew.W = Mat::Identity(2, 2);
  CHECK_THROWS_AS(rnn_to_indrnn(skew), NotRepresentableError);
}

TEST_CASE("tight options accept what loose options reject") {
  LinearRnn mild;
  mild.U = Mat(2, 2);
  mild.U << 0.5, 0.3, 0.0, 0.2;  // triangular, eigenvalues 0.5 and 0.2
  mild.W = Mat::Identity(2, 2);

  CHECK_NOTHROW(rnn_to_indrnn(mild));
  EquivOptions strict;
  strict.cond_limit = 1.0;  // nothing nontrivial passes
  CHECK_THROWS_AS(rnn_to_indrnn(mild, strict), NotRepresentableError);
}

}  // TEST_SUITE
