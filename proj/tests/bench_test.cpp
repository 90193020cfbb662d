#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "indrnn/bench.hpp"
#include "indrnn/layer.hpp"

using namespace indrnn;

namespace {

BenchResult synthetic(Index width, double median_ms) {
  BenchResult r;
  r.kind = BenchKind::IndRnnFused;
  r.width = width;
  r.steps = 10;
  r.batch = 4;
  r.reps = 3;
  r.median_ms = median_ms;
  r.iqr_ms = 0.0;
  return r;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("workspace is sized and filled by kind") {
  BenchSpec spec;
  spec.kind = BenchKind::IndRnnFused;
  spec.width = 16;
  spec.steps = 5;
  spec.batch = 3;
  BenchWorkspace ws = make_bench_workspace(spec);
  CHECK(ws.u.size() == 16);
  CHECK(ws.U.size() == 0);
  CHECK(ws.s.steps() == 5);
  CHECK(ws.s.batch() == 3);
  CHECK(ws.s.features() == 16);
  CHECK(ws.out.same_shape(ws.s));

  spec.kind = BenchKind::VanillaMatmul;
  BenchWorkspace vw = make_bench_workspace(spec);
  CHECK(vw.U.rows() == 16);
  CHECK(vw.U.cols() == 16);
  CHECK(vw.u.size() == 0);
}

TEST_CASE("fused kernel reproduces the library recurrence") {
  BenchSpec spec;
  spec.kind = BenchKind::IndRnnFused;
  spec.width = 24;
  spec.steps = 7;
  spec.batch = 5;
  spec.seed = 9;
  BenchWorkspace ws = make_bench_workspace(spec);
  run_recurrence_once(ws);

  SequenceBatch want;
  recur_forward(ws.u, Activation::Relu, ws.s, Mat(), want);
  CHECK((ws.out.flat() - want.flat()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dense kernel reproduces the library recurrence") {
  BenchSpec spec;
  spec.kind = BenchKind::VanillaMatmul;
  spec.width = 12;
  spec.steps = 6;
  spec.batch = 4;
  spec.seed = 10;
  BenchWorkspace ws = make_bench_workspace(spec);
  run_recurrence_once(ws);

  SequenceBatch want;
  vanilla_recur_forward(ws.U, Activation::Tanh, ws.s, Mat(), want);
  CHECK((ws.out.flat() - want.flat()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("timing reports a positive median and sane spread") {
  BenchSpec spec;
  spec.width = 32;
  spec.steps = 20;
  spec.batch = 4;
  spec.reps = 9;
  spec.warmup = 1;
  BenchResult r = time_recurrence(spec);
  CHECK(r.median_ms > 0.0);
  CHECK(r.iqr_ms >= 0.0);
  CHECK(r.width == 32);
  CHECK(r.reps == 9);
}

TEST_CASE("scaling fit recovers exact power laws") {
  std::vector<BenchResult> linear, quadratic;
  for (Index n : {64, 128, 256, 512, 1024}) {
    const double x = static_cast<double>(n);
    linear.push_back(synthetic(n, 0.001 * x));
    quadratic.push_back(synthetic(n, 1e-6 * x * x));
  }
  ScalingFit f1 = scaling_fit(linear);
  CHECK(f1.slope == doctest::Approx(1.0).epsilon(1e-12));
  ScalingFit f2 = scaling_fit(quadratic);
  CHECK(f2.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::exp(f2.intercept) == doctest::Approx(1e-6).epsilon(1e-9));
}

TEST_CASE("scaling fit rejects degenerate inputs") {
  std::vector<BenchResult> few = {synthetic(64, 1.0), synthetic(128, 2.0),
                                  synthetic(256, 4.0)};
  CHECK_THROWS_AS(scaling_fit(few), ConfigError);

  // Four points but only three distinct widths.
  std::vector<BenchResult> dup = few;
  dup.push_back(synthetic(256, 4.1));
  CHECK_THROWS_AS(scaling_fit(dup), ConfigError);

  // Span below 8x.
  std::vector<BenchResult> narrow = {synthetic(64, 1.0), synthetic(96, 1.5),
                                     synthetic(128, 2.0), synthetic(256, 4.0)};
  CHECK_THROWS_AS(scaling_fit(narrow), ConfigError);

  std::vector<BenchResult> zero = {synthetic(64, 1.0), synthetic(128, 2.0),
                                   synthetic(256, 4.0), synthetic(512, 0.0)};
  CHECK_THROWS_AS(scaling_fit(zero), ConfigError);
}

TEST_CASE("csv lists one row per result under a fixed header") {
  std::vector<BenchResult> rs = {synthetic(64, 0.25)};
  rs[0].iqr_ms = 0.125;
  const std::string csv = bench_csv(rs);
  CHECK(csv.find("kind,N,T,B,reps,median_ms,iqr_ms\n") == 0);
  CHECK(csv.find("IndRnnFused,64,10,4,3,0.25,0.125\n") != std::string::npos);

  CHECK(std::string(bench_kind_name(BenchKind::IndRnnFused)) == "IndRnnFused");
  CHECK(std::string(bench_kind_name(BenchKind::VanillaMatmul)) == "VanillaMatmul");
}

}  // TEST_SUITE
