#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "indrnn/types.hpp"

namespace indrnn {

// What the timed region contains. Both kinds run the same T-step state
// recurrence over precomputed input projections; they differ only in the
// per-step state update (elementwise gains vs. a dense N x N matmul).
enum class BenchKind { IndRnnFused, VanillaMatmul };

const char* bench_kind_name(BenchKind kind);

struct BenchSpec {
  BenchKind kind = BenchKind::IndRnnFused;
  Index width = 128;   // N, state size
  Index steps = 100;   // T
  Index batch = 32;    // B
  int reps = 30;
  int warmup = 3;
  std::uint64_t seed = 1;
};

struct BenchResult {
  BenchKind kind = BenchKind::IndRnnFused;
  Index width = 0;
  Index steps = 0;
  Index batch = 0;
  int reps = 0;
  double median_ms = 0.0;  // per processed batch
  double iqr_ms = 0.0;
};

// Every buffer the timed loop touches, allocated and filled up front so the
// region itself performs no allocation and draws no randomness.
struct BenchWorkspace {
  BenchKind kind = BenchKind::IndRnnFused;
  Vec u;             // IndRnnFused gains
  Mat U;             // VanillaMatmul recurrent matrix
  SequenceBatch s;   // T x B x N precomputed input projections
  SequenceBatch out; // T x B x N states
};

BenchWorkspace make_bench_workspace(const BenchSpec& spec);

// Runs the recurrence for one batch. This is exactly the timed unit; tests
// hook the allocator around it to prove the loop is allocation-free.
void run_recurrence_once(BenchWorkspace& ws);

// Warms up, then times run_recurrence_once `reps` times on one core and
// reports the median and interquartile range in milliseconds.
BenchResult time_recurrence(const BenchSpec& spec);

// Least-squares slope of log(median_ms) against log(width). Requires at
// least four distinct widths whose extremes span a factor of eight or more;
// degenerate inputs (including zero medians) throw ConfigError.
struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
};

ScalingFit scaling_fit(const std::vector<BenchResult>& results);

// One header line plus one row per result: kind,N,T,B,reps,median_ms,iqr_ms
std::string bench_csv(const std::vector<BenchResult>& results);

}  // namespace indrnn
