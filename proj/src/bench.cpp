#include "indrnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "indrnn/rng.hpp"
#include "indrnn/text.hpp"

namespace indrnn {

const char* bench_kind_name(BenchKind kind) {
  return kind == BenchKind::IndRnnFused ? "IndRnnFused" : "VanillaMatmul";
}

BenchWorkspace make_bench_workspace(const BenchSpec& spec) {
  if (spec.width < 1 || spec.steps < 1 || spec.batch < 1) {
    throw ConfigError("bench: width, steps and batch must be positive");
  }
  Rng rng(spec.seed);
  BenchWorkspace ws;
  ws.kind = spec.kind;
  if (spec.kind == BenchKind::IndRnnFused) {
    ws.u = Vec(spec.width);
    for (Index i = 0; i < spec.width; ++i) ws.u[i] = rng.uniform(0.0, 1.0);
  } else {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.width));
    ws.U = Mat(spec.width, spec.width);
    for (Index r = 0; r < spec.width; ++r) {
      for (Index c = 0; c < spec.width; ++c) ws.U(r, c) = rng.uniform(-bound, bound);
    }
  }
  ws.s.resize(spec.steps, spec.batch, spec.width);
  for (Index t = 0; t < spec.steps; ++t) {
    for (Index r = 0; r < spec.batch; ++r) {
      for (Index j = 0; j < spec.width; ++j) ws.s.at(t, r, j) = rng.uniform(-1.0, 1.0);
    }
  }
  ws.out.resize(spec.steps, spec.batch, spec.width);
  ws.out.set_zero();
  return ws;
}

namespace {

// Both kernels are plain pointer loops on purpose: nothing here may allocate,
// and the work per step must be exactly the state update and nothing else.

void fused_steps(const Vec& u, const SequenceBatch& s, SequenceBatch& out) {
  const Index b = s.batch();
  const Index n = s.features();
  const Index slab = b * n;
  const double* up = u.data();
  const double* sp = s.flat().data();
  double* op = out.flat().data();
  for (Index i = 0; i < slab; ++i) {
    op[i] = sp[i] > 0.0 ? sp[i] : 0.0;  // first step starts from a zero state
  }
  for (Index t = 1; t < s.steps(); ++t) {
    const double* st = sp + t * slab;
    const double* prev = op + (t - 1) * slab;
    double* ot = op + t * slab;
    for (Index r = 0; r < b; ++r) {
      const Index row = r * n;
      for (Index j = 0; j < n; ++j) {
        const double pre = st[row + j] + up[j] * prev[row + j];
        ot[row + j] = pre > 0.0 ? pre : 0.0;
      }
    }
  }
}

void dense_steps(const Mat& U, const SequenceBatch& s, SequenceBatch& out) {
  const Index b = s.batch();
  const Index n = s.features();
  const Index slab = b * n;
  const double* Up = U.data();
  const double* sp = s.flat().data();
  double* op = out.flat().data();
  for (Index i = 0; i < slab; ++i) op[i] = std::tanh(sp[i]);
  for (Index t = 1; t < s.steps(); ++t) {
    const double* st = sp + t * slab;
    const double* prev = op + (t - 1) * slab;
    double* ot = op + t * slab;
    for (Index r = 0; r < b; ++r) {
      const double* hr = prev + r * n;
      for (Index j = 0; j < n; ++j) {
        const double* uj = Up + j * n;
        double acc = st[r * n + j];
        for (Index k = 0; k < n; ++k) acc += uj[k] * hr[k];
        ot[r * n + j] = std::tanh(acc);
      }
    }
  }
}

double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

void run_recurrence_once(BenchWorkspace& ws) {
  if (ws.kind == BenchKind::IndRnnFused) {
    fused_steps(ws.u, ws.s, ws.out);
  } else {
    dense_steps(ws.U, ws.s, ws.out);
  }
}

BenchResult time_recurrence(const BenchSpec& spec) {
  if (spec.reps < 1) throw ConfigError("bench: reps must be positive");
  BenchWorkspace ws = make_bench_workspace(spec);
  for (int i = 0; i < spec.warmup; ++i) run_recurrence_once(ws);

  std::vector<double> ms(static_cast<std::size_t>(spec.reps));
  for (int i = 0; i < spec.reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_recurrence_once(ws);
    const auto t1 = std::chrono::steady_clock::now();
    ms[static_cast<std::size_t>(i)] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());

  BenchResult res;
  res.kind = spec.kind;
  res.width = spec.width;
  res.steps = spec.steps;
  res.batch = spec.batch;
  res.reps = spec.reps;
  res.median_ms = quantile(ms, 0.5);
  res.iqr_ms = quantile(ms, 0.75) - quantile(ms, 0.25);
  return res;
}

ScalingFit scaling_fit(const std::vector<BenchResult>& results) {
  std::set<Index> widths;
  for (const auto& r : results) widths.insert(r.width);
  if (widths.size() < 4) {
    throw ConfigError("scaling_fit: need measurements at four or more distinct widths");
  }
  if (*widths.rbegin() < 8 * *widths.begin()) {
    throw ConfigError("scaling_fit: widths must span at least a factor of eight");
  }

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& r : results) {
    if (!(r.median_ms > 0.0)) {
      throw ConfigError("scaling_fit: non-positive median time at width " +
                        std::to_string(r.width));
    }
    const double x = std::log(static_cast<double>(r.width));
    const double y = std::log(r.median_ms);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const auto n = static_cast<double>(results.size());
  const double denom = n * sxx - sx * sx;
  ScalingFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

std::string bench_csv(const std::vector<BenchResult>& results) {
  std::ostringstream out;
  out << "kind,N,T,B,reps,median_ms,iqr_ms\n";
  for (const auto& r : results) {
    out << bench_kind_name(r.kind) << ',' << r.width << ',' << r.steps << ',' << r.batch
        << ',' << r.reps << ',' << format_double(r.median_ms) << ','
        << format_double(r.iqr_ms) << '\n';
  }
  return out.str();
}

}  // namespace indrnn
