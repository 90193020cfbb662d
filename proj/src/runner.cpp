#include "indrnn/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "indrnn/bench.hpp"
#include "indrnn/checkpoint.hpp"
#include "indrnn/diagnostics.hpp"
#include "indrnn/svg.hpp"
#include "indrnn/tasks.hpp"
#include "indrnn/text.hpp"
#include "indrnn/training.hpp"

namespace indrnn {

const char* build_id() {
#ifdef INDRNN_BUILD_ID
  return INDRNN_BUILD_ID;
#else
  return "unknown";
#endif
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("run: cannot write \"" + path + "\"");
  out << text;
}

void write_manifest(const RunConfig& cfg) {
  std::string text = "# run manifest: everything needed to reproduce this run\n";
  text += "build = " + std::string(build_id()) + "\n";
  text += canonical_config(cfg);
  write_text(cfg.out_dir + "/manifest.txt", text);
}

// metrics.csv sink; append mode (resume) skips the header.
struct Metrics {
  std::ofstream out;

  Metrics(const std::string& path, const std::string& header, bool append) {
    out.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw ConfigError("run: cannot write \"" + path + "\"");
    if (!append) out << header << '\n';
  }
  void row(const std::string& line) {
    out << line << '\n';
    out.flush();
  }
};

NetworkSpec base_spec(const RunConfig& cfg) {
  NetworkSpec s;
  s.kind = parse_net_kind(cfg.arch);
  s.cell = parse_cell_kind(cfg.cell);
  s.activation = parse_activation(cfg.activation);
  s.composite = parse_composite(cfg.composite);
  s.layers = cfg.layers;
  s.hidden = cfg.hidden;
  s.growth = cfg.growth;
  s.block_config = cfg.blocks;
  s.use_bn = cfg.batch_norm;
  s.bn_policy = parse_bn_policy(cfg.bn_policy);
  s.dropout.input = cfg.dropout_input;
  s.dropout.layer = cfg.dropout_layer;
  s.dropout.bottleneck = cfg.dropout_bottleneck;
  s.dropout.dense = cfg.dropout_dense;
  s.dropout.transition = cfg.dropout_transition;
  s.gamma = cfg.gamma;
  s.epsilon = cfg.epsilon;
  return s;
}

int abort_nonfinite(const RunConfig& cfg, const Checkpoint& last_good,
                    const std::string& what) {
  const std::string path = cfg.out_dir + "/last_good.ckpt";
  save_checkpoint(path, last_good);
  std::cerr << "error: " << what << "; last good state saved to " << path << "\n";
  return 2;
}

void emit_gain_histograms(const RunConfig& cfg, const Network& net) {
  if (!cfg.plots) return;
  const auto gains = net.recurrent_gains();
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const Histogram h = histogram(*gains[i].second, 25, -1.25, 1.25);
    emit_svg_histogram(cfg.out_dir + "/gains_" + std::to_string(i) + ".svg", h,
                       "recurrent gains: " + gains[i].first);
  }
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

// Shared resume plumbing: restores state when `resume` is set and hands back
// the loop position to continue from.
std::uint64_t maybe_resume(const std::string& resume, const std::string& config_text,
                           Network& net, TrainState& state, Rng& rng) {
  if (resume.empty()) return 0;
  const Checkpoint ck = load_checkpoint(resume);
  if (ck.config_text != config_text) {
    throw ConfigError("resume: checkpoint was written by a different config");
  }
  restore_checkpoint(ck, net, state, rng);
  return ck.loop_pos;
}

// ---------------------------------------------------------------------------
// adding

int run_adding(const RunConfig& cfg, const std::string& resume) {
  NetworkSpec spec = base_spec(cfg);
  spec.input_dim = 2;
  spec.output_dim = 1;
  spec.output_mode = OutputMode::LastStep;
  spec.horizon = cfg.t_len;

  const std::string config_text = canonical_config(cfg);
  Rng rng(cfg.seed);
  Network net = build_network(spec, rng);
  TrainState state = init_train_state(net, cfg.lr);
  std::uint64_t pos = maybe_resume(resume, config_text, net, state, rng);

  // Fixed held-out batches, independent of the training stream.
  Rng eval_rng(cfg.seed ^ 0x5eed5eedULL);
  std::vector<AddingBatch> eval_set;
  for (int i = 0; i < 8; ++i) {
    eval_set.push_back(gen_adding_batch(eval_rng, cfg.t_len, cfg.batch));
  }

  Metrics metrics(cfg.out_dir + "/metrics.csv", "step,train_mse,eval_mse,lr",
                  !resume.empty());
  Checkpoint last_good = make_checkpoint(config_text, net, state, rng, pos);

  NetCaches caches;
  Vec grads = Vec::Zero(net.n_params());
  double train_accum = 0.0;
  Index accum_n = 0;
  std::vector<double> curve_x, curve_train, curve_eval;
  double final_eval = std::numeric_limits<double>::quiet_NaN();
  double best_eval = std::numeric_limits<double>::quiet_NaN();

  try {
    for (std::uint64_t s = pos; s < static_cast<std::uint64_t>(cfg.steps); ++s) {
      const AddingBatch batch = gen_adding_batch(rng, cfg.t_len, cfg.batch);
      net.forward(caches, batch.x, /*train=*/true, &rng);
      const Vec pred = net.output(caches).flat().col(0);
      const LossValue loss = mse_loss(pred, batch.y);
      if (!std::isfinite(loss.loss)) {
        throw NumericError("adding: loss is not finite at step " + std::to_string(s + 1));
      }
      SequenceBatch dY(1, cfg.batch, 1);
      dY.flat().col(0) = loss.grad;
      net.backward(caches, dY, grads);
      if (cfg.weight_decay > 0.0) apply_weight_decay(net, grads, cfg.weight_decay);
      adam_step(state, net, grads);
      net.clamp_recurrent(cfg.gamma, cfg.t_len);
      train_accum += loss.loss;
      ++accum_n;

      if ((s + 1) % static_cast<std::uint64_t>(cfg.eval_every) == 0) {
        double eval_mse = 0.0;
        for (const auto& eb : eval_set) {
          net.forward(caches, eb.x, /*train=*/false);
          eval_mse += mse_loss(net.output(caches).flat().col(0), eb.y).loss;
        }
        eval_mse /= static_cast<double>(eval_set.size());
        const double train_mse = train_accum / static_cast<double>(accum_n);
        train_accum = 0.0;
        accum_n = 0;

        metrics.row(std::to_string(s + 1) + ',' + format_double(train_mse) + ',' +
                    format_double(eval_mse) + ',' + format_double(state.lr));
        curve_x.push_back(static_cast<double>(s + 1));
        curve_train.push_back(train_mse);
        curve_eval.push_back(eval_mse);
        final_eval = eval_mse;
        best_eval = std::isnan(best_eval) ? eval_mse : std::min(best_eval, eval_mse);

        if (cfg.schedule == "plateau") {
          plateau_update(state, eval_mse);
        } else if (cfg.schedule == "step" &&
                   (s + 1) % static_cast<std::uint64_t>(cfg.step_every) == 0) {
          state.lr *= cfg.step_factor;
        }

        last_good = make_checkpoint(config_text, net, state, rng, s + 1);
        if (cfg.checkpoints) save_checkpoint(cfg.out_dir + "/ckpt.bin", last_good);
      }
    }
  } catch (const NumericError& e) {
    return abort_nonfinite(cfg, last_good, e.what());
  }

  std::ostringstream report;
  report << "task = adding\nT = " << cfg.t_len << "\nsteps = " << cfg.steps
         << "\nfinal eval_mse = " << format_double(final_eval)
         << "\nbest eval_mse = " << format_double(best_eval)
         << "\nfinal lr = " << format_double(state.lr) << "\n";
  write_text(cfg.out_dir + "/report.txt", report.str());
  if (cfg.plots && !curve_x.empty()) {
    ChartOptions opt;
    opt.title = "adding problem, T = " + std::to_string(cfg.t_len);
    opt.x_label = "training batches";
    opt.y_label = "mse";
    opt.log_y = true;
    emit_svg_line_chart(cfg.out_dir + "/curve.svg",
                        {{"train_mse", curve_x, curve_train},
                         {"eval_mse", curve_x, curve_eval}},
                        opt);
  }
  emit_gain_histograms(cfg, net);
  std::cout << "adding: final eval mse " << format_double(final_eval) << " after "
            << cfg.steps << " batches\n";
  return 0;
}

// ---------------------------------------------------------------------------
// pixels

struct EvalStats {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double acc = std::numeric_limits<double>::quiet_NaN();
};

EvalStats eval_pixels(Network& net, NetCaches& caches, const PixelDataset& ds,
                      const std::vector<Index>& rows, Index batch) {
  if (rows.empty()) return {};
  double loss_sum = 0.0;
  Index correct = 0;
  SequenceBatch x;
  std::vector<int> labels;
  for (std::size_t start = 0; start < rows.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t stop = std::min(rows.size(), start + static_cast<std::size_t>(batch));
    const std::vector<Index> chunk(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                   rows.begin() + static_cast<std::ptrdiff_t>(stop));
    pixel_batch(ds, chunk, x, labels);
    net.forward(caches, x, /*train=*/false);
    const Mat& logits = net.output(caches).flat();
    const CeLossValue ce = cross_entropy_loss(logits, labels);
    loss_sum += ce.loss * static_cast<double>(chunk.size());
    correct += count_correct(logits, labels);
  }
  const auto n = static_cast<double>(rows.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

int run_pixels(const RunConfig& cfg, const std::string& resume) {
  if (cfg.images.empty() || cfg.labels.empty()) {
    throw ConfigError("pixels: images and labels paths are required");
  }
  PixelDataset train_ds = load_idx(cfg.images, cfg.labels);
  PixelDataset test_ds;
  const bool have_test = !cfg.test_images.empty();
  if (have_test) {
    if (cfg.test_labels.empty()) throw ConfigError("pixels: test_labels path is required");
    test_ds = load_idx(cfg.test_images, cfg.test_labels);
  }
  const Index n_pixels = train_ds.height * train_ds.width;
  if (cfg.permute) {
    Rng perm_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    train_ds.permutation = make_permutation(perm_rng, n_pixels);
    if (have_test) test_ds.permutation = train_ds.permutation;
  }

  NetworkSpec spec = base_spec(cfg);
  spec.input_dim = 1;
  spec.output_dim = 10;
  spec.output_mode = OutputMode::LastStep;
  spec.horizon = n_pixels;

  const std::string config_text = canonical_config(cfg);
  Rng rng(cfg.seed);
  Network net = build_network(spec, rng);
  TrainState state = init_train_state(net, cfg.lr);
  std::uint64_t pos = maybe_resume(resume, config_text, net, state, rng);

  // Deterministic validation carve-out: the tail of the training file.
  const auto n_val = static_cast<Index>(static_cast<double>(train_ds.count) *
                                        cfg.val_fraction);
  const Index n_train = train_ds.count - n_val;
  if (n_train < cfg.batch) throw ConfigError("pixels: not enough training images");
  std::vector<Index> val_rows(static_cast<std::size_t>(n_val));
  for (Index i = 0; i < n_val; ++i) val_rows[static_cast<std::size_t>(i)] = n_train + i;
  std::vector<Index> test_rows(static_cast<std::size_t>(test_ds.count));
  for (Index i = 0; i < test_ds.count; ++i) test_rows[static_cast<std::size_t>(i)] = i;

  Metrics metrics(cfg.out_dir + "/metrics.csv",
                  "epoch,train_loss,train_acc,val_acc,test_acc,lr", !resume.empty());
  Checkpoint last_good = make_checkpoint(config_text, net, state, rng, pos);

  NetCaches caches;
  Vec grads = Vec::Zero(net.n_params());
  std::vector<Index> order(static_cast<std::size_t>(n_train));
  SequenceBatch x;
  std::vector<int> labels;
  std::vector<double> curve_x, curve_train, curve_val, curve_test;
  EvalStats val{}, test{};
  const Index steps_per_epoch = n_train / cfg.batch;

  try {
    for (std::uint64_t epoch = pos; epoch < static_cast<std::uint64_t>(cfg.epochs);
         ++epoch) {
      for (Index i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
      for (Index i = n_train - 1; i > 0; --i) {
        std::swap(order[static_cast<std::size_t>(i)],
                  order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
      }

      double loss_sum = 0.0;
      Index correct = 0;
      for (Index step = 0; step < steps_per_epoch; ++step) {
        const std::vector<Index> chunk(
            order.begin() + static_cast<std::ptrdiff_t>(step * cfg.batch),
            order.begin() + static_cast<std::ptrdiff_t>((step + 1) * cfg.batch));
        pixel_batch(train_ds, chunk, x, labels);
        net.forward(caches, x, /*train=*/true, &rng);
        const Mat& logits = net.output(caches).flat();
        const CeLossValue ce = cross_entropy_loss(logits, labels);
        if (!std::isfinite(ce.loss)) {
          throw NumericError("pixels: loss is not finite in epoch " +
                             std::to_string(epoch + 1));
        }
        SequenceBatch dY(1, cfg.batch, 10);
        dY.flat() = ce.grad;
        net.backward(caches, dY, grads);
        if (cfg.weight_decay > 0.0) apply_weight_decay(net, grads, cfg.weight_decay);
        adam_step(state, net, grads);
        net.clamp_recurrent(cfg.gamma, n_pixels);
        loss_sum += ce.loss;
        correct += count_correct(logits, labels);
      }

      const double train_loss = loss_sum / static_cast<double>(steps_per_epoch);
      const double train_acc = static_cast<double>(correct) /
                               static_cast<double>(steps_per_epoch * cfg.batch);
      val = eval_pixels(net, caches, train_ds, val_rows, cfg.batch);
      if (have_test) test = eval_pixels(net, caches, test_ds, test_rows, cfg.batch);

      metrics.row(std::to_string(epoch + 1) + ',' + format_double(train_loss) + ',' +
                  format_double(train_acc) + ',' + format_double(val.acc) + ',' +
                  format_double(test.acc) + ',' + format_double(state.lr));
      curve_x.push_back(static_cast<double>(epoch + 1));
      curve_train.push_back(train_acc);
      curve_val.push_back(val.acc);
      curve_test.push_back(test.acc);

      if (cfg.schedule == "plateau") {
        plateau_update(state, val.acc, /*lower_is_better=*/false);
      } else if (cfg.schedule == "step" &&
                 (epoch + 1) % static_cast<std::uint64_t>(cfg.step_every) == 0) {
        state.lr *= cfg.step_factor;
      }

      last_good = make_checkpoint(config_text, net, state, rng, epoch + 1);
      if (cfg.checkpoints) save_checkpoint(cfg.out_dir + "/ckpt.bin", last_good);
    }
  } catch (const NumericError& e) {
    return abort_nonfinite(cfg, last_good, e.what());
  }

  std::ostringstream report;
  report << "task = pixels\nsequence length = " << n_pixels
         << "\nepochs = " << cfg.epochs << "\nval_acc = " << format_double(val.acc)
         << "\ntest_acc = " << format_double(test.acc) << "\n";
  write_text(cfg.out_dir + "/report.txt", report.str());
  if (cfg.plots && !curve_x.empty()) {
    ChartOptions opt;
    opt.title = "pixel classification";
    opt.x_label = "epoch";
    opt.y_label = "accuracy";
    std::vector<Series> series = {{"train_acc", curve_x, curve_train},
                                  {"val_acc", curve_x, curve_val}};
    if (have_test) series.push_back({"test_acc", curve_x, curve_test});
    emit_svg_line_chart(cfg.out_dir + "/curve.svg", series, opt);
  }
  emit_gain_histograms(cfg, net);
  std::cout << "pixels: val acc " << format_double(val.acc) << ", test acc "
            << format_double(test.acc) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// charlm

double eval_charlm(Network& net, NetCaches& caches, const LmBatcher& batcher) {
  IdMat in, tgt;
  std::vector<Mat> carry;
  bool have_carry = false;
  double bpc_sum = 0.0;
  for (Index k = 0; k < batcher.batches_per_epoch(); ++k) {
    batcher.fill(k, in, tgt);
    net.forward_ids(caches, in, /*train=*/false, nullptr,
                    have_carry ? &carry : nullptr);
    const Mat& logits = net.output(caches).flat();
    std::vector<int> labels(tgt.data(), tgt.data() + tgt.size());
    bpc_sum += cross_entropy_loss(logits, labels).bpc;
    carry = net.extract_carry(caches);
    have_carry = true;
  }
  return bpc_sum / static_cast<double>(batcher.batches_per_epoch());
}

int run_charlm(const RunConfig& cfg, const std::string& resume) {
  if (cfg.corpus.empty()) throw ConfigError("charlm: corpus path is required");
  const CharCorpus corpus =
      load_corpus(cfg.corpus, 1.0 - 2.0 * cfg.val_fraction, cfg.val_fraction);

  NetworkSpec spec = base_spec(cfg);
  spec.input_dim = corpus.vocab;
  spec.output_dim = corpus.vocab;
  spec.output_mode = OutputMode::EveryStep;
  spec.horizon = cfg.t_len;
  spec.embed_dim = cfg.hidden;  // id input; dense nets size the table themselves

  const std::string config_text = canonical_config(cfg);
  Rng rng(cfg.seed);
  Network net = build_network(spec, rng);
  TrainState state = init_train_state(net, cfg.lr);
  std::uint64_t pos = maybe_resume(resume, config_text, net, state, rng);

  const LmBatcher train_b(corpus, Split::Train, cfg.t_len, cfg.batch);
  const LmBatcher valid_b(corpus, Split::Valid, cfg.t_len, cfg.batch);

  Metrics metrics(cfg.out_dir + "/metrics.csv",
                  "epoch,train_bpc,valid_bpc,lr,best_valid_bpc", !resume.empty());
  Checkpoint last_good = make_checkpoint(config_text, net, state, rng, pos);

  NetCaches caches;
  Vec grads = Vec::Zero(net.n_params());
  IdMat in, tgt;
  std::vector<double> curve_x, curve_train, curve_valid;
  double valid_bpc = std::numeric_limits<double>::quiet_NaN();

  try {
    for (std::uint64_t epoch = pos; epoch < static_cast<std::uint64_t>(cfg.epochs);
         ++epoch) {
      std::vector<Mat> carry;
      bool have_carry = false;  // fresh state at every epoch start
      double bpc_sum = 0.0;
      for (Index k = 0; k < train_b.batches_per_epoch(); ++k) {
        train_b.fill(k, in, tgt);
        net.forward_ids(caches, in, /*train=*/true, &rng,
                        have_carry ? &carry : nullptr);
        const Mat& logits = net.output(caches).flat();
        std::vector<int> labels(tgt.data(), tgt.data() + tgt.size());
        const CeLossValue ce = cross_entropy_loss(logits, labels);
        if (!std::isfinite(ce.loss)) {
          throw NumericError("charlm: loss is not finite in epoch " +
                             std::to_string(epoch + 1));
        }
        carry = net.extract_carry(caches);  // state flows on, gradient does not
        have_carry = true;
        SequenceBatch dY(cfg.t_len, cfg.batch, corpus.vocab);
        dY.flat() = ce.grad;
        net.backward(caches, dY, grads);
        if (cfg.weight_decay > 0.0) apply_weight_decay(net, grads, cfg.weight_decay);
        adam_step(state, net, grads);
        net.clamp_recurrent(cfg.gamma, cfg.t_len);
        bpc_sum += ce.bpc;
      }

      const double train_bpc = bpc_sum / static_cast<double>(train_b.batches_per_epoch());
      valid_bpc = eval_charlm(net, caches, valid_b);

      if (cfg.schedule == "plateau") {
        plateau_update(state, valid_bpc);
      } else {
        // best_metric still tracks the best value so resume stays exact
        if (std::isnan(state.best_metric) || valid_bpc < state.best_metric) {
          state.best_metric = valid_bpc;
        }
        if (cfg.schedule == "step" &&
            (epoch + 1) % static_cast<std::uint64_t>(cfg.step_every) == 0) {
          state.lr *= cfg.step_factor;
        }
      }
      const double best_bpc = state.best_metric;

      metrics.row(std::to_string(epoch + 1) + ',' + format_double(train_bpc) + ',' +
                  format_double(valid_bpc) + ',' + format_double(state.lr) + ',' +
                  format_double(best_bpc));
      curve_x.push_back(static_cast<double>(epoch + 1));
      curve_train.push_back(train_bpc);
      curve_valid.push_back(valid_bpc);

      last_good = make_checkpoint(config_text, net, state, rng, epoch + 1);
      if (cfg.checkpoints) save_checkpoint(cfg.out_dir + "/ckpt.bin", last_good);
    }
  } catch (const NumericError& e) {
    return abort_nonfinite(cfg, last_good, e.what());
  }

  std::ostringstream report;
  report << "task = charlm\nvocab = " << corpus.vocab << "\nT = " << cfg.t_len
         << "\nepochs = " << cfg.epochs
         << "\nfinal valid_bpc = " << format_double(valid_bpc)
         << "\norder0 entropy (valid, bits) = "
         << format_double(order0_entropy_bits(corpus, Split::Valid)) << "\n";
  write_text(cfg.out_dir + "/report.txt", report.str());
  if (cfg.plots && !curve_x.empty()) {
    ChartOptions opt;
    opt.title = "byte-level language model";
    opt.x_label = "epoch";
    opt.y_label = "bits per character";
    emit_svg_line_chart(cfg.out_dir + "/curve.svg",
                        {{"train_bpc", curve_x, curve_train},
                         {"valid_bpc", curve_x, curve_valid}},
                        opt);
  }
  emit_gain_histograms(cfg, net);
  std::cout << "charlm: final valid bpc " << format_double(valid_bpc) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck / gradflow / bench / equiv

int run_gradcheck(const RunConfig& cfg) {
  NetworkSpec spec = base_spec(cfg);
  spec.input_dim = 3;
  spec.output_dim = 2;
  spec.output_mode = OutputMode::LastStep;
  spec.horizon = std::min<Index>(cfg.t_len, 6);

  Rng rng(cfg.seed);
  Network net = build_network(spec, rng);
  SequenceBatch x(spec.horizon, 3, spec.input_dim);
  for (Index i = 0; i < x.flat().rows(); ++i) {
    for (Index j = 0; j < x.flat().cols(); ++j) x.flat()(i, j) = rng.normal(0.0, 1.0);
  }

  FdProblem problem;
  problem.net = &net;
  problem.x = &x;
  problem.loss = [](const SequenceBatch& y, SequenceBatch* dY) {
    const double n = static_cast<double>(y.flat().size());
    if (dY) {
      *dY = y;
      dY->flat() *= 2.0 / n;
    }
    return y.flat().squaredNorm() / n;
  };

  const Index sample = std::min<Index>(net.n_params(), 400);
  Rng pick(cfg.seed + 1);
  const FdReport report = finite_difference_check(problem, 1e-5, sample, &pick);

  std::ostringstream text;
  text << "gradcheck: max rel err = " << format_double(report.max_rel_err) << " over "
       << report.evaluated << " coordinates (" << report.excluded
       << " excluded at relu kinks); worst = " << report.worst_name << "\n";
  std::cout << text.str();
  write_text(cfg.out_dir + "/report.txt", text.str());
  return report.max_rel_err < 1e-5 ? 0 : 1;
}

int run_gradflow(const RunConfig& cfg) {
  NetworkSpec spec = base_spec(cfg);
  spec.input_dim = 1;
  spec.output_dim = 10;
  spec.output_mode = OutputMode::LastStep;
  spec.horizon = cfg.t_len;

  Rng rng(cfg.seed);
  Network net = build_network(spec, rng);
  std::vector<SequenceBatch> batches;
  for (int i = 0; i < 4; ++i) {
    SequenceBatch x(cfg.t_len, cfg.batch, 1);
    for (Index r = 0; r < x.flat().rows(); ++r) x.flat()(r, 0) = rng.uniform(0.0, 1.0);
    batches.push_back(std::move(x));
  }

  const GradientTrace trace = record_gradient_flow(net, batches, [](const SequenceBatch& y) {
    SequenceBatch dY = y;
    dY.flat() *= 2.0 / static_cast<double>(y.flat().size());
    return dY;
  });

  std::string time_csv = "t,grad_norm\n";
  std::vector<double> ts, norms;
  for (Index t = 0; t < trace.over_time.size(); ++t) {
    time_csv += std::to_string(t) + ',' + format_double(trace.over_time[t]) + '\n';
    ts.push_back(static_cast<double>(t));
    norms.push_back(trace.over_time[t]);
  }
  write_text(cfg.out_dir + "/gradflow_time.csv", time_csv);

  std::string depth_csv = "level,mean_abs_grad\n";
  for (Index l = 0; l < trace.over_depth.size(); ++l) {
    depth_csv += std::to_string(l) + ',' + format_double(trace.over_depth[l]) + '\n';
  }
  write_text(cfg.out_dir + "/gradflow_depth.csv", depth_csv);

  if (cfg.plots) {
    ChartOptions opt;
    opt.title = "gradient norm reaching each input step";
    opt.x_label = "t";
    opt.y_label = "||dLoss/dx_t||";
    opt.log_y = true;
    emit_svg_line_chart(cfg.out_dir + "/gradflow.svg", {{"over_time", ts, norms}}, opt);
  }
  std::cout << "gradflow: over_time[0] = " << format_double(trace.over_time[0])
            << ", over_time[T-1] = "
            << format_double(trace.over_time[trace.over_time.size() - 1]) << "\n";
  return 0;
}

int run_bench(const RunConfig& cfg) {
  std::vector<BenchResult> all;
  for (const BenchKind kind : {BenchKind::IndRnnFused, BenchKind::VanillaMatmul}) {
    for (const Index width : cfg.bench_widths) {
      BenchSpec spec;
      spec.kind = kind;
      spec.width = width;
      spec.steps = cfg.t_len;
      spec.batch = cfg.batch;
      spec.reps = static_cast<int>(cfg.bench_reps);
      spec.seed = cfg.seed;
      all.push_back(time_recurrence(spec));
      std::cout << "bench: " << bench_kind_name(kind) << " N=" << width << " median "
                << format_double(all.back().median_ms) << " ms\n";
    }
  }
  write_text(cfg.out_dir + "/bench.csv", bench_csv(all));

  std::ostringstream report;
  std::vector<Series> series;
  for (const BenchKind kind : {BenchKind::IndRnnFused, BenchKind::VanillaMatmul}) {
    std::vector<BenchResult> mine;
    Series s{bench_kind_name(kind), {}, {}};
    for (const auto& r : all) {
      if (r.kind != kind) continue;
      mine.push_back(r);
      s.x.push_back(static_cast<double>(r.width));
      s.y.push_back(r.median_ms);
    }
    series.push_back(std::move(s));
    if (mine.size() >= 4) {
      const ScalingFit fit = scaling_fit(mine);
      report << bench_kind_name(kind) << " scaling exponent = "
             << format_double(fit.slope) << "\n";
    }
  }
  write_text(cfg.out_dir + "/report.txt", report.str());
  if (cfg.plots) {
    ChartOptions opt;
    opt.title = "per-batch recurrence time";
    opt.x_label = "state width N";
    opt.y_label = "median ms";
    opt.log_y = true;
    emit_svg_line_chart(cfg.out_dir + "/scaling.svg", series, opt);
  }
  std::cout << report.str();
  return 0;
}

int run_equiv(const RunConfig& cfg) {
  Rng rng(cfg.seed);
  double worst = 0.0;
  for (Index trial = 0; trial < cfg.equiv_trials; ++trial) {
    const Index n = (trial % 2 == 0) ? 3 : 5;

    // Well-separated real eigenvalues and a well-conditioned eigenbasis give
    // a system that must convert cleanly.
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

  bool rejected_defective = false;
  try {
    LinearRnn nil;
    nil.U = Mat::Zero(2, 2);
    nil.U(0, 1) = 1.0;  // one Jordan block; no eigenbasis exists
    nil.W = Mat::Ones(2, 2);
    rnn_to_indrnn(nil);
  } catch (const NotRepresentableError&) {
    rejected_defective = true;
  }

  std::ostringstream report;
  report << "equiv: max deviation over " << cfg.equiv_trials << " systems = "
         << format_double(worst) << "\nequiv: defective matrix rejected = "
         << (rejected_defective ? "yes" : "no") << "\n";
  std::cout << report.str();
  write_text(cfg.out_dir + "/report.txt", report.str());
  return (worst < 1e-8 && rejected_defective) ? 0 : 1;
}

}  // namespace

int run_task(const RunConfig& cfg, const std::string& resume) {
  validate_config(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  write_manifest(cfg);

  if (cfg.task == "adding") return run_adding(cfg, resume);
  if (cfg.task == "pixels") return run_pixels(cfg, resume);
  if (cfg.task == "charlm") return run_charlm(cfg, resume);
  if (cfg.task == "gradcheck") return run_gradcheck(cfg);
  if (cfg.task == "gradflow") return run_gradflow(cfg);
  if (cfg.task == "bench") return run_bench(cfg);
  if (cfg.task == "equiv") return run_equiv(cfg);
  throw ConfigError("task: unknown value \"" + cfg.task + "\"");
}

}  // namespace indrnn
