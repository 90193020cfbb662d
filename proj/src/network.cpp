#include "indrnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace indrnn {

// ---------------------------------------------------------------------------
// Batch norm primitives.

BatchNorm make_batchnorm(Index features, BnPolicy policy) {
  BatchNorm bn;
  bn.scale = Vec::Ones(features);
  bn.shift = Vec::Zero(features);
  bn.policy = policy;
  // Running estimates appear lazily: PerStep needs the sequence length of the
  // first training batch before it can size them.
  return bn;
}

namespace {

void ensure_running_stats(BatchNorm& bn, Index groups) {
  const Index f = bn.scale.size();
  if (bn.running_mean.rows() == 0) {
    bn.running_mean = Mat::Zero(groups, f);
    bn.running_var = Mat::Ones(groups, f);
  } else if (bn.running_mean.rows() != groups) {
    throw ShapeError("batchnorm: sequence length changed after statistics were sized (" +
                     std::to_string(bn.running_mean.rows()) + " groups, got " +
                     std::to_string(groups) + ")");
  }
}

}  // namespace

SequenceBatch batchnorm_apply(BatchNorm& bn, const SequenceBatch& x, bool train,
                              BnCache* cache) {
  const Index f = x.features();
  require_shape(f == bn.scale.size(), "batchnorm: feature width mismatch");
  const Index groups = bn.policy == BnPolicy::PerStep ? x.steps() : 1;
  const Index rows_per_group = x.flat().rows() / groups;
  require_shape(rows_per_group >= 1, "batchnorm: empty batch");

  SequenceBatch y(x.steps(), x.batch(), f);
  if (cache) {
    cache->xhat.resize(x.flat().rows(), f);
    cache->inv_std.resize(groups, f);
    cache->groups = groups;
    cache->rows_per_group = rows_per_group;
  }

  const Eigen::RowVectorXd scale_row = bn.scale.transpose();
  const Eigen::RowVectorXd shift_row = bn.shift.transpose();

  if (train) {
    ensure_running_stats(bn, groups);
    for (Index g = 0; g < groups; ++g) {
      auto xg = x.flat().middleRows(g * rows_per_group, rows_per_group);
      auto yg = y.flat().middleRows(g * rows_per_group, rows_per_group);
      const Eigen::RowVectorXd mean = xg.colwise().mean();
      // Population (biased) variance, the same quantity used to normalize.
      Eigen::RowVectorXd var =
          (xg.rowwise() - mean).array().square().colwise().mean().cwiseMax(0.0);
      const Eigen::RowVectorXd inv_std = (var.array() + bn.eps).rsqrt();
      yg = xg.rowwise() - mean;
      yg.array().rowwise() *= inv_std.array();
      if (cache) {
        cache->xhat.middleRows(g * rows_per_group, rows_per_group) = yg;
        cache->inv_std.row(g) = inv_std;
      }
      yg.array().rowwise() *= scale_row.array();
      yg.rowwise() += shift_row;
      bn.running_mean.row(g) = bn.momentum * bn.running_mean.row(g) + (1.0 - bn.momentum) * mean;
      bn.running_var.row(g) = bn.momentum * bn.running_var.row(g) + (1.0 - bn.momentum) * var;
    }
    if (cache) cache->batch_stats = true;
  } else {
    const bool warmed = bn.running_mean.rows() != 0;
    if (warmed && bn.policy == BnPolicy::PerStep && bn.running_mean.rows() != groups)
      throw ShapeError("batchnorm: eval sequence length differs from trained length");
    for (Index g = 0; g < groups; ++g) {
      auto xg = x.flat().middleRows(g * rows_per_group, rows_per_group);
      auto yg = y.flat().middleRows(g * rows_per_group, rows_per_group);
      const Eigen::RowVectorXd mean =
          warmed ? Eigen::RowVectorXd(bn.running_mean.row(g)) : Eigen::RowVectorXd::Zero(f);
      const Eigen::RowVectorXd var =
          warmed ? Eigen::RowVectorXd(bn.running_var.row(g)) : Eigen::RowVectorXd::Ones(f);
      const Eigen::RowVectorXd inv_std = (var.array() + bn.eps).rsqrt();
      yg = xg.rowwise() - mean;
      yg.array().rowwise() *= inv_std.array();
      if (cache) {
        cache->xhat.middleRows(g * rows_per_group, rows_per_group) = yg;
        cache->inv_std.row(g) = inv_std;
      }
      yg.array().rowwise() *= scale_row.array();
      yg.rowwise() += shift_row;
    }
    if (cache) cache->batch_stats = false;
  }
  return y;
}

void batchnorm_backward(const BatchNorm& bn, const BnCache& cache,
                        const SequenceBatch& dy, SequenceBatch& dx,
                        Eigen::Ref<Vec> dscale, Eigen::Ref<Vec> dshift) {
  const Index f = bn.scale.size();
  require_shape(dy.features() == f, "batchnorm_backward: width mismatch");
  require_shape(dx.same_shape(dy), "batchnorm_backward: dx must be pre-sized");
  const Index rows = cache.rows_per_group;
  const Eigen::RowVectorXd scale_row = bn.scale.transpose();

  for (Index g = 0; g < cache.groups; ++g) {
    auto dyg = dy.flat().middleRows(g * rows, rows);
    auto dxg = dx.flat().middleRows(g * rows, rows);
    auto xhat = cache.xhat.middleRows(g * rows, rows);
    const Eigen::RowVectorXd inv_std = cache.inv_std.row(g);

    dscale += (dyg.array() * xhat.array()).colwise().sum().matrix().transpose();
    dshift += dyg.colwise().sum().transpose();

    if (cache.batch_stats) {
      // dxhat = dy o scale; the normalization's mean and variance paths pull
      // the per-group means of dxhat and dxhat o xhat back out.
      Mat dxhat = (dyg.array().rowwise() * scale_row.array()).matrix();
      const Eigen::RowVectorXd mean_dxhat = dxhat.colwise().mean();
      const Eigen::RowVectorXd mean_dxhat_xhat =
          (dxhat.array() * xhat.array()).colwise().mean();
      dxhat.rowwise() -= mean_dxhat;
      dxhat.array() -= xhat.array().rowwise() * mean_dxhat_xhat.array();
      dxhat.array().rowwise() *= inv_std.array();
      dxg += dxhat;
    } else {
      // Running statistics are constants, so only the direct path remains.
      dxg.array() +=
          dyg.array().rowwise() * (scale_row.array() * inv_std.array());
    }
  }
}

Mat dropout_mask(Rng& rng, double rate, Index rows, Index cols) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout_mask: rate must be in [0, 1)");
  Mat mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      mask(i, j) = rng.next_unit() < rate ? 0.0 : keep_scale;
  return mask;
}

// ---------------------------------------------------------------------------
// Graph nodes.

struct NodeCache {
  SequenceBatch out;
  SequenceBatch dout;
  BnCache bn;
  Mat mask;    // dropout; empty when inactive
  Mat h0;      // recurrence carry actually used this pass
  IdMat ids;   // embedding input actually used this pass
};

NetCaches::NetCaches() = default;
NetCaches::NetCaches(NetCaches&&) noexcept = default;
NetCaches& NetCaches::operator=(NetCaches&&) noexcept = default;
NetCaches::~NetCaches() = default;

namespace {

struct FwdCtx {
  const SequenceBatch* x = nullptr;
  const IdMat* ids = nullptr;
  bool train = false;
  Rng* rng = nullptr;
  const std::vector<Mat>* carry_in = nullptr;
  Index steps = 0;
  Index batch = 0;
};

struct BwdCtx {
  Vec* grads = nullptr;
  SequenceBatch* dx = nullptr;
};

Eigen::Map<Mat> grad_mat(Vec& g, Index off, Index rows, Index cols) {
  return Eigen::Map<Mat>(g.data() + off, rows, cols);
}

Eigen::Map<Vec> grad_vec(Vec& g, Index off, Index n) {
  return Eigen::Map<Vec>(g.data() + off, n);
}

void glorot_fill(Rng& rng, Mat& w) {
  const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Index r = 0; r < w.rows(); ++r)
    for (Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-a, a);
}

}  // namespace

class Node {
 public:
  virtual ~Node() = default;

  std::string name;
  std::vector<int> in;
  int id = -1;
  std::vector<Index> param_offsets;

  virtual Index out_features() const = 0;
  virtual void forward(const FwdCtx& ctx, NetCaches& nc, NodeCache& c) = 0;
  virtual void backward(const BwdCtx& ctx, NetCaches& nc, NodeCache& c) = 0;
  virtual void params(std::vector<ParamInfo>&) {}
  virtual void bufs(std::vector<BufferInfo>&) {}

 protected:
  const SequenceBatch& src(NetCaches& nc, int k = 0) const {
    return nc.nodes[in[static_cast<std::size_t>(k)]].out;
  }
  SequenceBatch& dsrc(NetCaches& nc, int k = 0) const {
    return nc.nodes[in[static_cast<std::size_t>(k)]].dout;
  }
};

namespace {

class InputNode final : public Node {
 public:
  explicit InputNode(Index f) : features_(f) {}
  Index out_features() const override { return features_; }

  void forward(const FwdCtx& ctx, NetCaches&, NodeCache& c) override {
    require_shape(ctx.x->features() == features_,
                  "input width " + std::to_string(ctx.x->features()) + " != expected " +
                      std::to_string(features_));
    c.out = *ctx.x;
  }

  void backward(const BwdCtx& ctx, NetCaches&, NodeCache& c) override {
    if (ctx.dx) *ctx.dx = c.dout;
  }

 private:
  Index features_;
};

class EmbeddingNode final : public Node {
 public:
  EmbeddingNode(Rng& rng, Index vocab, Index dim) : table_(vocab, dim) {
    glorot_fill(rng, table_);
  }
  Index out_features() const override { return table_.cols(); }

  void forward(const FwdCtx& ctx, NetCaches&, NodeCache& c) override {
    const IdMat& ids = *ctx.ids;
    c.ids = ids;
    c.out.resize(ctx.steps, ctx.batch, table_.cols());
    for (Index t = 0; t < ctx.steps; ++t) {
      auto slab = c.out.step(t);
      for (Index b = 0; b < ctx.batch; ++b) {
        const int id = ids(t, b);
        if (id < 0 || id >= table_.rows())
          throw ShapeError("embedding id " + std::to_string(id) + " out of range");
        slab.row(b) = table_.row(id);
      }
    }
  }

  void backward(const BwdCtx& ctx, NetCaches&, NodeCache& c) override {
    auto g = grad_mat(*ctx.grads, param_offsets[0], table_.rows(), table_.cols());
    const Index steps = c.dout.steps();
    const Index batch = c.dout.batch();
    for (Index t = 0; t < steps; ++t) {
      auto slab = c.dout.step(t);
      for (Index b = 0; b < batch; ++b) g.row(c.ids(t, b)) += slab.row(b);
    }
  }

  void params(std::vector<ParamInfo>& out) override {
    out.push_back({name + ".table", ParamClass::Embedding, 0, table_.size(), table_.data()});
  }

 private:
  Mat table_;
};

class AffineNode final : public Node {
 public:
  AffineNode(Rng& rng, Index in_f, Index out_f, int tag) : W(out_f, in_f), b(Vec::Zero(out_f)) {
    glorot_fill(rng, W);
    depth_tag = tag;
  }
  Index out_features() const override { return W.rows(); }

  void forward(const FwdCtx&, NetCaches& nc, NodeCache& c) override {
    const SequenceBatch& x = src(nc);
    c.out.resize(x.steps(), x.batch(), W.rows());
    c.out.flat().noalias() = x.flat() * W.transpose();
    c.out.flat().rowwise() += b.transpose();
  }

  void backward(const BwdCtx& ctx, NetCaches& nc, NodeCache& c) override {
    const SequenceBatch& x = src(nc);
    grad_mat(*ctx.grads, param_offsets[0], W.rows(), W.cols()).noalias() +=
        c.dout.flat().transpose() * x.flat();
    grad_vec(*ctx.grads, param_offsets[1], b.size()) +=
        c.dout.flat().colwise().sum().transpose();
    dsrc(nc).flat().noalias() += c.dout.flat() * W;
  }

  void params(std::vector<ParamInfo>& out) override {
    out.push_back({name + ".W", ParamClass::InputWeight, 0, W.size(), W.data()});
    out.push_back({name + ".b", ParamClass::Bias, 0, b.size(), b.data()});
  }

  Mat W;
  Vec b;
  int depth_tag = -1;
};

class BatchNormNode final : public Node {
 public:
  BatchNormNode(Index f, BnPolicy policy) : bn_(make_batchnorm(f, policy)) {}
  Index out_features() const override { return bn_.scale.size(); }

  void forward(const FwdCtx& ctx, NetCaches& nc, NodeCache& c) override {
    c.out = batchnorm_apply(bn_, src(nc), ctx.train, &c.bn);
  }

  void backward(const BwdCtx& ctx, NetCaches& nc, NodeCache& c) override {
    auto dscale = grad_vec(*ctx.grads, param_offsets[0], bn_.scale.size());
    auto dshift = grad_vec(*ctx.grads, param_offsets[1], bn_.shift.size());
    batchnorm_backward(bn_, c.bn, c.dout, dsrc(nc), dscale, dshift);
  }

  void params(std::vector<ParamInfo>& out) override {
    out.push_back({name + ".scale", ParamClass::BnScale, 0, bn_.scale.size(), bn_.scale.data()});
    out.push_back({name + ".shift", ParamClass::BnShift, 0, bn_.shift.size(), bn_.shift.data()});
  }

  void bufs(std::vector<BufferInfo>& out) override {
    out.push_back({name + ".running_mean", &bn_.running_mean});
    out.push_back({name + ".running_var", &bn_.running_var});
  }

 private:
  BatchNorm bn_;
};

class IndRecNode final : public Node {
 public:
  IndRecNode(Rng& rng, Index width, Activation act, double gamma, Index horizon,
             RecurrentInit mode, double keep, int slot)
      : u(width), act_(act), carry_slot(slot) {
    const double inv_t = 1.0 / static_cast<double>(horizon);
    const double hi = std::isinf(gamma) ? 1.0 : std::pow(gamma, inv_t);
    const double lo = mode == RecurrentInit::LastStepOnly ? std::pow(keep, inv_t) : 0.0;
    for (Index n = 0; n < width; ++n) u[n] = rng.uniform(lo, hi);
  }
  Index out_features() const override { return u.size(); }

  void forward(const FwdCtx& ctx, NetCaches& nc, NodeCache& c) override {
    if (ctx.carry_in && !ctx.carry_in->empty())
      c.h0 = (*ctx.carry_in)[static_cast<std::size_t>(carry_slot)];
    else
      c.h0.resize(0, 0);
    recur_forward(u, act_, src(nc), c.h0, c.out);
  }

  void backward(const BwdCtx& ctx, NetCaches& nc, NodeCache& c) override {
    auto du = grad_vec(*ctx.grads, param_offsets[0], u.size());
    Vec du_local = Vec::Zero(u.size());
    Mat dh0;
    recur_backward(u, act_, c.out, c.h0, c.dout, scratch_ds_, du_local, dh0);
    du += du_local;
    dsrc(nc).flat() += scratch_ds_.flat();
  }

  void params(std::vector<ParamInfo>& out) override {
    out.push_back({name + ".u", ParamClass::Recurrent, 0, u.size(), u.data()});
  }

  Vec u;
  Activation act_;
  int carry_slot;

 private:
  SequenceBatch scratch_ds_;
};

class VanillaRecNode final : public Node {
 public:
  VanillaRecNode(Rng& rng, Index width, Activation act, int slot)
      : U(width, width), act_(act), carry_slot(slot) {
    glorot_fill(rng, U);
  }
  Index out_features() const override { return U.rows(); }

  void forward(const FwdCtx& ctx, NetCaches& nc, NodeCache& c) override {
    if (ctx.carry_in && !ctx.carry_in->empty())
      c.h0 = (*ctx.carry_in)[static_cast<std::size_t>(carry_slot)];
    else
      c.h0.resize(0, 0);
    vanilla_recur_forward(U, act_, src(nc), c.h0, c.out);
  }

  void backward(const BwdCtx& ctx, NetCaches& nc, NodeCache& c) override {
    Mat dU_local, dh0;
    vanilla_recur_backward(U, act_, c.out, c.h0, c.dout, scratch_ds_, dU_local, dh0);
    grad_mat(*ctx.grads, param_offsets[0], U.rows(), U.cols()) += dU_local;
    dsrc(nc).flat() += scratch_ds_.flat();
  }

  void params(std::vector<ParamInfo>& out) override {
    out.push_back({name + ".U", ParamClass::Recurrent, 0, U.size(), U.data()});
  }

  Mat U;
  Activation act_;
  int carry_slot;

 private:
  SequenceBatch scratch_ds_;
};

class DropoutNode final : public Node {
 public:
  DropoutNode(double rate, Index f) : rate_(rate), features_(f) {}
  Index out_features() const override { return features_; }

  void forward(const FwdCtx& ctx, NetCaches& nc, NodeCache& c) override {
    const SequenceBatch& x = src(nc);
    if (!ctx.train || rate_ == 0.0) {
      c.mask.resize(0, 0);
      c.out = x;
      return;
    }
    if (!ctx.rng) throw ContractError("dropout in training mode needs an rng");
    // One mask per sequence: every step sees the same dropped units.
    c.mask = dropout_mask(*ctx.rng, rate_, x.batch(), x.features());
    c.out.resize(x.steps(), x.batch(), x.features());
    for (Index t = 0; t < x.steps(); ++t)
      c.out.step(t) = x.step(t).cwiseProduct(c.mask);
  }

  void backward(const BwdCtx&, NetCaches& nc, NodeCache& c) override {
    SequenceBatch& dx = dsrc(nc);
    if (c.mask.size() == 0) {
      dx.flat() += c.dout.flat();
      return;
    }
    for (Index t = 0; t < c.dout.steps(); ++t)
      dx.step(t) += c.dout.step(t).cwiseProduct(c.mask);
  }

 private:
  double rate_;
  Index features_;
};

class AddNode final : public Node {
 public:
  explicit AddNode(Index f) : features_(f) {}
  Index out_features() const override { return features_; }

  void forward(const FwdCtx&, NetCaches& nc, NodeCache& c) override {
    const SequenceBatch& a = src(nc, 0);
    const SequenceBatch& b = src(nc, 1);
    require_shape(a.same_shape(b), "add: branch shapes differ");
    c.out.resize(a.steps(), a.batch(), a.features());
    c.out.flat() = a.flat() + b.flat();
  }

  void backward(const BwdCtx&, NetCaches& nc, NodeCache& c) override {
    dsrc(nc, 0).flat() += c.dout.flat();
    dsrc(nc, 1).flat() += c.dout.flat();
  }

 private:
  Index features_;
};

class ConcatNode final : public Node {
 public:
  ConcatNode(Index f_left, Index f_right) : f_left_(f_left), f_right_(f_right) {}
  Index out_features() const override { return f_left_ + f_right_; }

  void forward(const FwdCtx&, NetCaches& nc, NodeCache& c) override {
    const SequenceBatch& a = src(nc, 0);
    const SequenceBatch& b = src(nc, 1);
    require_shape(a.steps() == b.steps() && a.batch() == b.batch(),
                  "concat: sequence shapes differ");
    c.out.resize(a.steps(), a.batch(), f_left_ + f_right_);
    c.out.flat().leftCols(f_left_) = a.flat();
    c.out.flat().rightCols(f_right_) = b.flat();
  }

  void backward(const BwdCtx&, NetCaches& nc, NodeCache& c) override {
    dsrc(nc, 0).flat() += c.dout.flat().leftCols(f_left_);
    dsrc(nc, 1).flat() += c.dout.flat().rightCols(f_right_);
  }

 private:
  Index f_left_;
  Index f_right_;
};

class ActivationNode final : public Node {
 public:
  ActivationNode(Activation act, Index f) : act_(act), features_(f) {}
  Index out_features() const override { return features_; }
  Activation act() const { return act_; }

  void forward(const FwdCtx&, NetCaches& nc, NodeCache& c) override {
    const SequenceBatch& x = src(nc);
    c.out.resize(x.steps(), x.batch(), x.features());
    for (Index r = 0; r < x.flat().rows(); ++r)
      for (Index f = 0; f < x.features(); ++f)
        c.out.flat()(r, f) = activate(act_, x.flat()(r, f));
  }

  void backward(const BwdCtx&, NetCaches& nc, NodeCache& c) override {
    SequenceBatch& dx = dsrc(nc);
    for (Index r = 0; r < c.out.flat().rows(); ++r)
      for (Index f = 0; f < c.out.features(); ++f)
        dx.flat()(r, f) += c.dout.flat()(r, f) *
                           activate_grad_from_value(act_, c.out.flat()(r, f));
  }

 private:
  Activation act_;
  Index features_;
};

class SelectLastNode final : public Node {
 public:
  explicit SelectLastNode(Index f) : features_(f) {}
  Index out_features() const override { return features_; }

  void forward(const FwdCtx&, NetCaches& nc, NodeCache& c) override {
    const SequenceBatch& x = src(nc);
    c.out.resize(1, x.batch(), x.features());
    c.out.step(0) = x.step(x.steps() - 1);
  }

  void backward(const BwdCtx&, NetCaches& nc, NodeCache& c) override {
    SequenceBatch& dx = dsrc(nc);
    dx.step(dx.steps() - 1) += c.dout.step(0);
  }

 private:
  Index features_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Network assembly.

Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

namespace {

struct Builder {
  std::vector<std::unique_ptr<Node>>& nodes;
  const NetworkSpec& spec;
  Rng& rng;
  int depth_counter = 0;
  int rec_counter = 0;
  int rec_total = 0;
  int carry_counter = 0;

  int add(Node* raw, std::vector<int> ins, const std::string& name) {
    std::unique_ptr<Node> node(raw);
    node->name = name;
    node->in = std::move(ins);
    node->id = static_cast<int>(nodes.size());
    nodes.push_back(std::move(node));
    return static_cast<int>(nodes.size()) - 1;
  }

  Index feat(int id) { return nodes[static_cast<std::size_t>(id)]->out_features(); }

  RecurrentInit next_rec_mode() {
    const bool last = rec_counter == rec_total - 1;
    ++rec_counter;
    return (last && spec.output_mode == OutputMode::LastStep) ? RecurrentInit::LastStepOnly
                                                              : RecurrentInit::EveryStep;
  }

  int affine(int from, Index out_f, const std::string& name, bool tagged = true) {
    return add(new AffineNode(rng, feat(from), out_f, tagged ? depth_counter++ : -1),
               {from}, name);
  }

  int bn(int from, const std::string& name) {
    return add(new BatchNormNode(feat(from), spec.bn_policy), {from}, name);
  }

  int rec(int from, const std::string& name) {
    if (spec.cell == CellKind::VanillaTanh)
      return add(new VanillaRecNode(rng, feat(from), Activation::Tanh, carry_counter++),
                 {from}, name);
    return add(new IndRecNode(rng, feat(from), spec.activation, spec.gamma, spec.horizon,
                              next_rec_mode(), spec.epsilon, carry_counter++),
               {from}, name);
  }

  int dropout(int from, double rate, const std::string& name) {
    if (rate <= 0.0) return from;
    return add(new DropoutNode(rate, feat(from)), {from}, name);
  }

  // Weight -> recurrence composite with the configured normalization slot.
  int composite(int from, Index width, const std::string& prefix) {
    int cur = affine(from, width, prefix + ".w");
    if (spec.use_bn && spec.composite == CompositeOrder::WeightBnRec)
      cur = bn(cur, prefix + ".bn");
    cur = rec(cur, prefix + ".rec");
    if (spec.use_bn && spec.composite == CompositeOrder::WeightRecBn)
      cur = bn(cur, prefix + ".bn");
    return cur;
  }
};

int build_stacked(Builder& b, int cur) {
  for (Index l = 0; l < b.spec.layers; ++l) {
    const std::string p = "l" + std::to_string(l);
    cur = b.composite(cur, b.spec.hidden, p);
    cur = b.dropout(cur, b.spec.dropout.layer, p + ".drop");
  }
  return cur;
}

int build_residual(Builder& b, int cur) {
  // Pre-activation blocks: the branch runs norm, recurrence, then weight,
  // twice, and is summed with the untouched shortcut.
  cur = b.affine(cur, b.spec.hidden, "stem.w");
  for (Index blk = 0; blk < b.spec.layers; ++blk) {
    const std::string p = "res" + std::to_string(blk);
    const int skip = cur;
    int t = cur;
    for (int half = 0; half < 2; ++half) {
      const std::string q = p + (half == 0 ? ".a" : ".b");
      if (b.spec.use_bn) t = b.bn(t, q + ".bn");
      t = b.rec(t, q + ".rec");
      t = b.affine(t, b.spec.hidden, q + ".w");
    }
    cur = b.add(new AddNode(b.feat(skip)), {skip, t}, p + ".sum");
    cur = b.dropout(cur, b.spec.dropout.layer, p + ".drop");
  }
  return cur;
}

int build_dense(Builder& b, int cur, bool embedded) {
  const Index k = b.spec.growth;
  if (!embedded) cur = b.composite(cur, 6 * k, "stem");
  for (std::size_t bi = 0; bi < b.spec.block_config.size(); ++bi) {
    const Index units = b.spec.block_config[bi];
    for (Index un = 0; un < units; ++un) {
      const std::string p = "blk" + std::to_string(bi) + ".u" + std::to_string(un);
      int branch = b.composite(cur, 4 * k, p + ".neck");
      branch = b.dropout(branch, b.spec.dropout.bottleneck, p + ".neck.drop");
      branch = b.composite(branch, k, p + ".grow");
      branch = b.dropout(branch, b.spec.dropout.dense, p + ".grow.drop");
      cur = b.add(new ConcatNode(b.feat(cur), b.feat(branch)), {cur, branch}, p + ".cat");
    }
    const std::string tp = "trans" + std::to_string(bi);
    const Index half = (b.feat(cur) + 1) / 2;
    cur = b.affine(cur, half, tp + ".w");
    if (b.spec.use_bn) cur = b.bn(cur, tp + ".bn");
    cur = b.add(new ActivationNode(Activation::Relu, b.feat(cur)), {cur}, tp + ".relu");
    cur = b.dropout(cur, b.spec.dropout.transition, tp + ".drop");
  }
  return cur;
}

int count_recurrences(const NetworkSpec& s, bool embedded) {
  switch (s.kind) {
    case NetKind::Stacked:
      return static_cast<int>(s.layers);
    case NetKind::Residual:
      return static_cast<int>(2 * s.layers);
    case NetKind::Dense: {
      int n = embedded ? 0 : 1;
      for (Index u : s.block_config) n += static_cast<int>(2 * u);
      return n;
    }
  }
  return 0;
}

void validate_spec(const NetworkSpec& s) {
  if (s.input_dim < 1 || s.output_dim < 1) throw ConfigError("network: dims must be >= 1");
  if (s.layers < 1) throw ConfigError("network: layers must be >= 1");
  if (s.hidden < 1) throw ConfigError("network: hidden must be >= 1");
  if (s.horizon < 1) throw ConfigError("network: horizon must be >= 1");
  if (!(s.gamma > 0)) throw ConfigError("network: gamma must be positive");
  if (!(s.epsilon > 0 && s.epsilon < s.gamma))
    throw ConfigError("epsilon must satisfy 0 < epsilon < gamma");
  if (s.cell == CellKind::VanillaTanh && s.kind != NetKind::Stacked)
    throw ConfigError("network: the dense-recurrence baseline only comes in stacked form");
  if (s.kind == NetKind::Dense) {
    if (s.growth < 1) throw ConfigError("network: growth must be >= 1");
    if (s.block_config.empty()) throw ConfigError("network: block_config is empty");
    for (Index u : s.block_config)
      if (u < 1) throw ConfigError("network: block_config entries must be >= 1");
  }
  if (s.embed_dim < 0) throw ConfigError("network: embed_dim must be >= 0");
}

}  // namespace

Network build_network(const NetworkSpec& spec, Rng& rng) {
  validate_spec(spec);
  Network net;
  net.spec_ = spec;

  Builder b{net.nodes_, spec, rng};
  const bool embedded = spec.embed_dim > 0;
  b.rec_total = count_recurrences(spec, embedded);

  int cur;
  if (embedded) {
    const Index width = spec.kind == NetKind::Dense ? 6 * spec.growth : spec.embed_dim;
    cur = b.add(new EmbeddingNode(rng, spec.input_dim, width), {}, "embed");
    net.wants_ids_ = true;
  } else {
    cur = b.add(new InputNode(spec.input_dim), {}, "input");
  }
  cur = b.dropout(cur, spec.dropout.input, "input.drop");

  switch (spec.kind) {
    case NetKind::Stacked: cur = build_stacked(b, cur); break;
    case NetKind::Residual: cur = build_residual(b, cur); break;
    case NetKind::Dense: cur = build_dense(b, cur, embedded); break;
  }

  if (spec.output_mode == OutputMode::LastStep)
    cur = b.add(new SelectLastNode(b.feat(cur)), {cur}, "takelast");
  b.affine(cur, spec.output_dim, "readout.w", /*tagged=*/false);

  net.n_carry_ = b.carry_counter;
  net.finalize_layout();
  return net;
}

void Network::finalize_layout() {
  params_.clear();
  buffers_.clear();
  n_params_ = 0;
  has_dropout_ = false;
  for (auto& node : nodes_) {
    std::vector<ParamInfo> local;
    node->params(local);
    node->param_offsets.clear();
    for (auto& p : local) {
      p.offset = n_params_;
      node->param_offsets.push_back(n_params_);
      n_params_ += p.size;
      params_.push_back(p);
    }
    node->bufs(buffers_);
    if (dynamic_cast<DropoutNode*>(node.get())) has_dropout_ = true;
  }
}

bool Network::wants_ids() const { return wants_ids_; }

void Network::run_forward(NetCaches& caches, const SequenceBatch* x, const IdMat* ids,
                          bool train, Rng* rng, const std::vector<Mat>* carry_in) {
  if (wants_ids_ && !ids)
    throw ContractError("this network takes id sequences; call forward_ids");
  if (!wants_ids_ && !x)
    throw ContractError("this network takes dense features; call forward");
  if (train && has_dropout_ && !rng)
    throw ContractError("training forward with dropout needs an rng");

  FwdCtx ctx;
  ctx.x = x;
  ctx.ids = ids;
  ctx.train = train;
  ctx.rng = rng;
  ctx.carry_in = carry_in;
  ctx.steps = x ? x->steps() : static_cast<Index>(ids->rows());
  ctx.batch = x ? x->batch() : static_cast<Index>(ids->cols());
  require_shape(ctx.steps >= 1 && ctx.batch >= 1, "forward: empty batch");

  if (carry_in && !carry_in->empty() &&
      static_cast<Index>(carry_in->size()) != n_carry_)
    throw ContractError("carry has " + std::to_string(carry_in->size()) +
                        " slots, network has " + std::to_string(n_carry_));

  caches.nodes.resize(nodes_.size());
  caches.steps = ctx.steps;
  caches.batch = ctx.batch;
  caches.train = train;
  for (auto& node : nodes_) node->forward(ctx, caches, caches.nodes[node->id]);
  caches.valid = true;
  caches.revision = revision_;
}

void Network::forward(NetCaches& caches, const SequenceBatch& x, bool train, Rng* rng,
                      const std::vector<Mat>* carry_in) {
  run_forward(caches, &x, nullptr, train, rng, carry_in);
}

void Network::forward_ids(NetCaches& caches, const IdMat& ids, bool train, Rng* rng,
                          const std::vector<Mat>* carry_in) {
  run_forward(caches, nullptr, &ids, train, rng, carry_in);
}

void Network::backward(NetCaches& caches, const SequenceBatch& dY, Vec& grads,
                       SequenceBatch* dx) {
  if (!caches.valid) throw ContractError("backward without a forward pass");
  if (caches.revision != revision_)
    throw ContractError("stale caches: parameters changed since this forward pass");
  const NodeCache& out_cache = caches.nodes.back();
  if (!dY.same_shape(out_cache.out))
    throw ShapeError("backward: dY shape does not match the network output");

  grads.resize(n_params_);
  grads.setZero();
  for (auto& node : nodes_) {
    NodeCache& c = caches.nodes[node->id];
    c.dout.resize(c.out.steps(), c.out.batch(), c.out.features());
    c.dout.set_zero();
  }
  caches.nodes.back().dout = dY;

  BwdCtx ctx;
  ctx.grads = &grads;
  ctx.dx = dx;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    (*it)->backward(ctx, caches, caches.nodes[(*it)->id]);
}

const SequenceBatch& Network::output(const NetCaches& caches) const {
  if (!caches.valid) throw ContractError("output requested before any forward pass");
  return caches.nodes.back().out;
}

std::vector<Mat> Network::extract_carry(const NetCaches& caches) const {
  if (!caches.valid) throw ContractError("carry requested before any forward pass");
  std::vector<Mat> carry(static_cast<std::size_t>(n_carry_));
  for (const auto& node : nodes_) {
    int slot = -1;
    const SequenceBatch* out = nullptr;
    if (auto* r = dynamic_cast<const IndRecNode*>(node.get())) {
      slot = r->carry_slot;
      out = &caches.nodes[node->id].out;
    } else if (auto* v = dynamic_cast<const VanillaRecNode*>(node.get())) {
      slot = v->carry_slot;
      out = &caches.nodes[node->id].out;
    }
    if (slot >= 0) carry[static_cast<std::size_t>(slot)] = out->step(out->steps() - 1);
  }
  return carry;
}

void Network::copy_params_to(Vec& out) const {
  out.resize(n_params_);
  for (const auto& p : params_)
    out.segment(p.offset, p.size) = Eigen::Map<const Vec>(p.data, p.size);
}

void Network::set_params(const Vec& in) {
  require_shape(in.size() == n_params_, "set_params: size mismatch");
  for (const auto& p : params_)
    Eigen::Map<Vec>(p.data, p.size) = in.segment(p.offset, p.size);
  bump_revision();
}

void Network::clamp_recurrent(double gamma, Index horizon) {
  if (!(gamma > 0)) throw ConfigError("clamp_recurrent: gamma must be positive");
  if (horizon < 1) throw ConfigError("clamp_recurrent: horizon must be >= 1");
  bump_revision();
  if (std::isinf(gamma)) return;
  const double bound = std::pow(gamma, 1.0 / static_cast<double>(horizon));
  for (auto& node : nodes_) {
    if (auto* r = dynamic_cast<IndRecNode*>(node.get())) {
      for (Index n = 0; n < r->u.size(); ++n) {
        if (r->u[n] > bound) r->u[n] = bound;
        else if (r->u[n] < -bound) r->u[n] = -bound;
      }
    }
  }
}

std::vector<std::pair<std::string, const Vec*>> Network::recurrent_gains() const {
  std::vector<std::pair<std::string, const Vec*>> out;
  for (const auto& node : nodes_)
    if (auto* r = dynamic_cast<const IndRecNode*>(node.get()))
      out.emplace_back(node->name, &r->u);
  return out;
}

std::vector<std::pair<Index, Index>> Network::depth_weight_ranges() const {
  std::vector<std::pair<int, std::pair<Index, Index>>> tagged;
  for (const auto& node : nodes_) {
    if (auto* a = dynamic_cast<const AffineNode*>(node.get())) {
      if (a->depth_tag >= 0)
        tagged.push_back({a->depth_tag,
                          {node->param_offsets[0], a->W.size()}});
    }
  }
  std::sort(tagged.begin(), tagged.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });
  std::vector<std::pair<Index, Index>> out;
  out.reserve(tagged.size());
  for (const auto& t : tagged) out.push_back(t.second);
  return out;
}

std::vector<std::uint8_t> Network::activation_signature(const NetCaches& caches) const {
  if (!caches.valid) throw ContractError("signature requested before any forward pass");
  std::vector<std::uint8_t> sig;
  for (const auto& node : nodes_) {
    const Mat* vals = nullptr;
    if (auto* r = dynamic_cast<const IndRecNode*>(node.get())) {
      if (r->act_ == Activation::Relu) vals = &caches.nodes[node->id].out.flat();
    } else if (auto* a = dynamic_cast<const ActivationNode*>(node.get())) {
      if (a->act() == Activation::Relu)
        vals = &caches.nodes[node->in[0]].out.flat();
    }
    if (!vals) continue;
    for (Index r = 0; r < vals->rows(); ++r)
      for (Index f = 0; f < vals->cols(); ++f)
        sig.push_back((*vals)(r, f) > 0 ? 1 : 0);
  }
  return sig;
}

std::int64_t network_param_count(const Network& net) { return net.n_params(); }

}  // namespace indrnn
