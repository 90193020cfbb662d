#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "indrnn/layer.hpp"
#include "indrnn/ops.hpp"
#include "indrnn/rng.hpp"
#include "indrnn/types.hpp"

namespace indrnn {

enum class NetKind { Stacked, Residual, Dense };
enum class CellKind { IndRnn, VanillaTanh };
enum class BnPolicy { AllSteps, PerStep };
enum class OutputMode { LastStep, EveryStep };

// Order of the per-layer composite in stacked and dense networks. Either the
// normalization sits between the input map and the recurrence, or after the
// recurrence output.
enum class CompositeOrder { WeightBnRec, WeightRecBn };

struct DropoutRates {
  double input = 0.0;       // right after the input / embedding
  double layer = 0.0;       // after each stacked or residual block
  double bottleneck = 0.0;  // dense net, after the narrowing composite
  double dense = 0.0;       // dense net, after each growth composite
  double transition = 0.0;  // dense net, after each transition
};

struct NetworkSpec {
  NetKind kind = NetKind::Stacked;
  CellKind cell = CellKind::IndRnn;
  Activation activation = Activation::Relu;
  OutputMode output_mode = OutputMode::LastStep;
  CompositeOrder composite = CompositeOrder::WeightBnRec;

  Index input_dim = 1;    // feature width, or vocabulary size when embed_dim > 0
  Index output_dim = 1;
  Index layers = 2;       // stacked layers / residual blocks
  Index hidden = 128;

  // Dense-specific shape controls.
  Index growth = 16;
  std::vector<Index> block_config = {8, 6, 4};

  Index embed_dim = 0;    // > 0 selects an id-sequence input through a table

  bool use_bn = false;
  BnPolicy bn_policy = BnPolicy::AllSteps;
  DropoutRates dropout;

  // Recurrent-gain budget: |u| is initialized and clamped within
  // gamma^(1/horizon). Infinite gamma disables the clamp (init bound 1).
  double gamma = 2.0;
  double epsilon = 0.5;   // lower init bound source for the last-step layer
  Index horizon = 1;      // training sequence length the bounds refer to
};

// ---------------------------------------------------------------------------
// Batch normalization over (steps*batch, features) slabs.

struct BatchNorm {
  Vec scale;
  Vec shift;
  // One row per statistics group: a single row under AllSteps, one row per
  // step under PerStep (allocated at first training call).
  Mat running_mean;
  Mat running_var;
  BnPolicy policy = BnPolicy::AllSteps;
  double momentum = 0.9;
  double eps = 1e-5;
};

BatchNorm make_batchnorm(Index features, BnPolicy policy);

struct BnCache {
  Mat xhat;     // same layout as the input's flat() view
  Mat inv_std;  // groups x features
  Index groups = 0;
  Index rows_per_group = 0;
  bool batch_stats = false;  // whether batch statistics were used
};

// Training mode normalizes with batch statistics (population variance) and
// folds them into the running estimates; eval mode uses the running
// estimates untouched. Pass a cache to enable backward.
SequenceBatch batchnorm_apply(BatchNorm& bn, const SequenceBatch& x, bool train,
                              BnCache* cache = nullptr);

void batchnorm_backward(const BatchNorm& bn, const BnCache& cache,
                        const SequenceBatch& dy, SequenceBatch& dx,
                        Eigen::Ref<Vec> dscale, Eigen::Ref<Vec> dshift);

// Zero with probability rate, else 1/(1-rate), drawn row-major one uniform
// per entry. One mask is shared by every step of a sequence.
Mat dropout_mask(Rng& rng, double rate, Index rows, Index cols);

// ---------------------------------------------------------------------------
// Whole networks.

enum class ParamClass { InputWeight, Recurrent, Bias, BnScale, BnShift, Embedding };

struct ParamInfo {
  std::string name;
  ParamClass cls;
  Index offset = 0;  // position in the flat parameter order
  Index size = 0;
  double* data = nullptr;  // contiguous storage inside the owning node
};

struct BufferInfo {
  std::string name;
  Mat* data = nullptr;
};

struct NodeCache;

struct NetCaches {
  std::vector<NodeCache> nodes;
  Index steps = 0;
  Index batch = 0;
  bool train = false;
  bool valid = false;
  std::uint64_t revision = 0;

  NetCaches();
  NetCaches(NetCaches&&) noexcept;
  NetCaches& operator=(NetCaches&&) noexcept;
  ~NetCaches();
};

class Node;

class Network {
 public:
  Network() = default;
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  ~Network();

  const NetworkSpec& spec() const { return spec_; }

  // Dense-feature input. Throws ContractError if the net was built with an
  // embedding front end.
  void forward(NetCaches& caches, const SequenceBatch& x, bool train,
               Rng* rng = nullptr, const std::vector<Mat>* carry_in = nullptr);

  // Id-sequence input (steps x batch integer ids).
  void forward_ids(NetCaches& caches, const IdMat& ids, bool train,
                   Rng* rng = nullptr, const std::vector<Mat>* carry_in = nullptr);

  // dY matches the output shape: (1, B, out) for LastStep nets, (T, B, out)
  // for EveryStep nets. Writes the full flat gradient (zeroed first). The
  // caches must come from a forward pass against the current parameters.
  void backward(NetCaches& caches, const SequenceBatch& dY, Vec& grads,
                SequenceBatch* dx = nullptr);

  const SequenceBatch& output(const NetCaches& caches) const;

  // Final hidden state of every recurrence, in node order; feed back through
  // forward(..., carry_in) to continue a stream.
  std::vector<Mat> extract_carry(const NetCaches& caches) const;
  Index carry_slots() const { return n_carry_; }

  Index n_params() const { return n_params_; }
  const std::vector<ParamInfo>& param_info() const { return params_; }
  const std::vector<BufferInfo>& buffer_info() const { return buffers_; }
  void copy_params_to(Vec& out) const;
  void set_params(const Vec& in);

  // Clamp every elementwise recurrent gain to gamma^(1/horizon).
  void clamp_recurrent(double gamma, Index horizon);

  // (name, gains) of each elementwise recurrence, in depth order.
  std::vector<std::pair<std::string, const Vec*>> recurrent_gains() const;

  // (offset, size) spans of the depth-tagged input weights in the flat
  // parameter order, shallow to deep; used to summarize how much gradient
  // reaches each level.
  std::vector<std::pair<Index, Index>> depth_weight_ranges() const;

  // Sign pattern of every kinked activation input in the caches. Two
  // parameter points with different signatures straddle a relu kink, which
  // makes finite differences there meaningless.
  std::vector<std::uint8_t> activation_signature(const NetCaches& caches) const;

  std::uint64_t revision() const { return revision_; }
  void bump_revision() { ++revision_; }

  bool wants_ids() const;

 private:
  friend Network build_network(const NetworkSpec& spec, Rng& rng);

  void run_forward(NetCaches& caches, const SequenceBatch* x, const IdMat* ids,
                   bool train, Rng* rng, const std::vector<Mat>* carry_in);
  void finalize_layout();

  NetworkSpec spec_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<ParamInfo> params_;
  std::vector<BufferInfo> buffers_;
  Index n_params_ = 0;
  Index n_carry_ = 0;
  bool wants_ids_ = false;
  bool has_dropout_ = false;
  std::uint64_t revision_ = 0;
};

// Assembles and initializes one of the three layouts. Parameter draws happen
// in node creation order, so (spec, seed) fixes every initial value.
Network build_network(const NetworkSpec& spec, Rng& rng);

std::int64_t network_param_count(const Network& net);

inline void network_forward(Network& net, NetCaches& caches, const SequenceBatch& x,
                            bool train, Rng* rng = nullptr,
                            const std::vector<Mat>* carry_in = nullptr) {
  net.forward(caches, x, train, rng, carry_in);
}

inline void network_backward(Network& net, NetCaches& caches, const SequenceBatch& dY,
                             Vec& grads, SequenceBatch* dx = nullptr) {
  net.backward(caches, dY, grads, dx);
}

}  // namespace indrnn
