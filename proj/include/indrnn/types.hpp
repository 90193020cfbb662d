#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace indrnn {

using Index = Eigen::Index;

// All numeric state is 64-bit. Matrices are row-major so that per-row views
// (one batch element, one weight row) are contiguous.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using IdMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// File and serialization errors carry the byte offset of the failure.
struct FormatError : std::runtime_error {
  FormatError(const std::string& msg, std::size_t at)
      : std::runtime_error(msg + " (byte offset " + std::to_string(at) + ")"), offset(at) {}
  std::size_t offset;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotRepresentableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense rank-3 array indexed (step, batch row, feature). Stored as one
// row-major matrix of step-major slabs, so step(t) is a contiguous B x F
// block and flat() is the (T*B) x F view used for batched affine maps.
class SequenceBatch {
 public:
  SequenceBatch() = default;
  SequenceBatch(Index steps, Index batch, Index features)
      : steps_(steps), batch_(batch), features_(features),
        data_(Mat::Zero(steps * batch, features)) {}

  static SequenceBatch zeros(Index steps, Index batch, Index features) {
    return SequenceBatch(steps, batch, features);
  }

  void resize(Index steps, Index batch, Index features) {
    steps_ = steps;
    batch_ = batch;
    features_ = features;
    data_.resize(steps * batch, features);
  }

  Index steps() const { return steps_; }
  Index batch() const { return batch_; }
  Index features() const { return features_; }
  bool empty() const { return data_.size() == 0; }

  auto step(Index t) { return data_.middleRows(t * batch_, batch_); }
  auto step(Index t) const { return data_.middleRows(t * batch_, batch_); }

  double& at(Index t, Index b, Index f) { return data_(t * batch_ + b, f); }
  double at(Index t, Index b, Index f) const { return data_(t * batch_ + b, f); }

  Mat& flat() { return data_; }
  const Mat& flat() const { return data_; }

  void set_zero() { data_.setZero(); }

  bool same_shape(const SequenceBatch& o) const {
    return steps_ == o.steps_ && batch_ == o.batch_ && features_ == o.features_;
  }

 private:
  Index steps_ = 0;
  Index batch_ = 0;
  Index features_ = 0;
  Mat data_;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace indrnn
