#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "catnet/rng.hpp"

namespace catnet::ad {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Dense row-major matrix of 64-bit floats with an optional gradient buffer.
/// Copying a Tensor copies the handle, not the storage; parameters stay
/// aliased across forward passes while their tapes are rebuilt. Constness is
/// shallow, as for any shared handle: a const Tensor still exposes mutable
/// storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    return Tensor(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0),
                  requires_grad);
  }

  static Tensor from_data(int rows, int cols, std::vector<double> data,
                          bool requires_grad = false) {
    return Tensor(rows, cols, std::move(data), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(1, 1, std::vector<double>{v}, requires_grad);
  }

  static Tensor glorot(int rows, int cols, Rng& rng) {
    std::vector<double> buf(static_cast<std::size_t>(rows) * cols);
    // fan_in = cols, fan_out = rows for a rows x cols map applied as x -> W x.
    glorot_uniform_fill(buf, cols, rows, rng);
    return Tensor(rows, cols, std::move(buf), true);
  }

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  std::size_t size() const { return node_->data.size(); }

  double& at(int r, int c) const {
    return node_->data[static_cast<std::size_t>(r) * node_->cols + c];
  }

  std::vector<double>& data() const { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& grad() const { return node_->grad; }

  void zero_grad() const {
    for (double& g : node_->grad) g = 0.0;
  }

  /// Value of a 1x1 tensor.
  double value() const {
    require(node_->rows == 1 && node_->cols == 1, "Tensor::value: tensor is not 1x1");
    return node_->data[0];
  }

  /// Same storage identity (aliasing check), not value equality.
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    std::vector<double> grad;  // same length as data when requires_grad
    bool requires_grad = false;
  };

  Tensor(int rows, int cols, std::vector<double> data, bool requires_grad)
      : node_(std::make_shared<Node>()) {
    require(rows >= 0 && cols >= 0, "Tensor: negative shape");
    require(data.size() == static_cast<std::size_t>(rows) * cols,
            "Tensor: data length does not match shape");
    node_->rows = rows;
    node_->cols = cols;
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
  }

  std::shared_ptr<Node> node_;
};

/// Define-by-run tape: ops append their backward rules in forward order,
/// backward() replays them once in reverse. Rebuilt every forward pass.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  void record(std::function<void()> backward_rule) {
    ops_.push_back(std::move(backward_rule));
  }

  std::size_t num_ops() const { return ops_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
  /// A second backward on the same tape is rejected; reset() first.
  void backward(Tensor& loss) {
    if (backward_done_) {
      throw std::logic_error("Tape::backward: tape already consumed; call reset() first");
    }
    require(loss.rows() == 1 && loss.cols() == 1, "Tape::backward: loss must be 1x1");
    require(loss.requires_grad(), "Tape::backward: loss does not require grad");
    loss.grad()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    backward_done_ = true;
  }

  void reset() {
    ops_.clear();
    backward_done_ = false;
  }

 private:
  std::vector<std::function<void()>> ops_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

/// NaN/Inf anywhere in a forward result is an error state, reported with the
/// op that produced it.
inline void check_finite(const Tensor& t, const char* op_name) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("non-finite value produced by op '") + op_name + "'");
    }
  }
}

}  // namespace catnet::ad
