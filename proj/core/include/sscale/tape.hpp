#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sscale/tensor.hpp"

namespace sscale {

/// A tensor taking part in gradient computation: value plus lazily allocated grad.
template <typename Scalar>
class Var {
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
  };

 public:
  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<Node>(Node{std::move(value), {}, requires_grad})) {}

  bool valid() const noexcept { return node_ != nullptr; }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  const Tensor<Scalar>& grad() const { return node_->grad; }

  /// Allocates a zero grad of the value's shape on first use.
  Tensor<Scalar>& grad_buffer() {
    if (node_->grad.empty()) node_->grad = Tensor<Scalar>::zeros_like(node_->value);
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(Scalar{0});
  }
  void clear_grad() { node_->grad = Tensor<Scalar>(); }

  bool same_node(const Var& other) const noexcept { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered record of differentiable ops. backward() replays them in reverse.
///
/// Closures hold shared references to their inputs and outputs, so a tape keeps
/// everything it needs alive until it is cleared or replayed.
class GradTape {
 public:
  void record(std::string op, std::function<void()> backward) {
    if (replayed_) throw TapeError("cannot record '" + op + "' on a tape that was already replayed");
    entries_.push_back({std::move(op), std::move(backward)});
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule once.
  template <typename Scalar>
  void backward(Var<Scalar>& loss) {
    if (replayed_) throw TapeError("tape already replayed; record a new forward pass");
    if (loss.value().size() != 1) {
      throw DimensionError("backward needs a scalar loss, got shape " +
                           shape_string(loss.shape()));
    }
    loss.grad_buffer().fill(Scalar{1});
    replay();
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& op_name(std::size_t i) const { return entries_.at(i).op; }
  bool replayed() const noexcept { return replayed_; }

  void clear() {
    entries_.clear();
    replayed_ = false;
  }

  /// Number of backward rules run by the last replay.
  std::size_t visited() const noexcept { return visited_; }

 private:
  void replay() {
    replayed_ = true;
    visited_ = 0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      it->backward();
      ++visited_;
    }
    entries_.clear();
  }

  struct Entry {
    std::string op;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  std::size_t visited_ = 0;
  bool replayed_ = false;
};

}  // namespace sscale
