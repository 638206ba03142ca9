#pragma once

// Dense row-major double tensors and a reverse-mode tape built from them.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gdp::ag {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  // Rank-2 access.
  double& at(int row, int col) { return data_[static_cast<std::size_t>(row) * shape_[1] + col]; }
  double at(int row, int col) const { return data_[static_cast<std::size_t>(row) * shape_[1] + col]; }

  // Same data, new shape; sizes must agree.
  Tensor reshaped(Shape shape) const;
  void fill(double v);

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Zero-initialised gradient buffer matching value.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Direct mutation of a leaf (optimizer updates, finite differences).
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  double item() const;

  // Gradient accumulated by backward(); zeros when nothing reached this node.
  Tensor grad() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var parameter(Tensor value) { return Var(std::move(value), true); }
inline Var constant(Tensor value) { return Var(std::move(value), false); }

// Seeds d(root)/d(root) = 1 for a single-element root and runs the tape.
void backward(const Var& root);

bool grad_enabled();

// While alive, ops do not record parents (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. The closure receives the result node; its grad is
// populated when it runs.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

}  // namespace gdp::ag
