#include "gdp/autograd/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace gdp::ag {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                                shape_str(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  if (value().size() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape()));
  return value()[0];
}

Tensor Var::grad() const {
  if (node_->grad.size() == node_->value.size()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

void Var::zero_grad() { node_->grad = Tensor(); }

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!g_grad_enabled) return Var(std::move(node));
  bool any = false;
  for (const Var& in : inputs) any = any || in.requires_grad();
  if (!any) return Var(std::move(node));
  node->requires_grad = true;
  node->parents.reserve(inputs.size());
  for (const Var& in : inputs) node->parents.push_back(in.node());
  node->backward_fn = std::move(backward_fn);
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.value().size() != 1) throw std::logic_error("backward() needs a scalar root, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

}  // namespace gdp::ag
