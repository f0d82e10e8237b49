#include "cankd/tape.hpp"

#include "cankd/errors.hpp"

namespace cankd {

const Shape& DiffTensor::shape() const { return tape->shape(id); }
const std::vector<double>& DiffTensor::values() const { return tape->values(id); }
bool DiffTensor::requires_grad() const { return tape->requires_grad(id); }
bool DiffTensor::has_grad() const { return tape->has_grad(id); }
const std::vector<double>& DiffTensor::grad() const { return tape->grad(id); }

DiffTensor Tape::leaf(const Tensor& t, bool requires_grad) {
  auto n = std::make_unique<Node>();
  n->shape = t.shape;
  n->values = t.values;
  n->requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return DiffTensor{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

DiffTensor Tape::make_node(const char* op, Shape shape, std::vector<double> values,
                           const std::vector<DiffTensor>& inputs, BackwardFn backward) {
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw ShapeMismatch(std::string(op) + ": value count does not match shape " + shape.str());
  }
  bool needs_grad = false;
  for (const DiffTensor& in : inputs) {
    if (in.tape != this) throw Error(std::string(op) + ": input from a different record");
    needs_grad = needs_grad || in.requires_grad();
  }
  auto n = std::make_unique<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = needs_grad;
  n->op = op;
  if (needs_grad) n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return DiffTensor{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::backward(DiffTensor root) {
  if (root.tape != this) throw Error("backward: root from a different record");
  if (root.numel() != 1) {
    throw NotScalar("backward needs_grad a scalar root, got shape " + root.shape().str());
  }
  Adjoints adj(nodes_.size());
  adj[static_cast<std::size_t>(root.id)] = {1.0};
  for (int id = root.id; id >= 0; --id) {
    Node& n = node(id);
    auto& dz = adj[static_cast<std::size_t>(id)];
    if (dz.empty() || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, dz, adj);
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = *nodes_[id];
    if (!n.requires_grad || adj[id].empty()) continue;
    if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
    for (std::size_t k = 0; k < n.grad.size(); ++k) n.grad[k] += adj[id][k];
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n->grad.clear();
}

const std::vector<double>& Tape::grad(int id) const {
  const Node& n = node(id);
  if (n.grad.empty()) {
    throw Error(std::string("gradient absent for node ") + std::to_string(id) + " (" + n.op + ")");
  }
  return n.grad;
}

Tensor Tape::grad_tensor(DiffTensor t) const {
  const Node& n = node(t.id);
  if (n.grad.empty()) return Tensor(n.shape, 0.0);
  return Tensor(n.shape, n.grad);
}

std::vector<double>* Tape::adj_of(Adjoints& adj, int id) {
  Node& n = node(id);
  if (!n.requires_grad) return nullptr;
  auto& slot = adj[static_cast<std::size_t>(id)];
  if (slot.empty()) slot.assign(n.values.size(), 0.0);
  return &slot;
}

}  // namespace cankd
