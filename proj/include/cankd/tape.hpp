#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "cankd/tensor.hpp"

namespace cankd {

class Tape;

// Handle to one node of a computation record. Cheap to copy; the tape owns
// all storage and must outlive every handle.
struct DiffTensor {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  const Shape& shape() const;
  const std::vector<double>& values() const;
  bool requires_grad() const;
  bool has_grad() const;
  // Accumulated gradient; throws if no backward pass has reached this node.
  const std::vector<double>& grad() const;
  std::int64_t numel() const { return shape().numel(); }
};

// Per-sweep adjoint buffers, indexed by node id. Empty vector = untouched.
using Adjoints = std::vector<std::vector<double>>;

// Backward callback: given this node's adjoint dz, accumulate into the
// adjoints of its inputs. Node values must be read through the tape.
using BackwardFn = std::function<void(Tape&, const std::vector<double>& dz, Adjoints&)>;

// Append-only reverse-mode computation record. Nodes are created in
// topological order by construction; one tape is confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  DiffTensor leaf(const Tensor& t, bool requires_grad);
  DiffTensor constant(const Tensor& t) { return leaf(t, false); }

  // Generic node constructor used by every operation, including the custom
  // ops other modules define. requires_grad is inherited from the inputs.
  DiffTensor make_node(const char* op, Shape shape, std::vector<double> values,
                       const std::vector<DiffTensor>& inputs, BackwardFn backward);

  // Reverse sweep from a scalar root. Each call seeds the root with 1 and
  // adds the resulting adjoints into the persistent per-node gradients, so
  // repeated calls accumulate.
  void backward(DiffTensor root);

  void zero_grad();

  int size() const { return static_cast<int>(nodes_.size()); }
  const Shape& shape(int id) const { return node(id).shape; }
  const std::vector<double>& values(int id) const { return node(id).values; }
  bool requires_grad(int id) const { return node(id).requires_grad; }
  bool has_grad(int id) const { return !node(id).grad.empty(); }
  const std::vector<double>& grad(int id) const;
  Tensor grad_tensor(DiffTensor t) const;

  // Adjoint buffer for a node, sized on first touch. Returns nullptr when
  // the node does not require gradient, so callers can skip the work.
  std::vector<double>* adj_of(Adjoints& adj, int id);

 private:
  struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until backward reaches the node
    bool requires_grad = false;
    const char* op = "leaf";
    BackwardFn backward;
  };

  Node& node(int id) { return *nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return *nodes_[static_cast<std::size_t>(id)]; }

  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace cankd
