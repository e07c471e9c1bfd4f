#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "mvin/tensor.hpp"

namespace mvin {

/// Op kinds recorded on the tape. The set is exactly what the model's
/// forward pass needs; there is no broadcasting beyond matrix*vector.
enum class Op : std::uint8_t {
  kLeaf,
  kConst,
  kMatVec,
  kMatMul,
  kAdd,
  kConcat,
  kRelu,
  kSigmoid,
  kSoftmax,
  kWeightedSum,
  kDot,
  kL2NormSq,
  kScale,
  kBce,
};

/// Reverse-mode tape over dense values. Nodes are appended in evaluation
/// order (so the record is already topologically sorted); values live in one
/// arena that survives reset() to keep steady-state allocation at zero.
///
/// Shapes are tracked as rows x cols: a vector is (n, 1), a scalar (1, 1).
/// Every op validates input shapes and checks its output for NaN/Inf.
class Graph {
 public:
  using NodeId = int;

  NodeId leaf(const double* data, int rows, int cols);
  NodeId leaf(const Tensor& t);
  NodeId constant(const double* data, int rows, int cols);
  NodeId constant_scalar(double v);

  /// y = M x, M is (r x c), x is (c)-vector.
  NodeId matvec(NodeId m, NodeId x);
  /// C = A B, A (r x k), B (k x c).
  NodeId matmul(NodeId a, NodeId b);
  /// Elementwise sum of two same-shape values.
  NodeId add(NodeId a, NodeId b);
  /// Concatenation of column vectors (scalars count as length-1 vectors).
  NodeId concat(std::span<const NodeId> parts);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  /// Max-subtracted softmax over a vector; output sums to 1.
  NodeId softmax(NodeId x);
  /// y = sum_i w_i v_i with w a length-n vector and n same-length vectors.
  NodeId weighted_sum(NodeId w, std::span<const NodeId> vs);
  NodeId dot(NodeId a, NodeId b);
  NodeId l2_norm_sq(NodeId x);
  NodeId scale(NodeId x, double c);
  /// Binary cross-entropy of a probability against a {0,1} label; the
  /// probability is clamped to [1e-12, 1 - 1e-12] before the logs.
  NodeId bce(NodeId prob, double label);

  /// Reverse sweep from a scalar loss node. Fills gradients for every node;
  /// repeated uses of a node accumulate additively. Leaves not reachable
  /// from the loss keep a zero gradient.
  void backward(NodeId loss);

  /// Contract-shaped convenience: gradient tensor per parameter leaf.
  std::unordered_map<NodeId, Tensor> backward_map(NodeId loss);

  std::span<const double> value(NodeId n) const {
    const Node& nd = nodes_[n];
    return {vals_.data() + nd.val_off, static_cast<std::size_t>(nd.rows * nd.cols)};
  }
  /// Valid after backward().
  std::span<const double> grad(NodeId n) const {
    const Node& nd = nodes_[n];
    return {grads_.data() + nd.val_off, static_cast<std::size_t>(nd.rows * nd.cols)};
  }
  Tensor value_tensor(NodeId n) const;
  Tensor grad_tensor(NodeId n) const;

  int rows(NodeId n) const { return nodes_[n].rows; }
  int cols(NodeId n) const { return nodes_[n].cols; }
  std::size_t num_nodes() const { return nodes_.size(); }
  const std::vector<NodeId>& leaves() const { return leaves_; }

  /// Drop all nodes but keep arena capacity.
  void reset();

 private:
  struct Node {
    Op op;
    int rows, cols;
    int val_off;
    int in_begin, in_count;
    double aux;  // scale constant or bce label
  };

  NodeId push(Op op, int rows, int cols, std::span<const NodeId> ins, double aux = 0.0);
  double* out(NodeId n) { return vals_.data() + nodes_[n].val_off; }
  const double* in_val(const Node& nd, int i) const {
    return vals_.data() + nodes_[inputs_[nd.in_begin + i]].val_off;
  }
  void check_finite(NodeId n) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> inputs_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<NodeId> leaves_;
};

}  // namespace mvin
