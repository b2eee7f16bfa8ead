#pragma once

#include <deque>
#include <vector>

#include "laof/tensor.hpp"

namespace laof {

enum class OpKind {
    Leaf,
    MatMul,
    Add,
    Scale,
    Relu,
    Tanh,
    Concat,
    Slice,
    Mean,
    Sum,
    Mse,
    SoftmaxCrossEntropy,
    L2Norm,
    Sub,
    GatherRows,
    StopGrad,
    StraightThrough,
};

/// Reverse-mode autodiff tape. Ops evaluate eagerly as nodes are added, so the
/// node list is always in topological order; backward() walks it once in
/// reverse. Scalars are tensors of shape [1].
///
/// Supported dtypes/ranks are what the models need: rank-1 and rank-2 float32.
/// Every op validates shapes and rejects non-finite outputs.
class Graph {
public:
    using NodeId = int;

    NodeId leaf(Tensor t);

    NodeId matmul(NodeId a, NodeId b);
    /// Same-shape elementwise add, or rank-2 + rank-1 row broadcast (bias).
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, float factor);
    NodeId relu(NodeId a);
    NodeId tanh_op(NodeId a);
    /// Concatenate two rank-2 tensors along axis 0 or 1 (rank-1 along 0).
    NodeId concat(NodeId a, NodeId b, int axis);
    /// Contiguous range [start, start+len) along the given axis.
    NodeId slice(NodeId a, int axis, int start, int len);
    NodeId mean(NodeId a);
    NodeId sum(NodeId a);
    /// Mean over all elements of the squared difference.
    NodeId mse(NodeId a, NodeId b);
    /// Mean over rows of -log softmax(logits)[label]. logits [B,C].
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);
    NodeId l2norm(NodeId a);
    NodeId sub(NodeId a, NodeId b);
    /// Select rows of a rank-2 tensor; backward scatter-adds into the source.
    NodeId gather_rows(NodeId a, std::vector<int> rows);
    /// Identity forward, zero gradient backward.
    NodeId stop_grad(NodeId a);
    /// Forward takes `replacement`'s value bit-for-bit; backward routes the
    /// incoming gradient entirely to `pre` (identity Jacobian) and none to
    /// `replacement`. Shapes must match.
    NodeId straight_through(NodeId pre, NodeId replacement);

    const Tensor& value(NodeId id) const;

    /// Reverse pass from a scalar output. Frees intermediate buffers; only
    /// leaf gradients remain readable. May be called once per graph.
    void backward(NodeId output);

    /// Gradient of the backward() output w.r.t. a requires_grad leaf.
    const Tensor& grad(NodeId leaf_id) const;

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        OpKind op = OpKind::Leaf;
        int a = -1, b = -1;
        Tensor value;
        Tensor grad;           // allocated lazily during backward
        bool needs_grad = false;
        bool grad_alloc = false;
        float factor = 0.0f;   // Scale
        int axis = 0, start = 0, len = 0;  // Concat/Slice
        std::vector<int> indices;          // labels or row indices
    };

    NodeId push(Node n);
    Node& node(NodeId id);
    const Node& node(NodeId id) const;
    void check_id(NodeId id) const;
    void ensure_grad(NodeId id);
    void backprop_node(NodeId id);

    // deque, not vector: value()/grad() hand out references to node tensors,
    // which must survive later node insertions.
    std::deque<Node> nodes_;
    bool backward_ran_ = false;
};

}  // namespace laof
