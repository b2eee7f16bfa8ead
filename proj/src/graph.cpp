#include "laof/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "laof/errors.hpp"

namespace laof {

// ---------------------------------------------------------------------------
// matmul kernels; accumulate into C
// ---------------------------------------------------------------------------

// C[M,N] += A[M,K] * B[K,N]
static void mm_nn(const float* A, const float* B, float* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const float* a_row = A + static_cast<size_t>(i) * K;
        float* c_row = C + static_cast<size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const float a = a_row[k];
            const float* b_row = B + static_cast<size_t>(k) * N;
            for (int j = 0; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C[M,K] += A[M,N] * B[K,N]^T
static void mm_nt(const float* A, const float* B, float* C, int M, int N, int K) {
    for (int i = 0; i < M; ++i) {
        const float* a_row = A + static_cast<size_t>(i) * N;
        float* c_row = C + static_cast<size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const float* b_row = B + static_cast<size_t>(k) * N;
            float s = 0.0f;
#pragma omp simd reduction(+ : s)
            for (int j = 0; j < N; ++j) s += a_row[j] * b_row[j];
            c_row[k] += s;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
static void mm_tn(const float* A, const float* B, float* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const float* a_row = A + static_cast<size_t>(i) * K;
        const float* b_row = B + static_cast<size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const float a = a_row[k];
            float* c_row = C + static_cast<size_t>(k) * N;
            for (int j = 0; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// ---------------------------------------------------------------------------

Graph::NodeId Graph::push(Node n) {
    if (n.op != OpKind::Leaf && n.op != OpKind::StopGrad && !all_finite(n.value)) {
        throw NumericError("non-finite values in output of op node " +
                           std::to_string(nodes_.size()));
    }
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check_id(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
        throw UsageError("invalid graph node id " + std::to_string(id));
    }
}

Graph::Node& Graph::node(NodeId id) { check_id(id); return nodes_[static_cast<size_t>(id)]; }
const Graph::Node& Graph::node(NodeId id) const { check_id(id); return nodes_[static_cast<size_t>(id)]; }

Graph::NodeId Graph::leaf(Tensor t) {
    Node n;
    n.op = OpKind::Leaf;
    n.needs_grad = t.requires_grad;
    n.value = std::move(t);
    return push(std::move(n));
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.rank() != 2 || tb.rank() != 2 || ta.extent(1) != tb.extent(0)) {
        throw ShapeError("matmul shape mismatch: " + ta.shape_str() + " x " + tb.shape_str());
    }
    const int M = ta.extent(0), K = ta.extent(1), N = tb.extent(1);
    Node n;
    n.op = OpKind::MatMul;
    n.a = a;
    n.b = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor::zeros({M, N});
    mm_nn(ta.data.data(), tb.data.data(), n.value.data.data(), M, K, N);
    return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    const bool bias = ta.rank() == 2 && tb.rank() == 1 && ta.extent(1) == tb.extent(0);
    if (!bias && !ta.same_shape(tb)) {
        throw ShapeError("add shape mismatch: " + ta.shape_str() + " + " + tb.shape_str());
    }
    Node n;
    n.op = OpKind::Add;
    n.a = a;
    n.b = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = ta;
    n.value.requires_grad = false;
    if (bias) {
        const int rows = ta.extent(0), cols = ta.extent(1);
        for (int i = 0; i < rows; ++i) {
            float* out = n.value.data.data() + static_cast<size_t>(i) * cols;
            for (int j = 0; j < cols; ++j) out[j] += tb.data[static_cast<size_t>(j)];
        }
    } else {
        for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += tb.data[i];
    }
    return push(std::move(n));
}

Graph::NodeId Graph::scale(NodeId a, float factor) {
    Node n;
    n.op = OpKind::Scale;
    n.a = a;
    n.factor = factor;
    n.needs_grad = node(a).needs_grad;
    n.value = node(a).value;
    n.value.requires_grad = false;
    for (auto& x : n.value.data) x *= factor;
    return push(std::move(n));
}

Graph::NodeId Graph::relu(NodeId a) {
    Node n;
    n.op = OpKind::Relu;
    n.a = a;
    n.needs_grad = node(a).needs_grad;
    n.value = node(a).value;
    n.value.requires_grad = false;
    for (auto& x : n.value.data) x = std::max(x, 0.0f);
    return push(std::move(n));
}

Graph::NodeId Graph::tanh_op(NodeId a) {
    Node n;
    n.op = OpKind::Tanh;
    n.a = a;
    n.needs_grad = node(a).needs_grad;
    n.value = node(a).value;
    n.value.requires_grad = false;
    for (auto& x : n.value.data) x = std::tanh(x);
    return push(std::move(n));
}

Graph::NodeId Graph::concat(NodeId a, NodeId b, int axis) {
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    Node n;
    n.op = OpKind::Concat;
    n.a = a;
    n.b = b;
    n.axis = axis;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    if (ta.rank() == 1 && tb.rank() == 1 && axis == 0) {
        n.value = Tensor::zeros({ta.extent(0) + tb.extent(0)});
        std::copy(ta.data.begin(), ta.data.end(), n.value.data.begin());
        std::copy(tb.data.begin(), tb.data.end(), n.value.data.begin() + ta.numel());
    } else if (ta.rank() == 2 && tb.rank() == 2 && axis == 0 && ta.extent(1) == tb.extent(1)) {
        n.value = Tensor::zeros({ta.extent(0) + tb.extent(0), ta.extent(1)});
        std::copy(ta.data.begin(), ta.data.end(), n.value.data.begin());
        std::copy(tb.data.begin(), tb.data.end(), n.value.data.begin() + ta.numel());
    } else if (ta.rank() == 2 && tb.rank() == 2 && axis == 1 && ta.extent(0) == tb.extent(0)) {
        const int rows = ta.extent(0), ca = ta.extent(1), cb = tb.extent(1);
        n.value = Tensor::zeros({rows, ca + cb});
        for (int i = 0; i < rows; ++i) {
            std::memcpy(&n.value.at(i, 0), &ta.at(i, 0), sizeof(float) * static_cast<size_t>(ca));
            std::memcpy(&n.value.at(i, ca), &tb.at(i, 0), sizeof(float) * static_cast<size_t>(cb));
        }
    } else {
        throw ShapeError("concat shape mismatch on axis " + std::to_string(axis) + ": " +
                         ta.shape_str() + " | " + tb.shape_str());
    }
    return push(std::move(n));
}

Graph::NodeId Graph::slice(NodeId a, int axis, int start, int len) {
    const Tensor& ta = node(a).value;
    if (axis < 0 || axis >= ta.rank() || start < 0 || len <= 0 ||
        start + len > ta.extent(axis)) {
        throw ShapeError("slice range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds on axis " +
                         std::to_string(axis) + " of " + ta.shape_str());
    }
    Node n;
    n.op = OpKind::Slice;
    n.a = a;
    n.axis = axis;
    n.start = start;
    n.len = len;
    n.needs_grad = node(a).needs_grad;
    if (ta.rank() == 1) {
        n.value = Tensor::zeros({len});
        std::copy(ta.data.begin() + start, ta.data.begin() + start + len, n.value.data.begin());
    } else if (ta.rank() == 2 && axis == 0) {
        const int cols = ta.extent(1);
        n.value = Tensor::zeros({len, cols});
        std::copy(ta.data.begin() + static_cast<int64_t>(start) * cols,
                  ta.data.begin() + static_cast<int64_t>(start + len) * cols,
                  n.value.data.begin());
    } else if (ta.rank() == 2 && axis == 1) {
        const int rows = ta.extent(0);
        n.value = Tensor::zeros({rows, len});
        for (int i = 0; i < rows; ++i) {
            std::memcpy(&n.value.at(i, 0), &ta.at(i, start), sizeof(float) * static_cast<size_t>(len));
        }
    } else {
        throw ShapeError("slice supports rank 1 and 2 tensors, got " + ta.shape_str());
    }
    return push(std::move(n));
}

Graph::NodeId Graph::mean(NodeId a) {
    const Tensor& ta = node(a).value;
    Node n;
    n.op = OpKind::Mean;
    n.a = a;
    n.needs_grad = node(a).needs_grad;
    double acc = 0.0;
    for (float x : ta.data) acc += x;
    n.value = Tensor({1}, {static_cast<float>(acc / static_cast<double>(ta.numel()))});
    return push(std::move(n));
}

Graph::NodeId Graph::sum(NodeId a) {
    const Tensor& ta = node(a).value;
    Node n;
    n.op = OpKind::Sum;
    n.a = a;
    n.needs_grad = node(a).needs_grad;
    double acc = 0.0;
    for (float x : ta.data) acc += x;
    n.value = Tensor({1}, {static_cast<float>(acc)});
    return push(std::move(n));
}

Graph::NodeId Graph::mse(NodeId a, NodeId b) {
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (!ta.same_shape(tb)) {
        throw ShapeError("mse shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Node n;
    n.op = OpKind::Mse;
    n.a = a;
    n.b = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    double acc = 0.0;
    for (size_t i = 0; i < ta.data.size(); ++i) {
        const double d = static_cast<double>(ta.data[i]) - static_cast<double>(tb.data[i]);
        acc += d * d;
    }
    n.value = Tensor({1}, {static_cast<float>(acc / static_cast<double>(ta.numel()))});
    return push(std::move(n));
}

Graph::NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Tensor& tl = node(logits).value;
    if (tl.rank() != 2) throw ShapeError("softmax_cross_entropy expects rank-2 logits");
    const int rows = tl.extent(0), cols = tl.extent(1);
    if (static_cast<int>(labels.size()) != rows) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
    }
    for (int y : labels) {
        if (y < 0 || y >= cols) throw UsageError("label " + std::to_string(y) + " out of range");
    }
    Node n;
    n.op = OpKind::SoftmaxCrossEntropy;
    n.a = logits;
    n.needs_grad = node(logits).needs_grad;
    n.indices = std::move(labels);
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) {
        const float* row = tl.data.data() + static_cast<size_t>(i) * cols;
        float hi = row[0];
        for (int j = 1; j < cols; ++j) hi = std::max(hi, row[j]);
        double lse = 0.0;
        for (int j = 0; j < cols; ++j) lse += std::exp(static_cast<double>(row[j] - hi));
        lse = std::log(lse) + hi;
        acc += lse - row[n.indices[static_cast<size_t>(i)]];
    }
    n.value = Tensor({1}, {static_cast<float>(acc / rows)});
    return push(std::move(n));
}

Graph::NodeId Graph::l2norm(NodeId a) {
    const Tensor& ta = node(a).value;
    Node n;
    n.op = OpKind::L2Norm;
    n.a = a;
    n.needs_grad = node(a).needs_grad;
    double acc = 0.0;
    for (float x : ta.data) acc += static_cast<double>(x) * x;
    n.value = Tensor({1}, {static_cast<float>(std::sqrt(acc))});
    return push(std::move(n));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (!ta.same_shape(tb)) {
        throw ShapeError("sub shape mismatch: " + ta.shape_str() + " - " + tb.shape_str());
    }
    Node n;
    n.op = OpKind::Sub;
    n.a = a;
    n.b = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = ta;
    n.value.requires_grad = false;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] -= tb.data[i];
    return push(std::move(n));
}

Graph::NodeId Graph::gather_rows(NodeId a, std::vector<int> rows) {
    const Tensor& ta = node(a).value;
    if (ta.rank() != 2) throw ShapeError("gather_rows expects a rank-2 tensor");
    const int nrows = ta.extent(0), cols = ta.extent(1);
    for (int r : rows) {
        if (r < 0 || r >= nrows) throw UsageError("gather_rows index " + std::to_string(r) + " out of range");
    }
    Node n;
    n.op = OpKind::GatherRows;
    n.a = a;
    n.needs_grad = node(a).needs_grad;
    n.indices = std::move(rows);
    n.value = Tensor::zeros({static_cast<int>(n.indices.size()), cols});
    for (size_t i = 0; i < n.indices.size(); ++i) {
        std::memcpy(&n.value.at(static_cast<int>(i), 0), &ta.at(n.indices[i], 0),
                    sizeof(float) * static_cast<size_t>(cols));
    }
    return push(std::move(n));
}

Graph::NodeId Graph::stop_grad(NodeId a) {
    Node n;
    n.op = OpKind::StopGrad;
    n.a = a;
    n.needs_grad = false;
    n.value = node(a).value;
    n.value.requires_grad = false;
    return push(std::move(n));
}

Graph::NodeId Graph::straight_through(NodeId pre, NodeId replacement) {
    const Tensor& tp = node(pre).value;
    const Tensor& tr = node(replacement).value;
    if (!tp.same_shape(tr)) {
        throw ShapeError("straight_through: shapes differ, " + tp.shape_str() + " vs " +
                         tr.shape_str());
    }
    Node n;
    n.op = OpKind::StraightThrough;
    n.a = pre;
    n.b = replacement;
    n.needs_grad = node(pre).needs_grad;
    n.value = tr;
    return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const {
    const Node& n = node(id);
    if (backward_ran_ && n.op != OpKind::Leaf) {
        throw StateError("op values are freed after backward; read them before");
    }
    return n.value;
}

void Graph::ensure_grad(NodeId id) {
    Node& n = node(id);
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_alloc = true;
    }
}

void Graph::backward(NodeId output) {
    if (backward_ran_) throw StateError("backward already ran on this graph");
    const Node& out = node(output);
    if (out.value.numel() != 1) {
        throw UsageError("backward requires a scalar output, got " + out.value.shape_str());
    }
    backward_ran_ = true;
    ensure_grad(output);
    node(output).grad.data[0] = 1.0f;
    for (NodeId id = output; id >= 0; --id) {
        Node& n = node(id);
        if (!n.needs_grad || !n.grad_alloc) continue;
        backprop_node(id);
    }
    // Free intermediates: values and gradients of all op nodes. Leaf values and
    // leaf gradients stay readable.
    for (auto& n : nodes_) {
        if (n.op != OpKind::Leaf) {
            n.value.data.clear();
            n.value.data.shrink_to_fit();
            n.grad.data.clear();
            n.grad.data.shrink_to_fit();
            n.grad_alloc = false;
        }
    }
}

void Graph::backprop_node(NodeId id) {
    Node& n = node(id);
    const Tensor& g = n.grad;
    auto want = [&](NodeId src) { return src >= 0 && node(src).needs_grad; };
    auto acc = [&](NodeId src) -> Tensor& {
        ensure_grad(src);
        return node(src).grad;
    };

    switch (n.op) {
        case OpKind::Leaf:
        case OpKind::StopGrad:
            break;
        case OpKind::StraightThrough: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
            }
            break;
        }
        case OpKind::MatMul: {
            const Tensor& ta = node(n.a).value;
            const Tensor& tb = node(n.b).value;
            const int M = ta.extent(0), K = ta.extent(1), N = tb.extent(1);
            if (want(n.a)) {
                mm_nt(g.data.data(), tb.data.data(), acc(n.a).data.data(), M, N, K);
            }
            if (want(n.b)) {
                mm_tn(ta.data.data(), g.data.data(), acc(n.b).data.data(), M, K, N);
            }
            break;
        }
        case OpKind::Add: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (want(n.b)) {
                Tensor& gb = acc(n.b);
                if (gb.rank() == 1 && g.rank() == 2) {
                    const int rows = g.extent(0), cols = g.extent(1);
                    for (int i = 0; i < rows; ++i) {
                        const float* row = g.data.data() + static_cast<size_t>(i) * cols;
                        for (int j = 0; j < cols; ++j) gb.data[static_cast<size_t>(j)] += row[j];
                    }
                } else {
                    for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[i];
                }
            }
            break;
        }
        case OpKind::Scale: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += n.factor * g.data[i];
            }
            break;
        }
        case OpKind::Relu: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                const Tensor& x = node(n.a).value;
                for (size_t i = 0; i < ga.data.size(); ++i) {
                    if (x.data[i] > 0.0f) ga.data[i] += g.data[i];
                }
            }
            break;
        }
        case OpKind::Tanh: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                const Tensor& y = n.value;
                for (size_t i = 0; i < ga.data.size(); ++i) {
                    ga.data[i] += g.data[i] * (1.0f - y.data[i] * y.data[i]);
                }
            }
            break;
        }
        case OpKind::Concat: {
            const Tensor& ta = node(n.a).value;
            const Tensor& tb = node(n.b).value;
            if (n.axis == 0 || g.rank() == 1) {
                if (want(n.a)) {
                    Tensor& ga = acc(n.a);
                    for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
                }
                if (want(n.b)) {
                    Tensor& gb = acc(n.b);
                    const size_t off = ta.data.size();
                    for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[off + i];
                }
            } else {
                const int rows = g.extent(0), ca = ta.extent(1), cb = tb.extent(1);
                if (want(n.a)) {
                    Tensor& ga = acc(n.a);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
                }
                if (want(n.b)) {
                    Tensor& gb = acc(n.b);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
                }
            }
            break;
        }
        case OpKind::Slice: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                const Tensor& ta = node(n.a).value;
                if (ta.rank() == 1) {
                    for (int i = 0; i < n.len; ++i) ga.data[static_cast<size_t>(n.start + i)] += g.data[static_cast<size_t>(i)];
                } else if (n.axis == 0) {
                    const int cols = ta.extent(1);
                    for (int i = 0; i < n.len; ++i)
                        for (int j = 0; j < cols; ++j) ga.at(n.start + i, j) += g.at(i, j);
                } else {
                    const int rows = ta.extent(0);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < n.len; ++j) ga.at(i, n.start + j) += g.at(i, j);
                }
            }
            break;
        }
        case OpKind::Mean: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                const float s = g.data[0] / static_cast<float>(ga.numel());
                for (auto& x : ga.data) x += s;
            }
            break;
        }
        case OpKind::Sum: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                const float s = g.data[0];
                for (auto& x : ga.data) x += s;
            }
            break;
        }
        case OpKind::Mse: {
            const Tensor& ta = node(n.a).value;
            const Tensor& tb = node(n.b).value;
            const float s = 2.0f * g.data[0] / static_cast<float>(ta.numel());
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += s * (ta.data[i] - tb.data[i]);
            }
            if (want(n.b)) {
                Tensor& gb = acc(n.b);
                for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= s * (ta.data[i] - tb.data[i]);
            }
            break;
        }
        case OpKind::SoftmaxCrossEntropy: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                const Tensor& tl = node(n.a).value;
                const int rows = tl.extent(0), cols = tl.extent(1);
                const float s = g.data[0] / static_cast<float>(rows);
                for (int i = 0; i < rows; ++i) {
                    const float* row = tl.data.data() + static_cast<size_t>(i) * cols;
                    float hi = row[0];
                    for (int j = 1; j < cols; ++j) hi = std::max(hi, row[j]);
                    double z = 0.0;
                    for (int j = 0; j < cols; ++j) z += std::exp(static_cast<double>(row[j] - hi));
                    for (int j = 0; j < cols; ++j) {
                        const float p = static_cast<float>(std::exp(static_cast<double>(row[j] - hi)) / z);
                        const float onehot = (j == n.indices[static_cast<size_t>(i)]) ? 1.0f : 0.0f;
                        ga.at(i, j) += s * (p - onehot);
                    }
                }
            }
            break;
        }
        case OpKind::L2Norm: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                const Tensor& ta = node(n.a).value;
                const float norm = n.value.data[0];
                if (norm > 0.0f) {
                    const float s = g.data[0] / norm;
                    for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += s * ta.data[i];
                }
            }
            break;
        }
        case OpKind::Sub: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (want(n.b)) {
                Tensor& gb = acc(n.b);
                for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
            }
            break;
        }
        case OpKind::GatherRows: {
            if (want(n.a)) {
                Tensor& ga = acc(n.a);
                const int cols = ga.extent(1);
                for (size_t i = 0; i < n.indices.size(); ++i) {
                    const float* src = g.data.data() + i * static_cast<size_t>(cols);
                    float* dst = &ga.at(n.indices[i], 0);
                    for (int j = 0; j < cols; ++j) dst[j] += src[j];
                }
            }
            break;
        }
    }
}

const Tensor& Graph::grad(NodeId leaf_id) const {
    if (!backward_ran_) throw StateError("grad requested before backward");
    const Node& n = node(leaf_id);
    if (n.op != OpKind::Leaf || !n.needs_grad) {
        throw UsageError("grad is only available for requires_grad leaves");
    }
    if (!n.grad_alloc) {
        // Leaf never touched by the backward sweep: gradient is zero.
        const_cast<Node&>(n).grad = Tensor::zeros(n.value.shape);
        const_cast<Node&>(n).grad_alloc = true;
    }
    return n.grad;
}

}  // namespace laof
