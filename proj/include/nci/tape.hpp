#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "nci/common.hpp"
#include "nci/tensor.hpp"

namespace nci {

// Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before any log.
inline constexpr double PROB_EPS = 1e-12;

inline double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double clamp_prob(double p) {
    if (p < PROB_EPS) return PROB_EPS;
    if (p > 1.0 - PROB_EPS) return 1.0 - PROB_EPS;
    return p;
}

enum class Op {
    leaf,
    add,
    mul,
    matmul,
    relu,
    tanh_fn,
    sigmoid_fn,
    log_fn,
    softmax_xent,
    bce,
    sum,
    scale,
    concat_cols,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::add: return "add";
        case Op::mul: return "mul";
        case Op::matmul: return "matmul";
        case Op::relu: return "relu";
        case Op::tanh_fn: return "tanh";
        case Op::sigmoid_fn: return "sigmoid";
        case Op::log_fn: return "log";
        case Op::softmax_xent: return "softmax_xent";
        case Op::bce: return "bce";
        case Op::sum: return "sum";
        case Op::scale: return "scale";
        case Op::concat_cols: return "concat_cols";
    }
    return "?";
}

// Reverse-mode tape. Nodes are appended in creation order, which is a
// topological order by construction (an op may only reference existing ids),
// so backward() is a single reverse sweep that visits each node exactly once.
class Tape {
  public:
    struct Node {
        Op op = Op::leaf;
        int a = -1;
        int b = -1;
        Tensor value;
        Tensor grad;                 // allocated lazily by backward()
        std::vector<int> labels;     // softmax_xent: class index per row
        std::vector<double> targets; // bce: 0/1 target per element
        std::vector<double> saved;   // op-specific activations for backward
        double c = 0.0;              // scale factor
    };

    void reserve(std::size_t n) { nodes_.reserve(n); }
    std::size_t size() const { return nodes_.size(); }

    const Tensor& value(int id) const { return node(id).value; }
    const Tensor& grad(int id) const { return node(id).grad; }

    int leaf(Tensor v) {
        Node n;
        n.op = Op::leaf;
        n.value = std::move(v);
        return push(std::move(n));
    }

    // add/mul accept equal shapes, or matrix [N,D] with vector [D] broadcast
    // across rows (the only broadcast: over the leading batch dimension).
    int add(int a, int b) { return binary_elementwise(Op::add, a, b); }
    int mul(int a, int b) { return binary_elementwise(Op::mul, a, b); }

    int matmul(int a, int b) {
        const Tensor& A = value_checked(a, "matmul lhs");
        const Tensor& B = value_checked(b, "matmul rhs");
        if (A.rank() != 2 || B.rank() != 2)
            throw ShapeError("matmul expects rank-2 operands, got " + A.shape_str() + " x " + B.shape_str());
        if (A.shape[1] != B.shape[0])
            throw ShapeError("matmul inner dimensions differ: " + A.shape_str() + " x " + B.shape_str());
        const std::size_t N = A.shape[0], K = A.shape[1], M = B.shape[1];
        Node n;
        n.op = Op::matmul;
        n.a = a;
        n.b = b;
        n.value = Tensor({N, M});
        for (std::size_t i = 0; i < N; ++i) {
            const double* arow = &A.data[i * K];
            double* orow = &n.value.data[i * M];
            for (std::size_t k = 0; k < K; ++k) {
                const double av = arow[k];
                if (av == 0.0) continue;
                const double* brow = &B.data[k * M];
                for (std::size_t j = 0; j < M; ++j) orow[j] += av * brow[j];
            }
        }
        return push(std::move(n));
    }

    int relu(int a) {
        return unary(Op::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
    }

    int tanh_fn(int a) {
        return unary(Op::tanh_fn, a, [](double x) { return std::tanh(x); });
    }

    int sigmoid_fn(int a) {
        return unary(Op::sigmoid_fn, a, [](double x) { return stable_sigmoid(x); });
    }

    // log clamps its input below at PROB_EPS so finite inputs always produce a
    // finite value; backward differentiates at the clamped point.
    int log_fn(int a) {
        const Tensor& A = value_checked(a, "log input");
        Node n;
        n.op = Op::log_fn;
        n.a = a;
        n.value = Tensor(A.shape);
        n.saved.resize(A.numel());
        for (std::size_t i = 0; i < A.numel(); ++i) {
            const double xc = A.data[i] < PROB_EPS ? PROB_EPS : A.data[i];
            n.saved[i] = xc;
            n.value.data[i] = std::log(xc);
        }
        return push(std::move(n));
    }

    // Mean softmax cross-entropy over the batch, computed with log-sum-exp.
    // labels[i] is the class index of row i.
    int softmax_xent(int logits, const std::vector<int>& labels) {
        const Tensor& Z = value_checked(logits, "softmax_xent logits");
        if (Z.rank() != 2)
            throw ShapeError("softmax_xent expects rank-2 logits, got " + Z.shape_str());
        const std::size_t N = Z.shape[0], C = Z.shape[1];
        if (labels.size() != N)
            throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(N) + " rows");
        Node n;
        n.op = Op::softmax_xent;
        n.a = logits;
        n.labels = labels;
        n.saved.resize(N * C);  // softmax probabilities
        double total = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double* z = &Z.data[i * C];
            const int y = labels[i];
            if (y < 0 || static_cast<std::size_t>(y) >= C)
                throw ValueError("softmax_xent: label " + std::to_string(y) + " out of range for " +
                                 std::to_string(C) + " classes");
            double m = z[0];
            for (std::size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) s += std::exp(z[c] - m);
            const double lse = m + std::log(s);
            for (std::size_t c = 0; c < C; ++c) n.saved[i * C + c] = std::exp(z[c] - m) / s;
            total += lse - z[y];
        }
        n.value = Tensor::scalar(total / static_cast<double>(N));
        return push(std::move(n));
    }

    // Mean binary cross-entropy of probabilities against 0/1 targets.
    // Probabilities are clamped before the logs; backward uses the clamped value.
    int bce(int probs, const std::vector<double>& targets) {
        const Tensor& P = value_checked(probs, "bce probabilities");
        if (P.numel() != targets.size())
            throw ShapeError("bce: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(P.numel()) + " probabilities");
        if (P.numel() == 0) throw ShapeError("bce: empty input");
        Node n;
        n.op = Op::bce;
        n.a = probs;
        n.targets = targets;
        n.saved.resize(P.numel());
        double total = 0.0;
        for (std::size_t i = 0; i < P.numel(); ++i) {
            const double pc = clamp_prob(P.data[i]);
            n.saved[i] = pc;
            const double y = targets[i];
            total += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
        }
        n.value = Tensor::scalar(total / static_cast<double>(P.numel()));
        return push(std::move(n));
    }

    int sum(int a) {
        const Tensor& A = value_checked(a, "sum input");
        Node n;
        n.op = Op::sum;
        n.a = a;
        double s = 0.0;
        for (double v : A.data) s += v;
        n.value = Tensor::scalar(s);
        return push(std::move(n));
    }

    int scale(int a, double c) {
        const Tensor& A = value_checked(a, "scale input");
        Node n;
        n.op = Op::scale;
        n.a = a;
        n.c = c;
        n.value = Tensor(A.shape);
        for (std::size_t i = 0; i < A.numel(); ++i) n.value.data[i] = c * A.data[i];
        return push(std::move(n));
    }

    int concat_cols(int a, int b) {
        const Tensor& A = value_checked(a, "concat_cols lhs");
        const Tensor& B = value_checked(b, "concat_cols rhs");
        if (A.rank() != 2 || B.rank() != 2 || A.shape[0] != B.shape[0])
            throw ShapeError("concat_cols expects rank-2 operands with equal rows, got " + A.shape_str() +
                             " and " + B.shape_str());
        const std::size_t N = A.shape[0], P = A.shape[1], Q = B.shape[1];
        Node n;
        n.op = Op::concat_cols;
        n.a = a;
        n.b = b;
        n.value = Tensor({N, P + Q});
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = 0; j < P; ++j) n.value.data[i * (P + Q) + j] = A.data[i * P + j];
            for (std::size_t j = 0; j < Q; ++j) n.value.data[i * (P + Q) + P + j] = B.data[i * Q + j];
        }
        return push(std::move(n));
    }

    // Accumulates gradients of a scalar root into every node reachable from it.
    // Leaves that do not feed the root keep an all-zero gradient.
    void backward(int root) {
        const Tensor& rv = value_checked(root, "backward root");
        if (!rv.is_scalar())
            throw ContractError("backward root must be scalar, got shape " + rv.shape_str());
        for (auto& n : nodes_) {
            n.grad = Tensor(n.value.shape);
        }
        nodes_[static_cast<std::size_t>(root)].grad.data[0] = 1.0;
        for (int id = root; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.op == Op::leaf) continue;
            const Tensor& g = n.grad;
            switch (n.op) {
                case Op::add: {
                    accumulate_broadcast(n.a, g);
                    accumulate_broadcast(n.b, g);
                    break;
                }
                case Op::mul: {
                    const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
                    const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
                    Tensor ga(g.shape), gb(g.shape);
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        ga.data[i] = g.data[i] * broadcast_read(B, g, i);
                        gb.data[i] = g.data[i] * broadcast_read(A, g, i);
                    }
                    accumulate_broadcast(n.a, ga);
                    accumulate_broadcast(n.b, gb);
                    break;
                }
                case Op::matmul: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    Node& nb = nodes_[static_cast<std::size_t>(n.b)];
                    const Tensor& A = na.value;
                    const Tensor& B = nb.value;
                    const std::size_t N = A.shape[0], K = A.shape[1], M = B.shape[1];
                    for (std::size_t i = 0; i < N; ++i) {
                        const double* grow = &g.data[i * M];
                        double* garow = &na.grad.data[i * K];
                        for (std::size_t k = 0; k < K; ++k) {
                            const double* brow = &B.data[k * M];
                            double acc = 0.0;
                            for (std::size_t j = 0; j < M; ++j) acc += grow[j] * brow[j];
                            garow[k] += acc;
                        }
                        const double* arow = &A.data[i * K];
                        for (std::size_t k = 0; k < K; ++k) {
                            const double av = arow[k];
                            if (av == 0.0) continue;
                            double* gbrow = &nb.grad.data[k * M];
                            for (std::size_t j = 0; j < M; ++j) gbrow[j] += av * grow[j];
                        }
                    }
                    break;
                }
                case Op::relu: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        if (na.value.data[i] > 0.0) na.grad.data[i] += g.data[i];
                    break;
                }
                case Op::tanh_fn: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        const double t = n.value.data[i];
                        na.grad.data[i] += g.data[i] * (1.0 - t * t);
                    }
                    break;
                }
                case Op::sigmoid_fn: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        const double s = n.value.data[i];
                        na.grad.data[i] += g.data[i] * s * (1.0 - s);
                    }
                    break;
                }
                case Op::log_fn: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    for (std::size_t i = 0; i < g.numel(); ++i) na.grad.data[i] += g.data[i] / n.saved[i];
                    break;
                }
                case Op::softmax_xent: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    const std::size_t N = na.value.shape[0], C = na.value.shape[1];
                    const double go = g.data[0] / static_cast<double>(N);
                    for (std::size_t i = 0; i < N; ++i)
                        for (std::size_t c = 0; c < C; ++c) {
                            double d = n.saved[i * C + c];
                            if (static_cast<int>(c) == n.labels[i]) d -= 1.0;
                            na.grad.data[i * C + c] += go * d;
                        }
                    break;
                }
                case Op::bce: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    const double go = g.data[0] / static_cast<double>(na.value.numel());
                    for (std::size_t i = 0; i < na.value.numel(); ++i) {
                        const double pc = n.saved[i];
                        const double y = n.targets[i];
                        na.grad.data[i] += go * ((1.0 - y) / (1.0 - pc) - y / pc);
                    }
                    break;
                }
                case Op::sum: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    for (std::size_t i = 0; i < na.value.numel(); ++i) na.grad.data[i] += g.data[0];
                    break;
                }
                case Op::scale: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    for (std::size_t i = 0; i < g.numel(); ++i) na.grad.data[i] += n.c * g.data[i];
                    break;
                }
                case Op::concat_cols: {
                    Node& na = nodes_[static_cast<std::size_t>(n.a)];
                    Node& nb = nodes_[static_cast<std::size_t>(n.b)];
                    const std::size_t N = na.value.shape[0];
                    const std::size_t P = na.value.shape[1], Q = nb.value.shape[1];
                    for (std::size_t i = 0; i < N; ++i) {
                        for (std::size_t j = 0; j < P; ++j) na.grad.data[i * P + j] += g.data[i * (P + Q) + j];
                        for (std::size_t j = 0; j < Q; ++j) nb.grad.data[i * Q + j] += g.data[i * (P + Q) + P + j];
                    }
                    break;
                }
                case Op::leaf:
                    break;
            }
        }
    }

  private:
    std::vector<Node> nodes_;

    const Node& node(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw ContractError("tape node id " + std::to_string(id) + " out of range");
        return nodes_[static_cast<std::size_t>(id)];
    }

    const Tensor& value_checked(int id, const char* what) {
        const Tensor& v = node(id).value;
        if (v.rank() > 2) throw ShapeError(std::string(what) + ": rank > 2 unsupported");
        return v;
    }

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    template <typename F>
    int unary(Op op, int a, F f) {
        const Tensor& A = value_checked(a, op_name(op));
        Node n;
        n.op = op;
        n.a = a;
        n.value = Tensor(A.shape);
        for (std::size_t i = 0; i < A.numel(); ++i) n.value.data[i] = f(A.data[i]);
        return push(std::move(n));
    }

    static bool row_broadcastable(const Tensor& big, const Tensor& small) {
        return big.rank() == 2 && small.rank() == 1 && big.shape[1] == small.shape[0];
    }

    int binary_elementwise(Op op, int a, int b) {
        const Tensor& A = value_checked(a, op_name(op));
        const Tensor& B = value_checked(b, op_name(op));
        const bool bcast = row_broadcastable(A, B);
        if (!A.same_shape(B) && !bcast)
            throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + A.shape_str() + " and " +
                             B.shape_str() + " (only [N,D] op [D] broadcasts)");
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.value = Tensor(A.shape);
        const std::size_t cols = bcast ? A.shape[1] : 0;
        for (std::size_t i = 0; i < A.numel(); ++i) {
            const double bv = bcast ? B.data[i % cols] : B.data[i];
            n.value.data[i] = (op == Op::add) ? A.data[i] + bv : A.data[i] * bv;
        }
        return push(std::move(n));
    }

    // Reads B at flat index i of the (possibly bigger) reference tensor.
    static double broadcast_read(const Tensor& B, const Tensor& ref, std::size_t i) {
        if (B.numel() == ref.numel()) return B.data[i];
        return B.data[i % B.shape[0]];  // [D] broadcast over [N,D]
    }

    // Adds g (shaped like the node output) into input id, reducing over the
    // batch dimension when the input was row-broadcast.
    void accumulate_broadcast(int id, const Tensor& g) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.value.numel() == g.numel()) {
            for (std::size_t i = 0; i < g.numel(); ++i) n.grad.data[i] += g.data[i];
            return;
        }
        const std::size_t D = n.value.shape[0];
        for (std::size_t i = 0; i < g.numel(); ++i) n.grad.data[i % D] += g.data[i];
    }
};

// Uniform entry point mirroring the op table; handy for table-driven tests.
inline int forward_op(Tape& t, Op op, int a, int b = -1) {
    switch (op) {
        case Op::add: return t.add(a, b);
        case Op::mul: return t.mul(a, b);
        case Op::matmul: return t.matmul(a, b);
        case Op::relu: return t.relu(a);
        case Op::tanh_fn: return t.tanh_fn(a);
        case Op::sigmoid_fn: return t.sigmoid_fn(a);
        case Op::log_fn: return t.log_fn(a);
        case Op::sum: return t.sum(a);
        case Op::concat_cols: return t.concat_cols(a, b);
        default: throw ContractError(std::string("forward_op: ") + op_name(op) + " needs a dedicated call");
    }
}

}  // namespace nci
