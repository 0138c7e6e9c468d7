// Tape-based reverse-mode automatic differentiation over Tensor.
//
// A Graph owns two regions of nodes: named trainable parameters, registered
// once and persistent across iterations, and tape nodes recorded during a
// forward pass. backward() runs reverse accumulation over the tape and leaves
// per-parameter gradients in the parameter nodes; clear_tape() drops the tape
// and zeroes those accumulators. Node ids are indices, so creation order is a
// topological order and the tape is acyclic by construction.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rulkit/tensor.hpp"

namespace rulkit {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
    Param,
    Input,
    MatMul,
    Add,
    AddConst,
    Mul,
    Scale,
    Tanh,
    Sigmoid,
    LogClamped,
    ConcatCols,
    SliceCols,
    SumAll,
    MeanAll,
    SumSquares,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Param: return "param";
        case Op::Input: return "input";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::AddConst: return "add_const";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::LogClamped: return "log";
        case Op::ConcatCols: return "concat";
        case Op::SliceCols: return "slice";
        case Op::SumAll: return "sum";
        case Op::MeanAll: return "mean";
        case Op::SumSquares: return "sum_squares";
    }
    return "?";
}

class Graph {
public:
    struct Node {
        Op op = Op::Input;
        NodeId a = 0, b = 0;
        double scalar = 0.0;        // Scale factor / AddConst value / log eps
        std::size_t c0 = 0, c1 = 0; // slice range
        Tensor value;
        Tensor grad;
    };

    /// Register a persistent named parameter. Must precede any tape node.
    NodeId param(const std::string& name, Tensor init) {
        if (nodes_.size() != tape_start_)
            throw Error("graph: parameters must be registered before recording a tape");
        if (param_ids_.count(name))
            throw Error("graph: duplicate parameter '" + name + "'");
        Node n;
        n.op = Op::Param;
        n.value = std::move(init);
        n.grad = Tensor(n.value.rows(), n.value.cols());
        nodes_.push_back(std::move(n));
        NodeId id = static_cast<NodeId>(nodes_.size() - 1);
        param_ids_[name] = id;
        param_names_.push_back(name);
        tape_start_ = nodes_.size();
        return id;
    }

    NodeId input(Tensor value) {
        Node n;
        n.op = Op::Input;
        n.value = std::move(value);
        return push(std::move(n));
    }

    NodeId matmul(NodeId a, NodeId b) { return binary(Op::MatMul, a, b, tk::matmul(val(a), val(b))); }
    NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b, tk::add(val(a), val(b))); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b, tk::mul(val(a), val(b))); }

    NodeId add_const(NodeId a, double v) {
        Node n = unary(Op::AddConst, a, tk::add_const(val(a), v));
        n.scalar = v;
        return push(std::move(n));
    }
    NodeId scale(NodeId a, double s) {
        Node n = unary(Op::Scale, a, tk::scale(val(a), s));
        n.scalar = s;
        return push(std::move(n));
    }
    NodeId tanh(NodeId a) { return push(unary(Op::Tanh, a, tk::tanh(val(a)))); }
    NodeId sigmoid(NodeId a) { return push(unary(Op::Sigmoid, a, tk::sigmoid(val(a)))); }
    NodeId log_clamped(NodeId a, double eps = 1e-12) {
        Node n = unary(Op::LogClamped, a, tk::log_clamped(val(a), eps));
        n.scalar = eps;
        return push(std::move(n));
    }
    NodeId concat_cols(NodeId a, NodeId b) {
        return binary(Op::ConcatCols, a, b, tk::concat_cols(val(a), val(b)));
    }
    NodeId slice_cols(NodeId a, std::size_t c0, std::size_t c1) {
        Node n = unary(Op::SliceCols, a, tk::slice_cols(val(a), c0, c1));
        n.c0 = c0;
        n.c1 = c1;
        return push(std::move(n));
    }
    NodeId sum_all(NodeId a) { return push(unary(Op::SumAll, a, tk::sum_all(val(a)))); }
    NodeId mean_all(NodeId a) { return push(unary(Op::MeanAll, a, tk::mean_all(val(a)))); }
    NodeId sum_squares(NodeId a) { return push(unary(Op::SumSquares, a, tk::sum_squares(val(a)))); }

    const Tensor& val(NodeId id) const { return nodes_[id].value; }
    double scalar_val(NodeId id) const { return nodes_[id].value.data[0]; }

    bool is_param(NodeId id) const { return nodes_[id].op == Op::Param; }

    NodeId param_id(const std::string& name) const {
        auto it = param_ids_.find(name);
        if (it == param_ids_.end()) throw Error("graph: unknown parameter '" + name + "'");
        return it->second;
    }
    bool has_param(const std::string& name) const { return param_ids_.count(name) != 0; }
    Tensor& param_value(const std::string& name) { return nodes_[param_id(name)].value; }
    const Tensor& param_grad(const std::string& name) const { return nodes_[param_id(name)].grad; }
    const std::vector<std::string>& param_names() const { return param_names_; }

    /// Reverse accumulation from a scalar loss node. Parameters not reached
    /// by the tape keep their zeroed accumulators.
    void backward(NodeId loss) {
        const Tensor& lv = nodes_[loss].value;
        if (lv.size() != 1)
            throw Error("backward: loss must be scalar, got shape " + shape_str(lv.shape));
        for (std::size_t i = tape_start_; i < nodes_.size(); ++i) {
            Node& n = nodes_[i];
            n.grad = Tensor(n.value.rows(), n.value.cols());
        }
        nodes_[loss].grad.data[0] = 1.0;

        for (std::size_t i = nodes_.size(); i-- > tape_start_;) {
            Node& n = nodes_[i];
            const Tensor& g = n.grad;
            switch (n.op) {
                case Op::Param:
                case Op::Input:
                    break;
                case Op::MatMul:
                    tk::matmul_acc_agrad(grad(n.a), g, nodes_[n.b].value);
                    tk::matmul_acc_bgrad(grad(n.b), nodes_[n.a].value, g);
                    break;
                case Op::Add: {
                    tk::map(grad(n.a)) += tk::map(g);
                    Tensor& gb = grad(n.b);
                    if (gb.same_shape(g)) {
                        tk::map(gb) += tk::map(g);
                    } else {  // (1 x c) bias broadcast; accumulate rows in order
                        for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t c = 0; c < g.cols(); ++c)
                                gb.data[c] += g.at(r, c);
                    }
                    break;
                }
                case Op::AddConst:
                    tk::map(grad(n.a)) += tk::map(g);
                    break;
                case Op::Mul: {
                    const Tensor& av = nodes_[n.a].value;
                    const Tensor& bv = nodes_[n.b].value;
                    Tensor& ga = grad(n.a);
                    Tensor& gb = grad(n.b);
                    if (av.same_shape(bv)) {
                        tk::map(ga).array() += tk::map(g).array() * tk::map(bv).array();
                        tk::map(gb).array() += tk::map(g).array() * tk::map(av).array();
                    } else {  // bv is (r x 1), broadcast over columns
                        tk::map(ga).array() += tk::map(g).array().colwise() * tk::map(bv).col(0).array();
                        for (std::size_t r = 0; r < g.rows(); ++r) {
                            double s = 0.0;
                            for (std::size_t c = 0; c < g.cols(); ++c) s += g.at(r, c) * av.at(r, c);
                            gb.data[r] += s;
                        }
                    }
                    break;
                }
                case Op::Scale:
                    tk::map(grad(n.a)) += n.scalar * tk::map(g);
                    break;
                case Op::Tanh:
                    tk::map(grad(n.a)).array() +=
                        tk::map(g).array() * (1.0 - tk::map(n.value).array().square());
                    break;
                case Op::Sigmoid: {
                    auto y = tk::map(n.value).array();
                    tk::map(grad(n.a)).array() += tk::map(g).array() * y * (1.0 - y);
                    break;
                }
                case Op::LogClamped: {
                    const Tensor& av = nodes_[n.a].value;
                    Tensor& ga = grad(n.a);
                    for (std::size_t j = 0; j < av.size(); ++j)
                        if (av.data[j] > n.scalar) ga.data[j] += g.data[j] / av.data[j];
                    break;
                }
                case Op::ConcatCols: {
                    const std::size_t ac = nodes_[n.a].value.cols();
                    tk::map(grad(n.a)) += tk::map(g).leftCols(static_cast<Eigen::Index>(ac));
                    tk::map(grad(n.b)) +=
                        tk::map(g).rightCols(static_cast<Eigen::Index>(nodes_[n.b].value.cols()));
                    break;
                }
                case Op::SliceCols:
                    tk::map(grad(n.a)).middleCols(static_cast<Eigen::Index>(n.c0),
                                                  static_cast<Eigen::Index>(n.c1 - n.c0)) +=
                        tk::map(g);
                    break;
                case Op::SumAll:
                    tk::map(grad(n.a)).array() += g.data[0];
                    break;
                case Op::MeanAll:
                    tk::map(grad(n.a)).array() +=
                        g.data[0] / static_cast<double>(nodes_[n.a].value.size());
                    break;
                case Op::SumSquares:
                    tk::map(grad(n.a)) += 2.0 * g.data[0] * tk::map(nodes_[n.a].value);
                    break;
            }
        }
    }

    /// Drop the tape, zero parameter gradient accumulators.
    void clear_tape() {
        nodes_.resize(tape_start_);
        for (std::size_t i = 0; i < tape_start_; ++i)
            std::fill(nodes_[i].grad.data.begin(), nodes_[i].grad.data.end(), 0.0);
    }

    std::size_t tape_size() const { return nodes_.size() - tape_start_; }

    // NaN/Inf in a forward value aborts with the node's op named.
    bool check_finite = true;

private:
    Tensor& grad(NodeId id) { return nodes_[id].grad; }

    Node unary(Op op, NodeId a, Tensor value) {
        Node n;
        n.op = op;
        n.a = a;
        n.value = std::move(value);
        return n;
    }
    NodeId binary(Op op, NodeId a, NodeId b, Tensor value) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.value = std::move(value);
        return push(std::move(n));
    }
    NodeId push(Node n) {
        if (check_finite && !n.value.all_finite())
            throw Error(std::string("graph: non-finite value out of node ") +
                        std::to_string(nodes_.size()) + " (" + op_name(n.op) + ")");
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::size_t tape_start_ = 0;
    std::map<std::string, NodeId> param_ids_;
    std::vector<std::string> param_names_;
};

}  // namespace rulkit
