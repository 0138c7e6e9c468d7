// LSTM cells and the two-layer recurrent stacks used by every network here.
//
// Gate layout in the fused (in -> 4H) matrices is [input | forget | cell |
// output]. The forget-gate bias starts at 1.0, the rest at 0; weights start
// uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
//
// A stack is two LSTM layers plus a dense head (tanh or sigmoid). Stacks with
// `out_feedback` feed the previous head *output* into the second layer's
// recurrent slot instead of that layer's own hidden state; running such a
// stack with an injected sequence replaces that slot with externally supplied
// vectors (teacher forcing on real embeddings).
//
// Masked steps neither advance the recurrent state nor change the emitted
// output for padded positions: state and output are carried from the previous
// step wherever mask == 0.
//
// Every routine exists twice: recording on a Graph tape (training) and as a
// plain-Tensor pass (inference). Both call the same kernels in the same
// order, so results agree bit-for-bit.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulkit/adam.hpp"
#include "rulkit/graph.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {

inline constexpr std::size_t kHiddenSize = 128;

enum class Head : std::uint8_t { Tanh, Sigmoid };

/// Parameter names for one LSTM layer inside a Graph. rec_dim is the width of
/// the recurrent slot; it equals hidden unless the slot is fed from elsewhere
/// (output feedback).
struct LstmCellRef {
    std::string wx, wh, b;
    std::size_t in_dim = 0, hidden = 0, rec_dim = 0;
};

inline Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng rng) {
    Tensor t(rows, cols);
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-a, a);
    return t;
}

inline LstmCellRef make_lstm_cell(Graph& g, const std::string& prefix, std::size_t in_dim,
                                  std::size_t hidden, std::uint64_t seed,
                                  std::size_t rec_dim = 0) {
    if (rec_dim == 0) rec_dim = hidden;
    LstmCellRef cell{prefix + ".wx", prefix + ".wh", prefix + ".b", in_dim, hidden, rec_dim};
    g.param(cell.wx, uniform_init(in_dim, 4 * hidden, in_dim, Rng(derive_stream(seed, cell.wx))));
    g.param(cell.wh,
            uniform_init(rec_dim, 4 * hidden, rec_dim, Rng(derive_stream(seed, cell.wh))));
    Tensor b(1, 4 * hidden);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b.data[j] = 1.0;  // forget gate
    g.param(cell.b, std::move(b));
    return cell;
}

struct LstmState {
    Tensor h, c;
};
struct LstmStateNodes {
    NodeId h, c;
};

/// One cell update on the tape. x: (B x in), states: (B x H).
inline LstmStateNodes lstm_step(Graph& g, const LstmCellRef& cell, NodeId x, NodeId h_prev,
                                NodeId c_prev) {
    const std::size_t H = cell.hidden;
    if (g.val(x).cols() != cell.in_dim)
        throw Error("lstm_step: input dim " + std::to_string(g.val(x).cols()) + " != cell dim " +
                    std::to_string(cell.in_dim));
    NodeId pre = g.add(g.add(g.matmul(x, g.param_id(cell.wx)), g.matmul(h_prev, g.param_id(cell.wh))),
                       g.param_id(cell.b));
    NodeId gi = g.sigmoid(g.slice_cols(pre, 0, H));
    NodeId gf = g.sigmoid(g.slice_cols(pre, H, 2 * H));
    NodeId gc = g.tanh(g.slice_cols(pre, 2 * H, 3 * H));
    NodeId go = g.sigmoid(g.slice_cols(pre, 3 * H, 4 * H));
    NodeId c = g.add(g.mul(gf, c_prev), g.mul(gi, gc));
    NodeId h = g.mul(go, g.tanh(c));
    return {h, c};
}

/// Same update on plain tensors, mirroring lstm_step kernel-for-kernel.
inline LstmState lstm_step_raw(const Graph& g, const LstmCellRef& cell, const Tensor& x,
                               const Tensor& h_prev, const Tensor& c_prev) {
    const std::size_t H = cell.hidden;
    if (x.cols() != cell.in_dim)
        throw Error("lstm_step: input dim " + std::to_string(x.cols()) + " != cell dim " +
                    std::to_string(cell.in_dim));
    const Graph& cg = g;
    Tensor pre = tk::add(tk::add(tk::matmul(x, cg.val(cg.param_id(cell.wx))),
                                 tk::matmul(h_prev, cg.val(cg.param_id(cell.wh)))),
                         cg.val(cg.param_id(cell.b)));
    Tensor gi = tk::sigmoid(tk::slice_cols(pre, 0, H));
    Tensor gf = tk::sigmoid(tk::slice_cols(pre, H, 2 * H));
    Tensor gc = tk::tanh(tk::slice_cols(pre, 2 * H, 3 * H));
    Tensor go = tk::sigmoid(tk::slice_cols(pre, 3 * H, 4 * H));
    Tensor c = tk::add(tk::mul(gf, c_prev), tk::mul(gi, gc));
    Tensor h = tk::mul(go, tk::tanh(c));
    return {h, c};
}

/// Two stacked LSTM layers plus a dense head.
struct RecurrentNet {
    std::string name;
    std::size_t in_dim = 0, out_dim = 0, hidden = kHiddenSize;
    Head head = Head::Tanh;
    bool out_feedback = false;  // layer-2 recurrent slot carries the previous output
    LstmCellRef l1, l2;
    std::string head_w, head_b;

    void init(Graph& g, std::uint64_t seed) {
        l1 = make_lstm_cell(g, name + ".l1", in_dim, hidden, seed);
        l2 = make_lstm_cell(g, name + ".l2", hidden, hidden, seed,
                            out_feedback ? out_dim : hidden);
        head_w = name + ".head.w";
        head_b = name + ".head.b";
        g.param(head_w, uniform_init(hidden, out_dim, hidden, Rng(derive_stream(seed, head_w))));
        g.param(head_b, Tensor(1, out_dim));
    }

    std::vector<std::string> param_names() const {
        return {l1.wx, l1.wh, l1.b, l2.wx, l2.wh, l2.b, head_w, head_b};
    }

    // -- tape pass ----------------------------------------------------------

    /// xs[t]: (B x in_dim). masks[t], optional: (B x 1) in {0,1}. inject[t],
    /// only for out_feedback stacks: (B x out_dim) teacher history used as
    /// the layer-2 recurrent slot for step t (inject[0] stands for h_0).
    std::vector<NodeId> run(Graph& g, std::span<const NodeId> xs, std::span<const NodeId> masks,
                            std::span<const NodeId> inject = {}) const {
        check_lengths(xs.size(), masks.size(), inject.size());
        const std::size_t T = xs.size();
        const std::size_t B = g.val(xs[0]).rows();
        NodeId zero_h = g.input(Tensor(B, hidden));
        NodeId zero_o = g.input(Tensor(B, out_dim));
        NodeId h1 = zero_h, c1 = zero_h, h2 = zero_h, c2 = zero_h, prev_out = zero_o;
        std::vector<NodeId> outs;
        outs.reserve(T);
        for (std::size_t t = 0; t < T; ++t) {
            auto s1 = lstm_step(g, l1, xs[t], h1, c1);
            NodeId slot2 = out_feedback ? (inject.empty() ? prev_out : inject[t]) : h2;
            auto s2 = lstm_step(g, l2, s1.h, slot2, c2);
            NodeId y = g.add(g.matmul(s2.h, g.param_id(head_w)), g.param_id(head_b));
            y = head == Head::Tanh ? g.tanh(y) : g.sigmoid(y);
            if (!masks.empty()) {
                NodeId m = masks[t];
                NodeId km = g.add_const(g.scale(m, -1.0), 1.0);  // 1 - mask
                h1 = g.add(g.mul(s1.h, m), g.mul(h1, km));
                c1 = g.add(g.mul(s1.c, m), g.mul(c1, km));
                h2 = g.add(g.mul(s2.h, m), g.mul(h2, km));
                c2 = g.add(g.mul(s2.c, m), g.mul(c2, km));
                y = g.add(g.mul(y, m), g.mul(prev_out, km));
            } else {
                h1 = s1.h;
                c1 = s1.c;
                h2 = s2.h;
                c2 = s2.c;
            }
            prev_out = y;
            outs.push_back(y);
        }
        return outs;
    }

    // -- inference pass ------------------------------------------------------

    std::vector<Tensor> run_raw(const Graph& g, std::span<const Tensor> xs,
                                std::span<const Tensor> masks,
                                std::span<const Tensor> inject = {}) const {
        check_lengths(xs.size(), masks.size(), inject.size());
        const std::size_t T = xs.size();
        const std::size_t B = xs[0].rows();
        Tensor zero_h(B, hidden);
        LstmState s1p{zero_h, zero_h}, s2p{zero_h, zero_h};
        Tensor prev_out(B, out_dim);
        std::vector<Tensor> outs;
        outs.reserve(T);
        for (std::size_t t = 0; t < T; ++t) {
            LstmState s1 = lstm_step_raw(g, l1, xs[t], s1p.h, s1p.c);
            const Tensor& slot2 = out_feedback ? (inject.empty() ? prev_out : inject[t]) : s2p.h;
            LstmState s2 = lstm_step_raw(g, l2, s1.h, slot2, s2p.c);
            Tensor y = tk::add(tk::matmul(s2.h, g.val(g.param_id(head_w))),
                               g.val(g.param_id(head_b)));
            y = head == Head::Tanh ? tk::tanh(y) : tk::sigmoid(y);
            if (!masks.empty()) {
                const Tensor& m = masks[t];
                Tensor km = tk::add_const(tk::scale(m, -1.0), 1.0);
                s1.h = tk::add(tk::mul(s1.h, m), tk::mul(s1p.h, km));
                s1.c = tk::add(tk::mul(s1.c, m), tk::mul(s1p.c, km));
                s2.h = tk::add(tk::mul(s2.h, m), tk::mul(s2p.h, km));
                s2.c = tk::add(tk::mul(s2.c, m), tk::mul(s2p.c, km));
                y = tk::add(tk::mul(y, m), tk::mul(prev_out, km));
            }
            s1p = std::move(s1);
            s2p = std::move(s2);
            prev_out = y;
            outs.push_back(std::move(y));
        }
        return outs;
    }

private:
    void check_lengths(std::size_t nx, std::size_t nm, std::size_t ni) const {
        if (nx == 0) throw Error(name + ": empty sequence");
        if (nm != 0 && nm != nx)
            throw Error(name + ": mask length " + std::to_string(nm) + " != sequence length " +
                        std::to_string(nx));
        if (ni != 0 && !out_feedback)
            throw Error(name + ": injected history on a stack without output feedback");
        if (ni != 0 && ni != nx)
            throw Error(name + ": injected history length " + std::to_string(ni) +
                        " != sequence length " + std::to_string(nx));
    }
};

inline RecurrentNet make_net(Graph& g, const std::string& name, std::size_t in_dim,
                             std::size_t out_dim, Head head, bool out_feedback,
                             std::uint64_t seed, std::size_t hidden = kHiddenSize) {
    RecurrentNet net;
    net.name = name;
    net.in_dim = in_dim;
    net.out_dim = out_dim;
    net.hidden = hidden;
    net.head = head;
    net.out_feedback = out_feedback;
    net.init(g, seed);
    return net;
}

}  // namespace rulkit
