#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fxcast/errors.hpp"
#include "fxcast/tensor.hpp"

namespace fxcast {

/// Reverse-mode autodiff tape.
///
/// Nodes are appended during the forward pass (operation kind, input node ids,
/// and whatever values the backward rule needs, captured in a closure over
/// shared tensor storage). backward() then sweeps the node list once in
/// reverse, accumulating gradients per node. Inputs always precede the node
/// that consumes them, so the list order is already topological.
///
/// A tape and the tensors recorded on it form a single-owner unit: build the
/// graph and run backward from one thread, then discard the tape.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    /// Register a leaf tensor (parameter or input) for gradient tracking.
    int watch(Tensor& t) {
        const int id = add_node("leaf", {}, t.shape());
        t.set_track(this, id);
        return id;
    }

    int add_node(const char* op, std::vector<int> inputs, Shape shape, BackwardFn fn = {}) {
        nodes_.push_back(Node{op, std::move(inputs), std::move(shape), std::move(fn)});
        grads_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::size_t size() const { return nodes_.size(); }

    /// Run the reverse sweep from a scalar root. Gradients for every node on a
    /// path to the root become available through grad()/grad_of().
    void backward(const Tensor& root) {
        if (root.tape() != this || root.node() < 0) {
            throw ContractError("backward: root tensor is not recorded on this tape");
        }
        if (root.numel() != 1) {
            throw ContractError("backward: root must be scalar-shaped, got " +
                                 shape_str(root.shape()));
        }
        for (auto& g : grads_) g.clear();
        const int root_id = root.node();
        grads_[root_id].assign(1, 1.0);
        for (int id = root_id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (grads_[id].empty() || !n.backward) continue;
            n.backward(*this, id);
        }
        ran_backward_ = true;
    }

    bool ran_backward() const { return ran_backward_; }

    /// Gradient buffer for a node (allocated zero-filled on first touch).
    std::vector<double>& grad_buffer(int id) {
        auto& g = grads_[id];
        if (g.empty()) g.assign(shape_numel(nodes_[id].shape), 0.0);
        return g;
    }

    /// Accumulate a contribution into an input's gradient. id < 0 means the
    /// input was not tracked; the contribution is dropped.
    void accumulate(int id, const std::vector<double>& contrib) {
        if (id < 0) return;
        auto& g = grad_buffer(id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += contrib[i];
    }

    /// Gradient of a tracked tensor after backward(). Zero tensor if the node
    /// was not reached from the root.
    Tensor grad(const Tensor& t) const {
        if (t.tape() != this || t.node() < 0) {
            throw ContractError("grad: tensor is not recorded on this tape");
        }
        return grad_of(t.node(), t.shape());
    }

    Tensor grad_of(int id, const Shape& shape) const {
        const auto& g = grads_.at(static_cast<std::size_t>(id));
        if (g.empty()) return Tensor::zeros(shape);
        return Tensor(shape, g);
    }

    bool has_grad(int id) const { return !grads_.at(static_cast<std::size_t>(id)).empty(); }

    const char* op_of(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }

private:
    struct Node {
        const char* op;
        std::vector<int> inputs;
        Shape shape;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    bool ran_backward_ = false;
};

/// Tape shared by a set of operands (nullptr when none is tracked).
/// Mixing tensors from two different live tapes is a usage error.
inline Tape* tape_of(const Tensor& a) { return a.tape(); }

inline Tape* tape_of(const Tensor& a, const Tensor& b) {
    Tape* ta = a.tape();
    Tape* tb = b.tape();
    if (ta && tb && ta != tb) throw ContractError("operands recorded on different tapes");
    return ta ? ta : tb;
}

inline Tape* tape_of(const Tensor& a, const Tensor& b, const Tensor& c) {
    Tape* t = tape_of(a, b);
    Tape* tc = c.tape();
    if (t && tc && t != tc) throw ContractError("operands recorded on different tapes");
    return t ? t : tc;
}

inline Tape* tape_of_all(std::initializer_list<const Tensor*> ts) {
    Tape* t = nullptr;
    for (const Tensor* p : ts) {
        Tape* tp = p->tape();
        if (!tp) continue;
        if (t && t != tp) throw ContractError("operands recorded on different tapes");
        t = tp;
    }
    return t;
}

} // namespace fxcast
