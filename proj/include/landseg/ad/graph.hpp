#pragma once

#include <functional>
#include <vector>

#include "landseg/core/tensor.hpp"

namespace landseg::ad {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so iterating
// ids in reverse is a topological order for backward. Gradients are
// accumulated densely per node; nodes unreachable from the loss or without
// grad-requiring ancestors are skipped.
class Graph {
public:
    using BackFn = std::function<void(Graph&)>;

    Var constant(TensorD value) { return push(std::move(value), {}, nullptr, false); }

    Var leaf(TensorD value, bool requires_grad) {
        return push(std::move(value), {}, nullptr, requires_grad);
    }

    Var make(TensorD value, std::vector<Var> parents, BackFn backward) {
        bool ng = false;
        for (Var p : parents) ng = ng || nodes_[static_cast<size_t>(p.id)].needs_grad;
        return push(std::move(value), std::move(parents), ng ? std::move(backward) : nullptr, ng);
    }

    const TensorD& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }

    bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }

    // Gradient buffer, allocated on first touch.
    TensorD& grad(Var v) {
        Node& n = nodes_[static_cast<size_t>(v.id)];
        if (n.grad.numel() == 0) n.grad = TensorD(n.value.shape);
        return n.grad;
    }

    bool has_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad.numel() > 0; }

    void backward(Var root) {
        Node& r = nodes_[static_cast<size_t>(root.id)];
        if (r.value.numel() != 1)
            throw ValidationError("backward: root must be a scalar");
        if (!r.needs_grad) return;
        // Mark nodes reachable from the root.
        std::vector<char> reach(nodes_.size(), 0);
        reach[static_cast<size_t>(root.id)] = 1;
        for (int id = root.id; id >= 0; --id) {
            if (!reach[static_cast<size_t>(id)]) continue;
            for (Var p : nodes_[static_cast<size_t>(id)].parents)
                reach[static_cast<size_t>(p.id)] = 1;
        }
        grad(root).data.setConstant(1.0);
        for (int id = root.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!reach[static_cast<size_t>(id)] || !n.needs_grad || !n.backward) continue;
            if (n.grad.numel() == 0) continue;  // never received upstream gradient
            n.backward(*this);
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        TensorD value;
        TensorD grad;
        std::vector<Var> parents;
        BackFn backward;
        bool needs_grad = false;
    };

    Var push(TensorD value, std::vector<Var> parents, BackFn backward, bool needs_grad) {
        nodes_.push_back(Node{std::move(value), TensorD{}, std::move(parents),
                              std::move(backward), needs_grad});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
};

}  // namespace landseg::ad
