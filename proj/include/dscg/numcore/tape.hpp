#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dscg/numcore/tensor.hpp"

namespace dscg {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

using GradientMap = std::map<std::string, Tensor>;

/// Linear record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, which is a topological order of the
/// computation; backward() walks them once in reverse. A tape has a single
/// writer; use one tape per worker.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::span<const double> grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Input that never receives a gradient.
    Var constant(Tensor value) { return push(std::move(value), false, {}, {}); }

    /// Named differentiable leaf. Names must be unique on a tape.
    Var param(const std::string& name, Tensor value) {
        if (param_ids_.contains(name)) throw ContractError("tape: duplicate parameter '" + name + "'");
        Var v = push(std::move(value), true, {}, name);
        param_ids_.emplace(name, v.id);
        return v;
    }

    /// Record an op output. `requires_grad` should be true iff some input requires it.
    Var record(Tensor value, bool requires_grad, BackwardFn fn) {
        return push(std::move(value), requires_grad, requires_grad ? std::move(fn) : BackwardFn{}, {});
    }

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    bool requires_grad(const Var& v) const { return requires_grad(v.id); }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient accumulator of a node, zero-initialised on first touch.
    std::span<double> grad(std::size_t id) {
        auto& node = nodes_.at(id);
        if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
        return node.grad;
    }

    /// Reverse sweep from a scalar. Returns d loss / d param for every
    /// parameter on the tape; unreachable parameters get zero tensors.
    GradientMap backward(const Var& loss) {
        if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
        if (!value(loss.id).is_scalar())
            throw ContractError("backward: loss must be scalar, got " + shape_str(value(loss.id).shape()));
        for (auto& n : nodes_) n.grad.clear();
        visited_ = 0;
        if (nodes_[loss.id].requires_grad) {
            grad(loss.id)[0] = 1.0;
            for (std::size_t i = loss.id + 1; i-- > 0;) {
                auto& node = nodes_[i];
                if (node.grad.empty()) continue;
                ++visited_;
                if (node.backward) {
                    // The closure may touch other nodes' buffers but never this one.
                    const std::vector<double> g = node.grad;
                    node.backward(*this, g);
                }
            }
        }
        GradientMap out;
        for (const auto& [name, id] : param_ids_) {
            const auto& node = nodes_[id];
            if (node.grad.empty())
                out.emplace(name, Tensor::zeros(node.value.shape()));
            else
                out.emplace(name, Tensor(node.value.shape(), node.grad));
        }
        return out;
    }

    /// Number of nodes whose backward rule ran in the last backward().
    std::size_t visited_in_backward() const { return visited_; }

    /// Non-smooth ops (ReLU, argmin, norm guards) report which branch they
    /// took and how far the deciding quantity was from the switch point.
    /// Finite-difference checks use this to skip coordinates that cross a kink.
    void note_branch(bool taken, double margin) {
        branches_.push_back(taken ? 1 : 0);
        if (margin < kink_margin_) kink_margin_ = margin;
    }
    const std::vector<std::uint8_t>& branches() const { return branches_; }
    double kink_margin() const { return kink_margin_; }

private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        BackwardFn backward;
        std::string name;
        std::vector<double> grad;
    };

    Var push(Tensor value, bool requires_grad, BackwardFn fn, std::string name) {
        nodes_.push_back(Node{std::move(value), requires_grad, std::move(fn), std::move(name), {}});
        return Var{this, nodes_.size() - 1};
    }

    // deque keeps references returned by value() stable across appends.
    std::deque<Node> nodes_;
    std::map<std::string, std::size_t> param_ids_;
    std::vector<std::uint8_t> branches_;
    double kink_margin_ = std::numeric_limits<double>::infinity();
    std::size_t visited_ = 0;
};

inline const Tensor& Var::value() const { return tape->value(id); }

} // namespace dscg
