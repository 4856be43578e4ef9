#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "msgnet/errors.hpp"
#include "msgnet/tensor.hpp"

namespace msgnet {

namespace detail {

struct Node {
    Tensor value;
    Tensor grad; // empty until something flows into it
    bool requires_grad = false;
    // Pushes this node's grad into its inputs. Empty for leaves.
    std::function<void(const Node&)> backprop;

    Tensor& grad_buffer()
    {
        if (grad.empty())
            grad = Tensor::zeros(value.shape());
        return grad;
    }
};

using NodePtr = std::shared_ptr<Node>;

inline bool& grad_mode_flag()
{
    thread_local bool enabled = true;
    return enabled;
}

} // namespace detail

/// Handle to a value that may take part in differentiation. Copies share the
/// underlying node, so parameters can be held by both a module and an optimizer.
class Var {
public:
    Var()
        : node_(std::make_shared<detail::Node>())
    {
    }

    explicit Var(Tensor value, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>())
    {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Var parameter(Tensor value) { return Var(std::move(value), true); }
    static Var constant(Tensor value) { return Var(std::move(value), false); }

    const Tensor& value() const noexcept { return node_->value; }
    /// Direct access for optimizers and loaders; never call between forward and backward.
    Tensor& mutable_value() noexcept { return node_->value; }

    const Shape& shape() const noexcept { return node_->value.shape(); }
    std::size_t dim(long axis) const { return node_->value.dim(axis); }
    std::size_t rank() const noexcept { return node_->value.rank(); }

    bool requires_grad() const noexcept { return node_->requires_grad; }
    bool has_grad() const noexcept { return !node_->grad.empty(); }

    /// Gradient accumulated so far; zeros if nothing has flowed in yet.
    Tensor grad() const { return has_grad() ? node_->grad : Tensor::zeros(shape()); }
    void zero_grad() { node_->grad = Tensor{}; }

    const detail::NodePtr& node() const noexcept { return node_; }

    explicit Var(detail::NodePtr node)
        : node_(std::move(node))
    {
    }

private:
    detail::NodePtr node_;
};

/// Disables recording for its lifetime (inference, metric evaluation).
class NoGradGuard {
public:
    NoGradGuard()
        : previous_(detail::grad_mode_flag())
    {
        detail::grad_mode_flag() = false;
    }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Ordered record of the differentiable operations executed on this thread
/// since the last backward pass or clear().
class Tape {
public:
    static Tape& current()
    {
        thread_local Tape tape;
        return tape;
    }

    void record(detail::NodePtr node) { entries_.push_back(std::move(node)); }

    std::size_t size() const noexcept { return entries_.size(); }

    void clear() { entries_.clear(); }

    /// Seeds d(loss)/d(loss) = 1, replays adjoints newest-first, then clears.
    void backward(const Var& loss)
    {
        if (loss.value().numel() != 1 || loss.rank() != 0)
            throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
        if (!loss.requires_grad())
            throw ContractError("backward called on a loss that does not depend on any parameter");
        if (!loss.value().all_finite())
            throw NumericError("backward called on a non-finite loss");

        loss.node()->grad_buffer()[0] += 1.0;
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            detail::Node& n = **it;
            if (n.grad.empty() || !n.backprop)
                continue;
            n.backprop(n);
        }
        // Intermediate grads die with their nodes; leaf grads persist until zero_grad().
        for (auto& e : entries_)
            e->grad = Tensor{};
        entries_.clear();
    }

private:
    std::vector<detail::NodePtr> entries_;
};

inline void backward(const Var& loss) { Tape::current().backward(loss); }

namespace detail {

/// Build the output of a primitive. When recording is on and any input needs a
/// gradient, the node is taped with the supplied adjoint.
template <class Backprop>
Var make_result(Tensor value, std::initializer_list<const Var*> inputs, Backprop&& backprop)
{
    bool needs = false;
    if (grad_enabled())
        for (const Var* v : inputs)
            needs = needs || v->requires_grad();
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (needs) {
        node->requires_grad = true;
        node->backprop = std::forward<Backprop>(backprop);
        Tape::current().record(node);
    }
    return Var(std::move(node));
}

inline Var make_result_vec(Tensor value, const std::vector<Var>& inputs, std::function<void(const Node&)> backprop)
{
    bool needs = false;
    if (grad_enabled())
        for (const Var& v : inputs)
            needs = needs || v.requires_grad();
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (needs) {
        node->requires_grad = true;
        node->backprop = std::move(backprop);
        Tape::current().record(node);
    }
    return Var(std::move(node));
}

/// Gradient sink for an input, or nullptr when it does not need one.
inline Tensor* grad_sink(const NodePtr& n) { return n->requires_grad ? &n->grad_buffer() : nullptr; }

} // namespace detail

} // namespace msgnet
