#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gdd/tensor.hpp"

namespace gdd {

template <class Real>
struct NodeState {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::vector<std::shared_ptr<NodeState>> parents;
    // Reads this node's grad and accumulates into the parents that require grad.
    std::function<void(NodeState&)> backward_rule;
    const char* op = "leaf";
    bool requires_grad = false;
    bool trainable = false;

    Tensor<Real>& ensure_grad() {
        if (grad.shape() != value.shape()) grad = Tensor<Real>(value.shape());
        return grad;
    }
};

// Value-plus-gradient handle into a reverse-mode graph. Copies share state.
template <class Real>
class Node {
public:
    Node() = default;
    explicit Node(std::shared_ptr<NodeState<Real>> state) : state_(std::move(state)) {}

    const Tensor<Real>& value() const { return state_->value; }
    const Tensor<Real>& grad() const { return state_->grad; }
    const Shape& shape() const { return state_->value.shape(); }
    bool requires_grad() const { return state_->requires_grad; }
    const char* op() const { return state_->op; }
    bool valid() const { return static_cast<bool>(state_); }

    NodeState<Real>& state() const { return *state_; }
    const std::shared_ptr<NodeState<Real>>& handle() const { return state_; }

private:
    std::shared_ptr<NodeState<Real>> state_;
};

template <class Real>
Node<Real> constant(Tensor<Real> value) {
    auto s = std::make_shared<NodeState<Real>>();
    s->value = std::move(value);
    s->op = "constant";
    return Node<Real>(std::move(s));
}

// Creates an interior node. When no parent requires grad the rule and the
// parent links are dropped, so constant subgraphs cost nothing on backward.
template <class Real>
Node<Real> make_node(Tensor<Real> value, std::vector<Node<Real>> parents, const char* op,
                     std::function<void(NodeState<Real>&)> rule) {
    auto s = std::make_shared<NodeState<Real>>();
    s->value = std::move(value);
    s->op = op;
    for (const auto& p : parents) s->requires_grad = s->requires_grad || p.requires_grad();
    if (s->requires_grad) {
        s->parents.reserve(parents.size());
        for (auto& p : parents) s->parents.push_back(p.handle());
        s->backward_rule = std::move(rule);
    }
    return Node<Real>(std::move(s));
}

template <class Real>
struct AdamMoments {
    Tensor<Real> first;
    Tensor<Real> second;
    std::uint64_t step = 0;
};

// Trainable leaf plus its optimizer state. Copies are handles to the same
// parameter.
template <class Real>
class Parameter {
public:
    Parameter() = default;

    Parameter(std::string name, Tensor<Real> init)
        : state_(std::make_shared<NodeState<Real>>()), moments_(std::make_shared<AdamMoments<Real>>()),
          name_(std::make_shared<const std::string>(std::move(name))) {
        state_->value = std::move(init);
        state_->grad = Tensor<Real>(state_->value.shape());
        state_->op = "parameter";
        state_->requires_grad = true;
        state_->trainable = true;
        moments_->first = Tensor<Real>(state_->value.shape());
        moments_->second = Tensor<Real>(state_->value.shape());
    }

    Node<Real> node() const { return Node<Real>(state_); }
    const std::string& name() const { return *name_; }
    const Shape& shape() const { return state_->value.shape(); }

    const Tensor<Real>& value() const { return state_->value; }
    Tensor<Real>& mutable_value() { return state_->value; }
    const Tensor<Real>& grad() const { return state_->grad; }
    Tensor<Real>& mutable_grad() { return state_->grad; }
    void zero_grad() { state_->grad.fill(Real(0)); }

    AdamMoments<Real>& moments() { return *moments_; }
    const AdamMoments<Real>& moments() const { return *moments_; }

    const NodeState<Real>* identity() const { return state_.get(); }

private:
    std::shared_ptr<NodeState<Real>> state_;
    std::shared_ptr<AdamMoments<Real>> moments_;
    std::shared_ptr<const std::string> name_;
};

namespace detail {

// Reverse topological order (loss first) of every node reachable from root
// that requires grad. Iterative DFS, each node visited once.
template <class Real>
std::vector<NodeState<Real>*> reverse_topological(NodeState<Real>* root) {
    std::vector<NodeState<Real>*> post;
    std::unordered_set<NodeState<Real>*> seen;
    std::vector<std::pair<NodeState<Real>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodeState<Real>* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            post.push_back(node);
            stack.pop_back();
        }
    }
    return {post.rbegin(), post.rend()};
}

}  // namespace detail

// Accumulates d(loss)/d(parameter) into every reachable trainable leaf.
// Interior gradients are reset on each call, so calling twice on the same
// graph doubles the parameter gradients.
template <class Real>
void backward(const Node<Real>& loss) {
    if (loss.shape() != Shape{1, 1, 1}) {
        throw ShapeError("backward: loss must be 1x1x1, got " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) return;
    auto order = detail::reverse_topological(loss.handle().get());
    for (auto* n : order) {
        if (!n->trainable) {
            n->ensure_grad();
            n->grad.fill(Real(0));
        }
    }
    order.front()->ensure_grad()[0] += Real(1);
    for (auto* n : order) {
        if (n->backward_rule) n->backward_rule(*n);
    }
}

// Parameters in `params` that the loss does not depend on.
template <class Real>
std::vector<std::string> unreachable_parameters(const Node<Real>& loss, std::span<const Parameter<Real>> params) {
    std::unordered_set<const NodeState<Real>*> reached;
    if (loss.requires_grad()) {
        for (auto* n : detail::reverse_topological(loss.handle().get())) reached.insert(n);
    }
    std::vector<std::string> missing;
    for (const auto& p : params) {
        if (!reached.contains(p.identity())) missing.push_back(p.name());
    }
    return missing;
}

// ---------------------------------------------------------------------------
// Elementwise and reduction nodes.

template <class Real>
Node<Real> add(const Node<Real>& a, const Node<Real>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<Real> out(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_node<Real>(std::move(out), {a, b}, "add", [](NodeState<Real>& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <class Real>
Node<Real> sub(const Node<Real>& a, const Node<Real>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<Real> out(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_node<Real>(std::move(out), {a, b}, "sub", [](NodeState<Real>& self) {
        if (self.parents[0]->requires_grad) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (self.parents[1]->requires_grad) {
            auto& g = self.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <class Real>
Node<Real> mul(const Node<Real>& a, const Node<Real>& b) {
    require_same_shape(a.shape(), b.shape(), "elementwise_mul");
    Tensor<Real> out(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_node<Real>(std::move(out), {a, b}, "mul", [](NodeState<Real>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

template <class Real>
Node<Real> scalar_mul(const Node<Real>& a, Real s) {
    Tensor<Real> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a.value()[i];
    return make_node<Real>(std::move(out), {a}, "scalar_mul", [s](NodeState<Real>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

template <class Real>
Node<Real> concat_channels(const std::vector<Node<Real>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape first = parts.front().shape();
    std::size_t channels = 0;
    for (const auto& p : parts) {
        if (p.shape().height != first.height || p.shape().width != first.width) {
            throw ShapeError("concat_channels: spatial mismatch " + to_string(first) + " vs " + to_string(p.shape()));
        }
        channels += p.shape().channels;
    }
    Tensor<Real> out(Shape{channels, first.height, first.width});
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
        offset += p.value().size();
    }
    return make_node<Real>(std::move(out), parts, "concat_channels", [](NodeState<Real>& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            const std::size_t n = p->value.size();
            if (p->requires_grad) {
                auto& g = p->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

// Multiplies channel k by weights[k % weights.channels]. The weight node has
// shape Cw x 1 x 1 and the input channel count must be a multiple of Cw.
template <class Real>
Node<Real> scale_channels(const Node<Real>& x, const Node<Real>& weights) {
    const Shape ws = weights.shape();
    if (ws.height != 1 || ws.width != 1 || ws.channels == 0 || x.shape().channels % ws.channels != 0) {
        throw ShapeError("scale_channels: weights " + to_string(ws) + " incompatible with input " + to_string(x.shape()));
    }
    const std::size_t plane = x.shape().plane();
    Tensor<Real> out(x.shape());
    for (std::size_t c = 0; c < x.shape().channels; ++c) {
        const Real w = weights.value()[c % ws.channels];
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = w * x.value()[c * plane + i];
    }
    return make_node<Real>(std::move(out), {x, weights}, "scale_channels", [plane](NodeState<Real>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const std::size_t cw = pw.value.size();
        const std::size_t channels = px.value.channels();
        if (px.requires_grad) {
            auto& g = px.ensure_grad();
            for (std::size_t c = 0; c < channels; ++c) {
                const Real w = pw.value[c % cw];
                for (std::size_t i = 0; i < plane; ++i) g[c * plane + i] += w * self.grad[c * plane + i];
            }
        }
        if (pw.requires_grad) {
            auto& g = pw.ensure_grad();
            for (std::size_t c = 0; c < channels; ++c) {
                Real acc = 0;
                for (std::size_t i = 0; i < plane; ++i) acc += self.grad[c * plane + i] * px.value[c * plane + i];
                g[c % cw] += acc;
            }
        }
    });
}

template <class Real>
Node<Real> sum(const Node<Real>& x) {
    Real acc = 0;
    for (Real v : x.value().data()) acc += v;
    return make_node<Real>(Tensor<Real>::scalar(acc), {x}, "sum", [](NodeState<Real>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const Real d = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
    });
}

// l1 norm; the subgradient at zero is zero.
template <class Real>
Node<Real> abs_sum(const Node<Real>& x) {
    Real acc = 0;
    for (Real v : x.value().data()) acc += std::abs(v);
    return make_node<Real>(Tensor<Real>::scalar(acc), {x}, "abs_sum", [](NodeState<Real>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        const Real d = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Real v = p.value[i];
            g[i] += v > 0 ? d : (v < 0 ? -d : Real(0));
        }
    });
}

// Squared Frobenius norm.
template <class Real>
Node<Real> square_sum(const Node<Real>& x) {
    Real acc = 0;
    for (Real v : x.value().data()) acc += v * v;
    return make_node<Real>(Tensor<Real>::scalar(acc), {x}, "square_sum", [](NodeState<Real>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        const Real d = 2 * self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += d * p.value[i];
    });
}

template <class Real>
Node<Real> leaky_relu(const Node<Real>& x, Real slope = Real(0.1)) {
    Tensor<Real> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Real v = x.value()[i];
        out[i] = v >= 0 ? v : slope * v;
    }
    return make_node<Real>(std::move(out), {x}, "leaky_relu", [slope](NodeState<Real>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += (p.value[i] > 0 ? Real(1) : slope) * self.grad[i];
    });
}

template <class Real>
Real stable_sigmoid(Real v) {
    if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
    const Real e = std::exp(v);
    return e / (Real(1) + e);
}

template <class Real>
Node<Real> sigmoid(const Node<Real>& x) {
    Tensor<Real> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(x.value()[i]);
    return make_node<Real>(std::move(out), {x}, "sigmoid", [](NodeState<Real>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Real y = self.value[i];
            g[i] += y * (Real(1) - y) * self.grad[i];
        }
    });
}

}  // namespace gdd
