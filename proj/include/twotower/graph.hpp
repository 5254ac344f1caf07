#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "twotower/tensor.hpp"

namespace twotower {

/// Handle to a value recorded on a Graph.
struct Var {
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::size_t id = kNone;

    bool valid() const noexcept { return id != kNone; }
    friend bool operator==(Var, Var) = default;
};

enum class OpKind {
    kLeaf,
    kConv2d,
    kConvTranspose2d,
    kMaxPool2d,
    kMul,
    kConcatChannels,
    kRelu,
    kSigmoid,
    kSum,
    kL1Loss,
};

const char* op_name(OpKind op);

/// Gradients produced by Graph::backward, indexed by Var.
class Gradients {
public:
    explicit Gradients(std::size_t size) : grads_(size) {}

    bool has(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }
    const Tensor& operator[](Var v) const;
    std::optional<Tensor>& slot(Var v) { return grads_.at(v.id); }

private:
    std::vector<std::optional<Tensor>> grads_;
};

/// Tape of recorded operations. Nodes are appended in execution order, which
/// is therefore a topological order; backward walks it in reverse.
///
/// A graph is single-threaded. Parameters are bound by reference and must
/// outlive it; any number of graphs may read the same parameters at once.
class Graph {
public:
    /// Leaf that owns its value.
    Var input(Tensor value, bool requires_grad = false);
    /// Leaf that reads `value` in place and always requires a gradient.
    Var parameter(const Tensor& value);

    Var conv2d(Var input, Var weight, Var bias, std::size_t pad);
    Var conv_transpose2d(Var input, Var weight, Var bias);
    Var maxpool2d(Var input);
    Var mul(Var a, Var b);
    Var concat_channels(Var a, Var b);
    Var relu(Var x);
    Var sigmoid(Var x);
    Var sum(Var x);
    /// Mean absolute difference; scalar result of shape [1].
    Var l1_loss(Var pred, Var target);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    OpKind op(Var v) const { return node(v).op; }
    std::vector<Var> inputs(Var v) const;
    const std::vector<std::size_t>& argmax(Var pool) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    std::optional<Var> find_parameter(const Tensor* value) const;

    /// Which side of every non-smooth point the current values sit on: relu
    /// input signs, max-pool argmaxes and L1 residual signs, concatenated in
    /// recording order. Equal patterns mean the same smooth piece.
    std::vector<std::int64_t> branch_pattern() const;

    /// Reverse-mode sweep from a scalar (single-element) result.
    Gradients backward(Var result) const;

    /// Recomputes every non-leaf node in recording order from the current
    /// leaf values. Parameters changed in place since recording are picked up.
    void replay();

private:
    struct Node {
        OpKind op = OpKind::kLeaf;
        std::size_t in[3] = {Var::kNone, Var::kNone, Var::kNone};
        Tensor value;
        const Tensor* external = nullptr;
        bool requires_grad = false;
        std::size_t pad = 0;
        std::vector<std::size_t> argmax;
    };

    const Node& node(Var v) const;
    const Tensor& value_of(std::size_t id) const;
    Var record(Node n, std::initializer_list<Var> args);
    void evaluate(Node& n);

    std::vector<Node> nodes_;
};

}  // namespace twotower
