#include "twotower/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "twotower/kernels.hpp"

namespace twotower {
namespace {

Tensor concat(const Tensor& a, const Tensor& b) {
    require_rank(a, 4, "concat_channels");
    require_rank(b, 4, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw ShapeError("concat_channels: batch/spatial mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
    const std::size_t batch = a.dim(0), plane = a.dim(2) * a.dim(3);
    const std::size_t sa = a.dim(1) * plane, sb = b.dim(1) * plane;
    Tensor out({batch, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
    for (std::size_t n = 0; n < batch; ++n) {
        std::copy_n(a.raw() + n * sa, sa, out.raw() + n * (sa + sb));
        std::copy_n(b.raw() + n * sb, sb, out.raw() + n * (sa + sb) + sa);
    }
    return out;
}

// Splits `grad` at channel `split`, accumulating the halves.
void split_channels(const Tensor& grad, std::size_t split, Tensor* ga, Tensor* gb) {
    const std::size_t batch = grad.dim(0), plane = grad.dim(2) * grad.dim(3);
    const std::size_t sa = split * plane, sb = (grad.dim(1) - split) * plane;
    for (std::size_t n = 0; n < batch; ++n) {
        const double* src = grad.raw() + n * (sa + sb);
        if (ga) {
            double* dst = ga->raw() + n * sa;
            for (std::size_t i = 0; i < sa; ++i) dst[i] += src[i];
        }
        if (gb) {
            double* dst = gb->raw() + n * sb;
            for (std::size_t i = 0; i < sb; ++i) dst[i] += src[sa + i];
        }
    }
}

double stable_sigmoid(double x) {
    constexpr double kLow = std::numeric_limits<double>::min();
    static const double kHigh = std::nextafter(1.0, 0.0);
    const double y = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return std::clamp(y, kLow, kHigh);
}

}  // namespace

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::kLeaf: return "leaf";
        case OpKind::kConv2d: return "conv2d";
        case OpKind::kConvTranspose2d: return "conv_transpose2d";
        case OpKind::kMaxPool2d: return "maxpool2d";
        case OpKind::kMul: return "elementwise_mul";
        case OpKind::kConcatChannels: return "concat_channels";
        case OpKind::kRelu: return "relu";
        case OpKind::kSigmoid: return "sigmoid";
        case OpKind::kSum: return "sum";
        case OpKind::kL1Loss: return "l1_loss";
    }
    return "unknown";
}

const Tensor& Gradients::operator[](Var v) const {
    if (!has(v)) throw std::out_of_range("no gradient recorded for node " + std::to_string(v.id));
    return *grads_[v.id];
}

Var Graph::input(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::parameter(const Tensor& value) {
    Node n;
    n.external = &value;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("graph: unknown node " + std::to_string(v.id));
    return nodes_[v.id];
}

const Tensor& Graph::value_of(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
}

const Tensor& Graph::value(Var v) const {
    node(v);
    return value_of(v.id);
}

std::vector<Var> Graph::inputs(Var v) const {
    std::vector<Var> out;
    for (std::size_t id : node(v).in) {
        if (id != Var::kNone) out.push_back(Var{id});
    }
    return out;
}

const std::vector<std::size_t>& Graph::argmax(Var pool) const {
    const Node& n = node(pool);
    if (n.op != OpKind::kMaxPool2d) throw std::invalid_argument("graph: node is not a max-pool");
    return n.argmax;
}

std::optional<Var> Graph::find_parameter(const Tensor* value) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].external == value) return Var{i};
    }
    return std::nullopt;
}

Var Graph::record(Node n, std::initializer_list<Var> args) {
    std::size_t slot = 0;
    for (Var a : args) {
        node(a);
        n.in[slot++] = a.id;
        n.requires_grad = n.requires_grad || nodes_[a.id].requires_grad;
    }
    evaluate(n);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

void Graph::evaluate(Node& n) {
    auto arg = [&](int i) -> const Tensor& { return value_of(n.in[i]); };
    switch (n.op) {
        case OpKind::kLeaf:
            return;
        case OpKind::kConv2d:
            n.value = kernels::conv2d(arg(0), arg(1), arg(2), n.pad);
            return;
        case OpKind::kConvTranspose2d:
            n.value = kernels::conv_transpose2d(arg(0), arg(1), arg(2));
            return;
        case OpKind::kMaxPool2d: {
            auto r = kernels::maxpool2d(arg(0));
            n.value = std::move(r.output);
            n.argmax = std::move(r.argmax);
            return;
        }
        case OpKind::kMul: {
            const Tensor& a = arg(0);
            const Tensor& b = arg(1);
            require_same_shape(a, b, "elementwise_mul");
            n.value = Tensor(a.shape());
            for (std::size_t i = 0; i < a.numel(); ++i) n.value[i] = a[i] * b[i];
            return;
        }
        case OpKind::kConcatChannels:
            n.value = concat(arg(0), arg(1));
            return;
        case OpKind::kRelu: {
            const Tensor& x = arg(0);
            n.value = Tensor(x.shape());
            for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] > 0.0 ? x[i] : 0.0;
            return;
        }
        case OpKind::kSigmoid: {
            const Tensor& x = arg(0);
            n.value = Tensor(x.shape());
            for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = stable_sigmoid(x[i]);
            return;
        }
        case OpKind::kSum:
            n.value = Tensor({1}, arg(0).sum());
            return;
        case OpKind::kL1Loss: {
            const Tensor& p = arg(0);
            const Tensor& t = arg(1);
            require_same_shape(p, t, "l1_loss");
            if (p.empty()) throw ShapeError("l1_loss: empty operands");
            double s = 0.0;
            for (std::size_t i = 0; i < p.numel(); ++i) s += std::abs(p[i] - t[i]);
            n.value = Tensor({1}, s / static_cast<double>(p.numel()));
            return;
        }
    }
}

std::vector<std::int64_t> Graph::branch_pattern() const {
    std::vector<std::int64_t> pattern;
    auto sign = [](double v) -> std::int64_t { return (v > 0.0) - (v < 0.0); };
    for (const Node& n : nodes_) {
        switch (n.op) {
            case OpKind::kRelu:
                for (double v : value_of(n.in[0]).data()) pattern.push_back(v > 0.0);
                break;
            case OpKind::kMaxPool2d:
                pattern.insert(pattern.end(), n.argmax.begin(), n.argmax.end());
                break;
            case OpKind::kL1Loss: {
                const Tensor& p = value_of(n.in[0]);
                const Tensor& t = value_of(n.in[1]);
                for (std::size_t i = 0; i < p.numel(); ++i) pattern.push_back(sign(p[i] - t[i]));
                break;
            }
            default:
                break;
        }
    }
    return pattern;
}

Var Graph::conv2d(Var input, Var weight, Var bias, std::size_t pad) {
    Node n;
    n.op = OpKind::kConv2d;
    n.pad = pad;
    return record(std::move(n), {input, weight, bias});
}

Var Graph::conv_transpose2d(Var input, Var weight, Var bias) {
    Node n;
    n.op = OpKind::kConvTranspose2d;
    return record(std::move(n), {input, weight, bias});
}

Var Graph::maxpool2d(Var input) {
    Node n;
    n.op = OpKind::kMaxPool2d;
    return record(std::move(n), {input});
}

Var Graph::mul(Var a, Var b) {
    Node n;
    n.op = OpKind::kMul;
    return record(std::move(n), {a, b});
}

Var Graph::concat_channels(Var a, Var b) {
    Node n;
    n.op = OpKind::kConcatChannels;
    return record(std::move(n), {a, b});
}

Var Graph::relu(Var x) {
    Node n;
    n.op = OpKind::kRelu;
    return record(std::move(n), {x});
}

Var Graph::sigmoid(Var x) {
    Node n;
    n.op = OpKind::kSigmoid;
    return record(std::move(n), {x});
}

Var Graph::sum(Var x) {
    Node n;
    n.op = OpKind::kSum;
    return record(std::move(n), {x});
}

Var Graph::l1_loss(Var pred, Var target) {
    Node n;
    n.op = OpKind::kL1Loss;
    return record(std::move(n), {pred, target});
}

void Graph::replay() {
    for (auto& n : nodes_) evaluate(n);
}

Gradients Graph::backward(Var result) const {
    const Tensor& out = value(result);
    if (out.numel() != 1) {
        throw ShapeError("backward: result must be a scalar, got " + shape_str(out.shape()));
    }
    Gradients grads(nodes_.size());
    grads.slot(result) = Tensor(out.shape(), 1.0);

    // Lazily allocates a zero gradient for input `i` of node `n` if it needs one.
    auto sink = [&](const Node& n, int i) -> Tensor* {
        const std::size_t id = n.in[i];
        if (!nodes_[id].requires_grad) return nullptr;
        auto& slot = grads.slot(Var{id});
        if (!slot) slot = Tensor(value_of(id).shape());
        return &*slot;
    };

    for (std::size_t id = result.id + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (n.op == OpKind::kLeaf || !n.requires_grad || !grads.has(Var{id})) continue;
        const Tensor& g = grads[Var{id}];
        auto arg = [&](int i) -> const Tensor& { return value_of(n.in[i]); };

        switch (n.op) {
            case OpKind::kLeaf:
                break;
            case OpKind::kConv2d:
                kernels::conv2d_backward(arg(0), arg(1), g, n.pad, sink(n, 0), sink(n, 1), sink(n, 2));
                break;
            case OpKind::kConvTranspose2d:
                kernels::conv_transpose2d_backward(arg(0), arg(1), g, sink(n, 0), sink(n, 1),
                                                   sink(n, 2));
                break;
            case OpKind::kMaxPool2d:
                if (Tensor* gi = sink(n, 0)) {
                    for (std::size_t o = 0; o < n.argmax.size(); ++o) (*gi)[n.argmax[o]] += g[o];
                }
                break;
            case OpKind::kMul: {
                const Tensor& a = arg(0);
                const Tensor& b = arg(1);
                if (Tensor* ga = sink(n, 0)) {
                    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * b[i];
                }
                if (Tensor* gb = sink(n, 1)) {
                    for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * a[i];
                }
                break;
            }
            case OpKind::kConcatChannels:
                split_channels(g, arg(0).dim(1), sink(n, 0), sink(n, 1));
                break;
            case OpKind::kRelu:
                if (Tensor* gi = sink(n, 0)) {
                    const Tensor& x = arg(0);
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        if (x[i] > 0.0) (*gi)[i] += g[i];
                    }
                }
                break;
            case OpKind::kSigmoid:
                if (Tensor* gi = sink(n, 0)) {
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        const double y = n.value[i];
                        (*gi)[i] += g[i] * y * (1.0 - y);
                    }
                }
                break;
            case OpKind::kSum:
                if (Tensor* gi = sink(n, 0)) {
                    for (auto& v : gi->data()) v += g[0];
                }
                break;
            case OpKind::kL1Loss: {
                const Tensor& p = arg(0);
                const Tensor& t = arg(1);
                const double scale = g[0] / static_cast<double>(p.numel());
                Tensor* gp = sink(n, 0);
                Tensor* gt = sink(n, 1);
                for (std::size_t i = 0; i < p.numel(); ++i) {
                    const double d = p[i] - t[i];
                    const double s = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
                    if (gp) (*gp)[i] += s;
                    if (gt) (*gt)[i] -= s;
                }
                break;
            }
        }
    }
    // Leaves the result does not depend on still get a (zero) gradient.
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (n.op == OpKind::kLeaf && n.requires_grad && !grads.has(Var{id})) {
            grads.slot(Var{id}) = Tensor(value_of(id).shape());
        }
    }
    return grads;
}

}  // namespace twotower
