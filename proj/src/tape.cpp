#include "dispel/tape.hpp"

#include "dispel/error.hpp"

#include <cmath>
#include <limits>

namespace dispel {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void require_finite(const Tensor& t, const char* op) {
    const auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!std::isfinite(d[i])) {
            throw NumericError(std::string(op) + ": non-finite input at index " + std::to_string(i));
        }
    }
}

// Index into a possibly-broadcast scalar operand.
inline double at(const Tensor& t, std::size_t i) { return t.is_scalar() ? t.data()[0] : t.data()[i]; }

// Reduce an elementwise gradient to the shape of an operand that may have been broadcast.
Tensor reduce_to(const Tensor& g, const Tensor& operand) {
    if (!operand.is_scalar() || g.is_scalar()) return g;
    double s = 0.0;
    for (double v : g.data()) s += v;
    return Tensor::scalar(s);
}

}  // namespace

const Tensor& Var::value() const {
    if (!tape_) throw UsageError("value() on a detached Var");
    return tape_->value(*this);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(*this); }

const Tensor& Tape::value(Var v) const {
    check_owned(v);
    return nodes_[v.id_].value;
}

bool Tape::requires_grad(Var v) const {
    check_owned(v);
    return nodes_[v.id_].requires_grad;
}

void Tape::check_owned(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw UsageError("Var does not belong to this tape");
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return push(Node{Kind::Leaf, 0, 0, std::move(value), false, std::nullopt}); }

Var Tape::input(Tensor value) { return push(Node{Kind::Leaf, 0, 0, std::move(value), true, std::nullopt}); }

Var Tape::parameter(const std::string& name, Tensor value, bool trainable) {
    if (!trainable) return constant(std::move(value));
    return push(Node{Kind::Leaf, 0, 0, std::move(value), true, name});
}

Var Tape::matmul(Var a, Var b) {
    check_owned(a);
    check_owned(b);
    const Node& na = nodes_[a.id_];
    const Node& nb = nodes_[b.id_];
    Tensor out = matmul_values(na.value, nb.value);
    return push(Node{Kind::MatMul, a.id_, b.id_, std::move(out), na.requires_grad || nb.requires_grad,
                     std::nullopt});
}

Var Tape::unary(UnaryOp op, Var x) {
    check_owned(x);
    const Node& nx = nodes_[x.id_];
    Tensor out = nx.value;
    auto d = out.data();
    Kind kind{};
    switch (op) {
    case UnaryOp::Log:
        kind = Kind::Log;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!(d[i] > 0.0)) {
                throw DomainError("log of non-positive value " + std::to_string(d[i]) + " at index " +
                                  std::to_string(i));
            }
            d[i] = std::log(d[i]);
        }
        break;
    case UnaryOp::Exp:
        kind = Kind::Exp;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double e = std::exp(d[i]);
            if (std::isinf(e) && std::isfinite(d[i]))
                throw DomainError("exp overflow for value " + std::to_string(d[i]) + " at index " +
                                  std::to_string(i));
            d[i] = e;
        }
        break;
    case UnaryOp::Sigmoid:
        kind = Kind::Sigmoid;
        for (double& v : d) v = stable_sigmoid(v);
        break;
    case UnaryOp::Relu:
        kind = Kind::Relu;
        for (double& v : d) v = v > 0.0 ? v : 0.0;
        break;
    }
    return push(Node{kind, x.id_, 0, std::move(out), nx.requires_grad, std::nullopt});
}

Var Tape::binary(BinaryOp op, Var a, Var b) {
    check_owned(a);
    check_owned(b);
    const Node& na = nodes_[a.id_];
    const Node& nb = nodes_[b.id_];
    const Tensor& va = na.value;
    const Tensor& vb = nb.value;
    Shape shape;
    if (va.shape() == vb.shape()) {
        shape = va.shape();
    } else if (va.is_scalar()) {
        shape = vb.shape();
    } else if (vb.is_scalar()) {
        shape = va.shape();
    } else {
        throw DimensionError("elementwise shape mismatch: " + shape_to_string(va.shape()) + " vs " +
                             shape_to_string(vb.shape()));
    }
    Tensor out = Tensor::zeros(shape);
    auto d = out.data();
    Kind kind{};
    switch (op) {
    case BinaryOp::Add:
        kind = Kind::Add;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(va, i) + at(vb, i);
        break;
    case BinaryOp::Sub:
        kind = Kind::Sub;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(va, i) - at(vb, i);
        break;
    case BinaryOp::Mul:
        kind = Kind::Mul;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(va, i) * at(vb, i);
        break;
    }
    return push(Node{kind, a.id_, b.id_, std::move(out), na.requires_grad || nb.requires_grad, std::nullopt});
}

Var Tape::elementwise(UnaryOp op, std::span<const Var> inputs) {
    if (inputs.size() != 1) throw UsageError("unary elementwise op takes exactly one input");
    return unary(op, inputs[0]);
}

Var Tape::elementwise(BinaryOp op, std::span<const Var> inputs) {
    if (inputs.size() != 2) throw UsageError("binary elementwise op takes exactly two inputs");
    return binary(op, inputs[0], inputs[1]);
}

Var Tape::add_row(Var x, Var b) {
    check_owned(x);
    check_owned(b);
    const Node& nx = nodes_[x.id_];
    const Node& nb = nodes_[b.id_];
    const std::size_t n = nx.value.rows(), m = nx.value.cols();
    if (nb.value.rank() != 2 || nb.value.rows() != 1 || nb.value.cols() != m) {
        throw DimensionError("add_row shape mismatch: " + shape_to_string(nx.value.shape()) + " + " +
                             shape_to_string(nb.value.shape()));
    }
    Tensor out = nx.value;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out(i, j) += nb.value(0, j);
    return push(Node{Kind::AddRow, x.id_, b.id_, std::move(out), nx.requires_grad || nb.requires_grad,
                     std::nullopt});
}

Var Tape::softmax_rows(Var logits) {
    check_owned(logits);
    const Node& nx = nodes_[logits.id_];
    require_finite(nx.value, "softmax_rows");
    Tensor out = nx.value;
    const std::size_t n = out.rows(), c = out.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, out(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out(i, j) = std::exp(out(i, j) - mx);
            s += out(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) out(i, j) /= s;
    }
    return push(Node{Kind::SoftmaxRows, logits.id_, 0, std::move(out), nx.requires_grad, std::nullopt});
}

Var Tape::log_softmax_rows(Var logits) {
    check_owned(logits);
    const Node& nx = nodes_[logits.id_];
    require_finite(nx.value, "log_softmax_rows");
    Tensor out = nx.value;
    const std::size_t n = out.rows(), c = out.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, out(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(out(i, j) - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < c; ++j) out(i, j) -= lse;
    }
    return push(Node{Kind::LogSoftmaxRows, logits.id_, 0, std::move(out), nx.requires_grad, std::nullopt});
}

Var Tape::clamp(Var x, double lo, double hi) {
    check_owned(x);
    if (!(lo <= hi)) throw UsageError("clamp with lo > hi");
    const Node& nx = nodes_[x.id_];
    Tensor out = nx.value;
    for (double& v : out.data()) v = std::min(std::max(v, lo), hi);
    Node node{Kind::Clamp, x.id_, 0, std::move(out), nx.requires_grad, std::nullopt};
    node.lo = lo;
    node.hi = hi;
    return push(std::move(node));
}

Var Tape::sum(Var x) {
    check_owned(x);
    const Node& nx = nodes_[x.id_];
    double s = 0.0;
    for (double v : nx.value.data()) s += v;
    return push(Node{Kind::Sum, x.id_, 0, Tensor::scalar(s), nx.requires_grad, std::nullopt});
}

Var Tape::mean(Var x) {
    const std::size_t n = value(x).numel();
    if (n == 0) throw UsageError("mean of empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
    if (!nodes_[id].requires_grad) return;
    auto& slot = grads_[id];
    if (!slot) {
        slot = g;
        return;
    }
    auto dst = slot->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

GradMap Tape::backward(Var loss) {
    check_owned(loss);
    if (value(loss).numel() != 1) {
        throw UsageError("backward requires a scalar loss, got shape " + shape_to_string(value(loss).shape()));
    }
    grads_.assign(nodes_.size(), std::nullopt);
    grads_[loss.id_] = Tensor::filled(value(loss).shape(), 1.0);

    for (std::size_t id = loss.id_ + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (!node.requires_grad || !grads_[id] || node.kind == Kind::Leaf) continue;
        const Tensor g = *grads_[id];
        const Tensor& y = node.value;
        const Tensor& x0 = nodes_[node.in0].value;
        switch (node.kind) {
        case Kind::Leaf:
            break;
        case Kind::MatMul: {
            const Tensor& x1 = nodes_[node.in1].value;
            if (nodes_[node.in0].requires_grad) accumulate(node.in0, matmul_values(g, x1.transpose()));
            if (nodes_[node.in1].requires_grad) accumulate(node.in1, matmul_values(x0.transpose(), g));
            break;
        }
        case Kind::Log: {
            Tensor dx = g;
            auto d = dx.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x0.data()[i];
            accumulate(node.in0, dx);
            break;
        }
        case Kind::Exp: {
            Tensor dx = g;
            auto d = dx.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y.data()[i];
            accumulate(node.in0, dx);
            break;
        }
        case Kind::Sigmoid: {
            Tensor dx = g;
            auto d = dx.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y.data()[i] * (1.0 - y.data()[i]);
            accumulate(node.in0, dx);
            break;
        }
        case Kind::Relu: {
            // Subgradient 0 at exactly 0.
            Tensor dx = g;
            auto d = dx.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = x0.data()[i] > 0.0 ? d[i] : 0.0;
            accumulate(node.in0, dx);
            break;
        }
        case Kind::Add:
        case Kind::Sub: {
            const Tensor& x1 = nodes_[node.in1].value;
            accumulate(node.in0, reduce_to(g, x0));
            Tensor db = g;
            if (node.kind == Kind::Sub)
                for (double& v : db.data()) v = -v;
            accumulate(node.in1, reduce_to(db, x1));
            break;
        }
        case Kind::Mul: {
            const Tensor& x1 = nodes_[node.in1].value;
            Tensor da = g, db = g;
            auto pa = da.data();
            auto pb = db.data();
            for (std::size_t i = 0; i < pa.size(); ++i) {
                pa[i] *= at(x1, i);
                pb[i] *= at(x0, i);
            }
            if (nodes_[node.in0].requires_grad) accumulate(node.in0, reduce_to(da, x0));
            if (nodes_[node.in1].requires_grad) accumulate(node.in1, reduce_to(db, x1));
            break;
        }
        case Kind::AddRow: {
            accumulate(node.in0, g);
            if (nodes_[node.in1].requires_grad) {
                const std::size_t n = g.rows(), m = g.cols();
                Tensor db = Tensor::zeros({1, m});
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) db(0, j) += g(i, j);
                accumulate(node.in1, db);
            }
            break;
        }
        case Kind::SoftmaxRows: {
            const std::size_t n = y.rows(), c = y.cols();
            Tensor dx = Tensor::zeros(y.shape());
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < c; ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
            }
            accumulate(node.in0, dx);
            break;
        }
        case Kind::LogSoftmaxRows: {
            const std::size_t n = y.rows(), c = y.cols();
            Tensor dx = Tensor::zeros(y.shape());
            for (std::size_t i = 0; i < n; ++i) {
                double gs = 0.0;
                for (std::size_t j = 0; j < c; ++j) gs += g(i, j);
                for (std::size_t j = 0; j < c; ++j) dx(i, j) = g(i, j) - std::exp(y(i, j)) * gs;
            }
            accumulate(node.in0, dx);
            break;
        }
        case Kind::Clamp: {
            Tensor dx = g;
            auto d = dx.data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                const double v = x0.data()[i];
                if (!(v > node.lo && v < node.hi)) d[i] = 0.0;
            }
            accumulate(node.in0, dx);
            break;
        }
        case Kind::Sum: {
            accumulate(node.in0, Tensor::filled(x0.shape(), g.item()));
            break;
        }
        }
    }

    GradMap out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& node = nodes_[id];
        if (!node.param_name) continue;
        Tensor g = grads_[id] ? *grads_[id] : Tensor::zeros(node.value.shape());
        auto [it, inserted] = out.emplace(*node.param_name, std::move(g));
        if (!inserted) {
            // Same parameter recorded twice on one tape: gradients add.
            auto dst = it->second.data();
            const auto& src = grads_[id];
            if (src)
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src->data()[i];
        }
    }
    return out;
}

Tensor Tape::grad(Var v) const {
    check_owned(v);
    if (v.id_ < grads_.size() && grads_[v.id_]) return *grads_[v.id_];
    return Tensor::zeros(nodes_[v.id_].value.shape());
}

}  // namespace dispel
