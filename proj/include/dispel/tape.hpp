#pragma once

#include "dispel/tensor.hpp"

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dispel {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    const Tensor& value() const;
    std::size_t id() const noexcept { return id_; }
    bool requires_grad() const;
    const Tape* tape() const noexcept { return tape_; }

private:
    friend class Tape;
    Var(const Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
    const Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

enum class UnaryOp { Log, Exp, Sigmoid, Relu };
enum class BinaryOp { Add, Sub, Mul };

using GradMap = std::map<std::string, Tensor>;

/// Append-only record of a computation for reverse-mode differentiation.
///
/// Binary elementwise ops require equal shapes; the only broadcast is a
/// rank-0 scalar against a tensor. Bias addition is the explicit `add_row`.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Unnamed differentiable input; read its gradient back with `grad()`.
    Var input(Tensor value);
    /// Named parameter. Frozen parameters are recorded as constants and never
    /// appear in the gradient map returned by `backward`.
    Var parameter(const std::string& name, Tensor value, bool trainable = true);

    Var matmul(Var a, Var b);
    Var unary(UnaryOp op, Var x);
    Var binary(BinaryOp op, Var a, Var b);
    Var elementwise(UnaryOp op, std::span<const Var> inputs);
    Var elementwise(BinaryOp op, std::span<const Var> inputs);

    Var add(Var a, Var b) { return binary(BinaryOp::Add, a, b); }
    Var sub(Var a, Var b) { return binary(BinaryOp::Sub, a, b); }
    Var mul(Var a, Var b) { return binary(BinaryOp::Mul, a, b); }
    Var log(Var x) { return unary(UnaryOp::Log, x); }
    Var exp(Var x) { return unary(UnaryOp::Exp, x); }
    Var sigmoid(Var x) { return unary(UnaryOp::Sigmoid, x); }
    Var relu(Var x) { return unary(UnaryOp::Relu, x); }
    Var scale(Var x, double factor) { return mul(x, constant(Tensor::scalar(factor))); }
    Var add_scalar(Var x, double offset) { return add(x, constant(Tensor::scalar(offset))); }

    /// x[n x m] + b[1 x m] applied to every row.
    Var add_row(Var x, Var b);
    Var softmax_rows(Var logits);
    Var log_softmax_rows(Var logits);
    /// Elementwise clamp to [lo, hi]; gradient passes only where lo < x < hi.
    Var clamp(Var x, double lo, double hi);
    Var sum(Var x);
    Var mean(Var x);

    /// Reverse sweep from a scalar loss. Returns gradients of trainable named
    /// parameters; gradients of every reachable node stay readable via `grad()`.
    GradMap backward(Var loss);
    /// Gradient of `v` after backward (zeros if `v` was unreachable).
    Tensor grad(Var v) const;

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    enum class Kind {
        Leaf, MatMul, Log, Exp, Sigmoid, Relu, Add, Sub, Mul,
        AddRow, SoftmaxRows, LogSoftmaxRows, Clamp, Sum
    };
    struct Node {
        Kind kind;
        std::size_t in0 = 0;
        std::size_t in1 = 0;
        Tensor value;
        bool requires_grad = false;
        std::optional<std::string> param_name;
        double lo = 0.0;
        double hi = 0.0;
    };

    Var push(Node node);
    void check_owned(Var v) const;
    void accumulate(std::size_t id, const Tensor& g);

    std::deque<Node> nodes_;
    std::vector<std::optional<Tensor>> grads_;
};

}  // namespace dispel
