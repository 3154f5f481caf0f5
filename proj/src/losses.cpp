#include "dispel/losses.hpp"

#include "dispel/error.hpp"

namespace dispel {

namespace {

Tensor one_hot(std::span<const int> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows)
        throw DimensionError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                             " logit rows");
    Tensor out = Tensor::zeros({rows, classes});
    for (std::size_t i = 0; i < rows; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw UsageError("label " + std::to_string(y) + " at row " + std::to_string(i) + " outside [0, " +
                             std::to_string(classes) + ")");
        out(i, static_cast<std::size_t>(y)) = 1.0;
    }
    return out;
}

Var weighted_nll(Tape& tape, const Tensor& weights, Var logits) {
    const std::size_t n = logits.value().rows();
    if (n == 0) throw UsageError("cross entropy over an empty batch");
    Var logp = tape.log_softmax_rows(logits);
    return tape.scale(tape.sum(tape.mul(tape.constant(weights), logp)), -1.0 / static_cast<double>(n));
}

}  // namespace

Var hard_ce(Tape& tape, std::span<const int> labels, Var logits) {
    const Tensor& v = logits.value();
    return weighted_nll(tape, one_hot(labels, v.rows(), v.cols()), logits);
}

double hard_ce(std::span<const int> labels, const Tensor& logits) {
    Tape tape;
    return hard_ce(tape, labels, tape.constant(logits)).value().item();
}

Var soft_ce(Tape& tape, const Tensor& target_logits, Var pred_logits) {
    if (target_logits.shape() != pred_logits.value().shape())
        throw DimensionError("soft_ce shape mismatch: " + shape_to_string(target_logits.shape()) + " vs " +
                             shape_to_string(pred_logits.value().shape()));
    return weighted_nll(tape, softmax_rows(target_logits), pred_logits);
}

double soft_ce(const Tensor& target_logits, const Tensor& pred_logits) {
    Tape tape;
    return soft_ce(tape, target_logits, tape.constant(pred_logits)).value().item();
}

Tensor softmax_rows(const Tensor& logits) {
    Tape tape;
    return tape.softmax_rows(tape.constant(logits)).value();
}

std::vector<int> argmax_rows(const Tensor& logits) {
    const std::size_t n = logits.rows(), c = logits.cols();
    if (c == 0) throw DimensionError("argmax over zero columns");
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace dispel
