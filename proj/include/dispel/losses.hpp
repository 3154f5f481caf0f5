#pragma once

#include "dispel/tape.hpp"

#include <span>
#include <vector>

namespace dispel {

/// Mean over rows of -log softmax(logits)[label], via log-sum-exp.
Var hard_ce(Tape& tape, std::span<const int> labels, Var logits);
double hard_ce(std::span<const int> labels, const Tensor& logits);

/// Mean over rows of -sum_k softmax(target)_k * log softmax(pred)_k.
/// The target enters as a plain tensor, so no gradient flows into it.
Var soft_ce(Tape& tape, const Tensor& target_logits, Var pred_logits);
double soft_ce(const Tensor& target_logits, const Tensor& pred_logits);

/// Row-wise softmax of a logits matrix (no tape).
Tensor softmax_rows(const Tensor& logits);
/// Row-wise argmax; ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace dispel
