#pragma once

#include "dispel/nn.hpp"
#include "dispel/tape.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace dispel {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    Tensor first;
    Tensor second;
    std::uint64_t step = 0;
};

using AdamState = std::map<std::string, AdamMoments>;

/// Bias-corrected adaptive-moment update of every parameter named in `grads`.
/// A gradient for a frozen or unknown parameter is a contract violation.
void optimizer_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr,
                    const AdamConfig& cfg = {});

}  // namespace dispel
