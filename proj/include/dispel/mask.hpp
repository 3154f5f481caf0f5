#pragma once

#include "dispel/nn.hpp"
#include "dispel/rng.hpp"
#include "dispel/tape.hpp"

#include <cstdint>
#include <string>

namespace dispel {

/// How a mask is produced outside of training.
enum class InferenceMode {
    NoiseFree,  ///< Gumbel-softmax with both noise terms set to zero.
    Expected,   ///< m = 1 - p.
    SampleAvg,  ///< mean of `samples` stochastic masks drawn from `sample_seed`.
};

std::string to_string(InferenceMode mode);
InferenceMode inference_mode_from_string(const std::string& text);

struct MaskGenConfig {
    double tau = 0.1;
    InferenceMode inference_mode = InferenceMode::NoiseFree;
    std::size_t samples = 1;
    double uniform_clamp_eps = 1e-12;
    std::uint64_t sample_seed = 0;

    void validate() const;
};

/// Masks are kept this far away from 0 and 1; probabilities are clamped the
/// same way before taking logs.
inline constexpr double kMaskClampEps = 1e-12;

/// One training-time mask draw recorded on a tape.
struct MaskSample {
    Var p;            ///< generator probabilities, n x d
    Tensor h;         ///< Gumbel noise on the keep branch
    Tensor h_prime;   ///< Gumbel noise on the drop branch
    Var m;            ///< mask in (0, 1)
};

/// -log(-log u) with u clamped to [clamp_eps, 1 - clamp_eps].
double gumbel_from_uniform(double u, double clamp_eps = kMaskClampEps);
/// I.i.d. standard Gumbel draws.
Tensor gumbel_sample(Rng& rng, const Shape& shape, double clamp_eps = kMaskClampEps);

/// Two-way Gumbel-softmax keep probability per element:
///   m = exp((log(1-p)+h)/tau) / (exp((log(1-p)+h)/tau) + exp((log p + h')/tau)),
/// evaluated as sigmoid(((log(1-p)+h) - (log p + h'))/tau).
Tensor gumbel_softmax_mask(const Tensor& p, const Tensor& h, const Tensor& h_prime, double tau);
Var gumbel_softmax_mask(Tape& tape, Var p, const Tensor& h, const Tensor& h_prime, double tau);

/// p = G(x) (sigmoid head), fresh noise from `rng`, mask recorded on `tape`.
/// Gradients reach the generator through p only.
MaskSample training_mask(Tape& tape, const Mlp& generator, Var x, std::size_t embedding_dim,
                         const MaskGenConfig& cfg, Rng& rng);

/// Deterministic test-time mask for probabilities p (any shape).
Tensor inference_mask(const Tensor& p, const MaskGenConfig& cfg);

Tensor apply_mask(const Tensor& m, const Tensor& z);
Var apply_mask(Tape& tape, Var m, Var z);

}  // namespace dispel
