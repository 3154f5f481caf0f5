#include "dispel/mask.hpp"

#include "dispel/error.hpp"

#include <algorithm>
#include <cmath>

namespace dispel {

std::string to_string(InferenceMode mode) {
    switch (mode) {
    case InferenceMode::NoiseFree: return "noise_free";
    case InferenceMode::Expected: return "expected";
    case InferenceMode::SampleAvg: return "sample_avg";
    }
    return "noise_free";
}

InferenceMode inference_mode_from_string(const std::string& text) {
    if (text == "noise_free") return InferenceMode::NoiseFree;
    if (text == "expected") return InferenceMode::Expected;
    if (text == "sample_avg") return InferenceMode::SampleAvg;
    throw ConfigError("unknown inference mode '" + text + "' (noise_free|expected|sample_avg)");
}

void MaskGenConfig::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("mask temperature must be > 0");
    if (inference_mode == InferenceMode::SampleAvg && samples < 1)
        throw ConfigError("sample_avg needs at least one sample");
    if (!(uniform_clamp_eps > 0.0 && uniform_clamp_eps < 0.5))
        throw ConfigError("uniform clamp eps must lie in (0, 0.5)");
}

namespace {

double clamp_open(double v) { return std::min(std::max(v, kMaskClampEps), 1.0 - kMaskClampEps); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
}

}  // namespace

double gumbel_from_uniform(double u, double clamp_eps) {
    const double uc = std::min(std::max(u, clamp_eps), 1.0 - clamp_eps);
    return -std::log(-std::log(uc));
}

Tensor gumbel_sample(Rng& rng, const Shape& shape, double clamp_eps) {
    Tensor out = Tensor::zeros(shape);
    for (double& v : out.data()) v = gumbel_from_uniform(uniform01(rng), clamp_eps);
    return out;
}

Tensor gumbel_softmax_mask(const Tensor& p, const Tensor& h, const Tensor& h_prime, double tau) {
    require_same_shape(p, h, "gumbel_softmax_mask");
    require_same_shape(p, h_prime, "gumbel_softmax_mask");
    if (!(tau > 0.0)) throw UsageError("temperature must be positive");
    Tensor m = Tensor::zeros(p.shape());
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const double pc = clamp_open(p.data()[i]);
        const double keep = std::log1p(-pc) + h.data()[i];
        const double drop = std::log(pc) + h_prime.data()[i];
        m.data()[i] = clamp_open(sigmoid((keep - drop) / tau));
    }
    return m;
}

Var gumbel_softmax_mask(Tape& tape, Var p, const Tensor& h, const Tensor& h_prime, double tau) {
    require_same_shape(p.value(), h, "gumbel_softmax_mask");
    require_same_shape(p.value(), h_prime, "gumbel_softmax_mask");
    if (!(tau > 0.0)) throw UsageError("temperature must be positive");
    Var pc = tape.clamp(p, kMaskClampEps, 1.0 - kMaskClampEps);
    Var keep = tape.add(tape.log(tape.add_scalar(tape.scale(pc, -1.0), 1.0)), tape.constant(h));
    Var drop = tape.add(tape.log(pc), tape.constant(h_prime));
    Var m = tape.sigmoid(tape.scale(tape.sub(keep, drop), 1.0 / tau));
    return tape.clamp(m, kMaskClampEps, 1.0 - kMaskClampEps);
}

MaskSample training_mask(Tape& tape, const Mlp& generator, Var x, std::size_t embedding_dim,
                         const MaskGenConfig& cfg, Rng& rng) {
    if (generator.output_dim() != embedding_dim)
        throw ConfigError("mask generator emits " + std::to_string(generator.output_dim()) +
                          " dimensions but the embedding has " + std::to_string(embedding_dim));
    if (generator.output_activation() != Activation::Sigmoid)
        throw ConfigError("mask generator must end in a sigmoid head");
    MaskSample s;
    s.p = generator.forward(tape, x);
    s.h = gumbel_sample(rng, s.p.value().shape(), cfg.uniform_clamp_eps);
    s.h_prime = gumbel_sample(rng, s.p.value().shape(), cfg.uniform_clamp_eps);
    s.m = gumbel_softmax_mask(tape, s.p, s.h, s.h_prime, cfg.tau);
    return s;
}

Tensor inference_mask(const Tensor& p, const MaskGenConfig& cfg) {
    cfg.validate();
    Tensor m = Tensor::zeros(p.shape());
    switch (cfg.inference_mode) {
    case InferenceMode::NoiseFree: {
        const double r = 1.0 / cfg.tau;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double pc = clamp_open(p.data()[i]);
            // tau = 1 reduces to 1 - p. Otherwise the direct ratio while the
            // powers are representable (exactly 0.5 at p = 0.5), log-space beyond.
            if (cfg.tau == 1.0) {
                m.data()[i] = clamp_open(1.0 - pc);
                continue;
            }
            const double a = std::pow(1.0 - pc, r);
            const double b = std::pow(pc, r);
            double v;
            if (std::max(a, b) >= 1e-290 && std::isfinite(a + b)) {
                v = a / (a + b);
            } else {
                v = sigmoid((std::log1p(-pc) - std::log(pc)) * r);
            }
            m.data()[i] = clamp_open(v);
        }
        break;
    }
    case InferenceMode::Expected:
        for (std::size_t i = 0; i < p.numel(); ++i) m.data()[i] = clamp_open(1.0 - p.data()[i]);
        break;
    case InferenceMode::SampleAvg: {
        Rng rng = derive_rng(cfg.sample_seed, {0x73616d706c65ULL});
        for (std::size_t s = 0; s < cfg.samples; ++s) {
            const Tensor h = gumbel_sample(rng, p.shape(), cfg.uniform_clamp_eps);
            const Tensor hp = gumbel_sample(rng, p.shape(), cfg.uniform_clamp_eps);
            const Tensor ms = gumbel_softmax_mask(p, h, hp, cfg.tau);
            for (std::size_t i = 0; i < m.numel(); ++i) m.data()[i] += ms.data()[i];
        }
        for (double& v : m.data()) v = clamp_open(v / static_cast<double>(cfg.samples));
        break;
    }
    }
    return m;
}

Tensor apply_mask(const Tensor& m, const Tensor& z) {
    require_same_shape(m, z, "apply_mask");
    Tensor out = z;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] *= m.data()[i];
    return out;
}

Var apply_mask(Tape& tape, Var m, Var z) {
    require_same_shape(m.value(), z.value(), "apply_mask");
    return tape.mul(m, z);
}

}  // namespace dispel
