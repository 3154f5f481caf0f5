#include "dispel/optimizer.hpp"

#include "dispel/error.hpp"

#include <cmath>

namespace dispel {

void optimizer_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr, const AdamConfig& cfg) {
    for (const auto& [name, g] : grads) {
        if (!params.contains(name)) throw ContractError("gradient for unknown parameter '" + name + "'");
        const auto& entry = params.at(name);
        if (!entry.trainable) throw ContractError("gradient for frozen parameter '" + name + "'");
        if (entry.value.shape() != g.shape())
            throw DimensionError("gradient shape " + shape_to_string(g.shape()) + " for parameter '" + name +
                                 "' of shape " + shape_to_string(entry.value.shape()));
    }
    for (const auto& [name, g] : grads) {
        Tensor& p = params.mutable_value(name);
        auto [it, fresh] = state.try_emplace(name);
        AdamMoments& mom = it->second;
        if (fresh) {
            mom.first = Tensor::zeros(p.shape());
            mom.second = Tensor::zeros(p.shape());
        }
        ++mom.step;
        const double t = static_cast<double>(mom.step);
        const double c1 = 1.0 - std::pow(cfg.beta1, t);
        const double c2 = 1.0 - std::pow(cfg.beta2, t);
        auto pv = p.data();
        auto m = mom.first.data();
        auto v = mom.second.data();
        const auto gv = g.data();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gv[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            pv[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace dispel
