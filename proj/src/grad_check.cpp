#include "dispel/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace dispel {

namespace {

double evaluate(const ScalarFn& f, const ParamValues& params) {
    Tape tape;
    ParamVars vars;
    for (const auto& [name, value] : params) vars.emplace(name, tape.constant(value));
    return f(tape, vars).value().item();
}

}  // namespace

double grad_check(const ScalarFn& f, const ParamValues& params, double eps) {
    GradMap analytic;
    {
        Tape tape;
        ParamVars vars;
        for (const auto& [name, value] : params) vars.emplace(name, tape.parameter(name, value));
        analytic = tape.backward(f(tape, vars));
    }

    double worst = 0.0;
    ParamValues probe = params;
    for (const auto& [name, value] : params) {
        const auto it = analytic.find(name);
        Tensor& slot = probe.at(name);
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double orig = value.data()[i];
            slot.data()[i] = orig + eps;
            const double up = evaluate(f, probe);
            slot.data()[i] = orig - eps;
            const double down = evaluate(f, probe);
            slot.data()[i] = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = it == analytic.end() ? 0.0 : it->second.data()[i];
            worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
        }
    }
    return worst;
}

}  // namespace dispel
