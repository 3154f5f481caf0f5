#pragma once

#include "dispel/tape.hpp"

#include <functional>
#include <map>
#include <string>

namespace dispel {

using ParamValues = std::map<std::string, Tensor>;
using ParamVars = std::map<std::string, Var>;

/// Scalar-valued function of named parameters, recorded on the given tape.
/// Must be deterministic: any noise it uses has to be fixed outside.
using ScalarFn = std::function<Var(Tape&, const ParamVars&)>;

/// Max over every parameter entry of
///   |analytic - central difference| / max(1, |analytic|).
double grad_check(const ScalarFn& f, const ParamValues& params, double eps = 1e-5);

}  // namespace dispel
