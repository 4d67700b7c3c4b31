#pragma once

#include <string>
#include <string_view>

namespace cotflow {

enum class Activation { Tanh, Gelu, Swish, Cos, Identity };

Activation activation_from_string(std::string_view name);  // throws ConfigError
std::string_view to_string(Activation act);

double sigma(Activation act, double z);
double dsigma(Activation act, double z);
double ddsigma(Activation act, double z);

// Smoothness bound M = |sigma(0)| + sup|sigma'|. Analytic for tanh, cos and
// identity; for gelu/swish the supremum is found once by grid search over
// [-50, 50] and cached.
double activation_bound(Activation act);

}  // namespace cotflow
