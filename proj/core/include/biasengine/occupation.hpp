#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "biasengine/axis.hpp"
#include "biasengine/providers.hpp"

namespace biasengine {

/// The eight occupation bias axes (gender, age, ethnicity, bodytype,
/// environment, clothing, emotion, disability) with their counterfactual
/// prompt templates and extraction questions.
AxisSet occupation_axes();

/// The 26 occupation prompts of the bundled audit scenario.
std::vector<std::string> occupation_prompts();

/// A seeded log-linear joint over the occupation axes with a handful of
/// strong pairwise couplings; each occupation gets its own couplings so
/// corpus-level aggregation has structure to find.
SyntheticModel make_occupation_model(const std::string& occupation, std::uint64_t seed);

/// Provider over all 26 occupations.
SyntheticProvider make_occupation_provider(std::uint64_t seed);

/// Three coupled axes (gender drives age; clothing heavily skewed) built
/// so the mitigation loop resolves in two steps: mitigating gender also
/// fixes age, clothing needs its own step.
SyntheticModel coupled_demo_model();
AxisSet coupled_demo_axes();

/// Two axes where the initially unbiased one is degraded by mitigating
/// the other; exercises the worsen-alert path.
SyntheticModel adversarial_demo_model();

/// Independent joint over the given axes (product of uniform marginals).
SyntheticModel independent_model(const AxisSet& axes, const std::string& prompt_key);

}  // namespace biasengine
