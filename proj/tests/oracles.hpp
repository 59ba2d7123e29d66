// Test-only reference implementations, kept independent of the library's
// computation paths: W1 by explicit greedy transport instead of the CDF
// formula, chi-square tails by numerical integration instead of the
// incomplete gamma, and intersectionality matrices by direct
// marginalization in tuple space instead of annotation counting.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "biasengine/axis.hpp"
#include "biasengine/providers.hpp"

namespace oracles {

/// Minimum-cost transport between two equal-mass vectors over positions
/// 0..K-1 with unit spacing: greedily move the earliest remaining supply
/// to the earliest remaining demand.
double transport_w1(const std::vector<double>& a, const std::vector<double>& b);

/// Upper tail of the chi-square distribution with `dof` degrees of
/// freedom, by Simpson integration of the density.
double chi_square_upper_tail(int dof, double x);

/// Largest-remainder apportionment, re-implemented for oracle equality
/// checks (the rounding rule is part of the generation contract).
std::vector<long long> apportion_ref(const std::vector<double>& quotas, long long n);

/// A joint distribution over an axis set, evaluated in tuple space.
struct TestJoint {
  biasengine::AxisSet axes;
  std::vector<std::pair<std::vector<std::string>, double>> entries;

  static TestJoint from_model(const biasengine::SyntheticModel& model);

  /// Probability restricted to tuples with axis=value (unnormalized mass).
  double value_mass(const std::string& axis, const std::string& value) const;

  /// Marginal probabilities of `axis` in declared value order.
  std::vector<double> marginal(const std::string& axis) const;

  /// Marginal of `target` under the joint conditioned on constraints
  /// (later constraints on the same axis win).
  std::vector<double> conditional_marginal(
      const std::string& target,
      const std::vector<std::pair<std::string, std::string>>& constraints) const;

  /// Tuple probabilities conditioned on constraints, in entry order.
  std::vector<double> conditioned(
      const std::vector<std::pair<std::string, std::string>>& constraints) const;
};

/// Normalized bias deviation computed through the transport oracle:
/// W1(d, ideal) / max over extreme point masses of W1(point, ideal).
double oracle_normalized_bias(const std::vector<double>& d, const std::vector<double>& ideal);

/// Exact-counts intersectionality matrix for budget n with uniform
/// ideals: init and counterfactual sets re-derived by apportioning the
/// joint in tuple space and marginalizing counts directly.
std::vector<std::vector<double>> oracle_matrix(const TestJoint& joint, std::size_t n);

/// Marginal counts of `axis` from apportioned tuple counts.
std::vector<long long> oracle_marginal_counts(
    const TestJoint& joint, std::size_t n,
    const std::vector<std::pair<std::string, std::string>>& constraints,
    const std::string& axis);

/// Per-axis bias deviations of the mitigation state that evenly splits
/// the budget over the value product of `mitigated` (uniform ideals),
/// re-deriving every cell by apportionment in tuple space.
std::vector<double> oracle_state_bias(const TestJoint& joint, std::size_t n,
                                      const std::vector<std::string>& mitigated);

/// Gamma scores for the same mitigation state: the oracle matrix of the
/// state joint dotted with the priority weights.
std::vector<double> oracle_state_gammas(const TestJoint& joint, std::size_t n,
                                        const std::vector<std::string>& mitigated,
                                        const std::vector<std::string>& b_star,
                                        const std::vector<double>& priorities);

}  // namespace oracles
