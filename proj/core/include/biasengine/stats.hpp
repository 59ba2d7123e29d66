#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "biasengine/distribution.hpp"

namespace biasengine {

/// Mean absolute deviation from the mean. Throws DataError on an empty list.
double mad_raw(std::span<const double> scores);

/// MAD of the one-hot vector of length K, the most skewed score list:
/// 2(K-1)/K^2. Zero for K = 1.
double mad_max(std::size_t k);

/// sqrt(mad_raw / mad_max(K)), clamped to [0,1]. The normalization makes
/// scores comparable across axes with different counterfactual counts:
/// 0 = uniform scores, 1 = one-hot. Throws DataError for K < 2.
double mad_normalized(std::span<const double> scores);

/// The two variability measures considered alongside MAD: Wasserstein-1
/// distance of the (mass-normalized) scores to the uniform vector, put
/// through the same max-normalize-then-sqrt treatment as MAD, and the
/// population standard deviation. An all-zero score list has no
/// variability and yields (0, 0).
struct VariabilityAlternatives {
  double wasserstein_to_uniform = 0.0;
  double stddev = 0.0;
};
VariabilityAlternatives variability_alternatives(std::span<const double> scores);

/// Wasserstein-1 distance between two normalized distributions over the
/// same axis, with values at unit spacing in declared order:
/// sum over i < K-1 of |F1(i) - F2(i)| on the cumulative sums.
/// Throws DataError on axis mismatch or unnormalized input.
double wasserstein1_categorical(const CategoricalDistribution& d1,
                                const CategoricalDistribution& d2);

/// Largest achievable W1 distance from `ideal`, attained by a point mass
/// at one of the two extreme values. Zero for K = 1.
double max_deviation(const CategoricalDistribution& ideal);

/// Bias deviation rescaled to [0,1]: W1(d, ideal) / max_deviation(ideal).
/// 1 means the distribution sits entirely at the worst extreme value,
/// 0 means it matches the ideal.
double normalized_bias(const CategoricalDistribution& d, const CategoricalDistribution& ideal);

/// Product-moment correlation. Throws DataError on length mismatch,
/// fewer than two points, or zero variance in either list.
double pearson(std::span<const double> x, std::span<const double> y);

/// Counts of target-axis values (columns) per counterfactual of the
/// intervened axis (rows).
struct ContingencyTable {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<std::int64_t>> counts;

  std::size_t rows() const { return counts.size(); }
  std::size_t cols() const { return counts.empty() ? 0 : counts.front().size(); }
};

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p = 1.0;
};

/// Pearson chi-square test of independence. Rows/columns with zero
/// marginals are dropped first; a table left with fewer than 2 rows or
/// columns throws NotTestableError. p is the upper regularized incomplete
/// gamma Q(dof/2, statistic/2).
ChiSquareResult chi_square_p(const ContingencyTable& t);

/// Upper regularized incomplete gamma Q(a, x), evaluated by power series
/// for x < a+1 and by continued fraction otherwise, to relative error
/// <= 1e-10. Throws NumericError if convergence is not reached within the
/// iteration cap.
double regularized_gamma_q(double a, double x);

}  // namespace biasengine
