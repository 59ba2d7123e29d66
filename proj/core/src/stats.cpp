#include "biasengine/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "biasengine/errors.hpp"

namespace biasengine {

double mad_raw(std::span<const double> scores) {
  if (scores.empty()) throw DataError("mad_raw: empty score list");
  double mean = std::accumulate(scores.begin(), scores.end(), 0.0) /
                static_cast<double>(scores.size());
  double sum = 0.0;
  for (double s : scores) sum += std::fabs(s - mean);
  return sum / static_cast<double>(scores.size());
}

double mad_max(std::size_t k) {
  if (k < 1) throw DataError("mad_max: K must be >= 1");
  if (k == 1) return 0.0;
  double kd = static_cast<double>(k);
  return 2.0 * (kd - 1.0) / (kd * kd);
}

double mad_normalized(std::span<const double> scores) {
  if (scores.size() < 2) {
    throw DataError("mad_normalized: needs at least 2 scores, no variability definable");
  }
  double ratio = mad_raw(scores) / mad_max(scores.size());
  return std::clamp(std::sqrt(ratio), 0.0, 1.0);
}

VariabilityAlternatives variability_alternatives(std::span<const double> scores) {
  if (scores.size() < 2) throw DataError("variability_alternatives: needs at least 2 scores");
  std::size_t k = scores.size();
  double kd = static_cast<double>(k);

  VariabilityAlternatives out;
  double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / kd;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  out.stddev = std::sqrt(var / kd);

  double mass = std::accumulate(scores.begin(), scores.end(), 0.0);
  if (mass > 0.0) {
    // Treat the scores as mass over K slots and compare to the uniform
    // vector; then normalize by the one-hot maximum (K-1)/2 and take the
    // square root, mirroring the MAD treatment.
    double w1 = 0.0;
    double f_scores = 0.0;
    double f_uniform = 0.0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
      f_scores += scores[i] / mass;
      f_uniform += 1.0 / kd;
      w1 += std::fabs(f_scores - f_uniform);
    }
    double w1_max = (kd - 1.0) / 2.0;
    out.wasserstein_to_uniform = std::clamp(std::sqrt(w1 / w1_max), 0.0, 1.0);
  }
  return out;
}

double wasserstein1_categorical(const CategoricalDistribution& d1,
                                const CategoricalDistribution& d2) {
  if (d1.axis() != d2.axis()) {
    throw DataError("wasserstein1: axis mismatch ('" + d1.axis() + "' vs '" + d2.axis() + "')");
  }
  if (d1.size() != d2.size()) {
    throw DataError("wasserstein1: arity mismatch on axis '" + d1.axis() + "'");
  }
  if (!d1.is_normalized() || !d2.is_normalized()) {
    throw DataError("wasserstein1: inputs must be normalized (axis '" + d1.axis() + "')");
  }
  double f1 = 0.0, f2 = 0.0, w1 = 0.0;
  for (std::size_t i = 0; i + 1 < d1.size(); ++i) {
    f1 += d1.weights()[i];
    f2 += d2.weights()[i];
    w1 += std::fabs(f1 - f2);
  }
  return w1;
}

double max_deviation(const CategoricalDistribution& ideal) {
  if (!ideal.is_normalized()) {
    throw DataError("max_deviation: ideal must be normalized (axis '" + ideal.axis() + "')");
  }
  // W1 from the ideal is maximized by a point mass at one end of the
  // value order; those two extremes evaluate to sum(F*) and sum(1 - F*).
  double f = 0.0, low = 0.0, high = 0.0;
  for (std::size_t i = 0; i + 1 < ideal.size(); ++i) {
    f += ideal.weights()[i];
    low += f;
    high += 1.0 - f;
  }
  return std::max(low, high);
}

double normalized_bias(const CategoricalDistribution& d, const CategoricalDistribution& ideal) {
  double maxdev = max_deviation(ideal);
  if (maxdev <= 0.0) return 0.0;
  return std::clamp(wasserstein1_categorical(d, ideal) / maxdev, 0.0, 1.0);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.size() < 2) throw DataError("pearson: needs at least 2 points");
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DataError("pearson: zero variance, correlation undefined");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

constexpr int kGammaMaxIter = 200;
constexpr double kGammaRelTol = 1e-10;

/// Lower regularized incomplete gamma P(a, x) by power series; valid and
/// fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < kGammaMaxIter; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kGammaRelTol) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw NumericError("incomplete gamma series did not converge (a=" + std::to_string(a) +
                     ", x=" + std::to_string(x) + ")");
}

/// Upper regularized incomplete gamma Q(a, x) by modified Lentz continued
/// fraction; valid and fast for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / kGammaRelTol;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kGammaMaxIter; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kGammaRelTol) {
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw NumericError("incomplete gamma continued fraction did not converge (a=" +
                     std::to_string(a) + ", x=" + std::to_string(x) + ")");
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DataError("regularized_gamma_q: requires a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_continued_fraction(a, x);
}

ChiSquareResult chi_square_p(const ContingencyTable& t) {
  std::size_t r = t.rows();
  std::size_t c = t.cols();
  for (const auto& row : t.counts) {
    if (row.size() != c) throw DataError("chi_square_p: ragged contingency table");
    for (std::int64_t v : row) {
      if (v < 0) throw DataError("chi_square_p: negative count");
    }
  }

  std::vector<std::int64_t> row_sums(r, 0), col_sums(c, 0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      row_sums[i] += t.counts[i][j];
      col_sums[j] += t.counts[i][j];
    }
  }
  std::vector<std::size_t> keep_rows, keep_cols;
  for (std::size_t i = 0; i < r; ++i) {
    if (row_sums[i] > 0) keep_rows.push_back(i);
  }
  for (std::size_t j = 0; j < c; ++j) {
    if (col_sums[j] > 0) keep_cols.push_back(j);
  }
  if (keep_rows.size() < 2 || keep_cols.size() < 2) {
    throw NotTestableError("chi_square_p: table degenerate after dropping zero marginals (" +
                           std::to_string(keep_rows.size()) + " rows, " +
                           std::to_string(keep_cols.size()) + " cols)");
  }

  double grand = 0.0;
  for (std::size_t i : keep_rows) grand += static_cast<double>(row_sums[i]);

  ChiSquareResult out;
  for (std::size_t i : keep_rows) {
    for (std::size_t j : keep_cols) {
      double expected =
          static_cast<double>(row_sums[i]) * static_cast<double>(col_sums[j]) / grand;
      double diff = static_cast<double>(t.counts[i][j]) - expected;
      out.statistic += diff * diff / expected;
    }
  }
  out.dof = static_cast<int>((keep_rows.size() - 1) * (keep_cols.size() - 1));
  out.p = regularized_gamma_q(static_cast<double>(out.dof) / 2.0, out.statistic / 2.0);
  return out;
}

}  // namespace biasengine
