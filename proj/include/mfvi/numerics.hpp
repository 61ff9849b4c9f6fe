#pragma once

// Log-domain special functions and small numeric helpers shared by the
// inference engines. Conventions: 0*log(0) = 0, log(0) = -inf, exp(-inf) = 0.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace mfvi {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

// ln Gamma(x) for x > 0 via the Lanczos approximation (g = 7, 9 terms),
// reflection below 1/2. Throws std::domain_error on x <= 0 or non-finite x.
double log_gamma(double x);

// psi(x) = d/dx ln Gamma(x) for x > 0. Recurrence shift to x >= 6, then the
// asymptotic series through the 1/x^14 term. Throws std::domain_error on
// x <= 0.
double digamma(double x);

// log(sum_i exp(v_i)) with max-shift; -inf entries contribute nothing.
// Throws std::invalid_argument on empty input.
double log_sum_exp(std::span<const double> v);

// x*log(y) with the 0*log(0) = 0 convention (also 0 * -inf = 0 for y = 0).
inline double xlogy(double x, double y) {
  if (x == 0.0) return 0.0;
  return x * std::log(y);
}

// x*v treating 0 * (+-inf) as 0.
inline double xtimes(double x, double v) {
  if (x == 0.0) return 0.0;
  return x * v;
}

// Neumaier-compensated serial sum; deterministic for a fixed input order.
double deterministic_sum(std::span<const double> v);

// Rescales a nonnegative vector to sum to exactly 1. Throws
// std::invalid_argument if the sum is not positive and finite.
void normalize_simplex(std::vector<double>& p);

// Entry-wise checks: nonnegative, sum within `tol` of 1.
bool is_simplex(std::span<const double> p, double tol = 1e-12);

// Row-major dense matrix of double, used for gamma tables and B.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, fill) {}
  double& operator()(int i, int j) { return a_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * cols_ + j]; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double* row(int i) { return a_.data() + static_cast<size_t>(i) * cols_; }
  const double* row(int i) const { return a_.data() + static_cast<size_t>(i) * cols_; }
  std::vector<double>& data() { return a_; }
  const std::vector<double>& data() const { return a_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> a_;
};

}  // namespace mfvi
