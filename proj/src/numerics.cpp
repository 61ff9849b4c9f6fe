#include "mfvi/numerics.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace mfvi {

namespace {

// Lanczos coefficients, g = 7.
constexpr double kLanczos[9] = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // ln sqrt(2 pi)

double log_gamma_lanczos(double x) {
  // valid for x >= 0.5
  const double z = x - 1.0;
  double acc = kLanczos[0];
  for (int k = 1; k < 9; ++k) acc += kLanczos[k] / (z + k);
  const double t = z + 7.5;
  return kHalfLog2Pi + (z + 0.5) * std::log(t) - t + std::log(acc);
}

}  // namespace

double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error("log_gamma: requires finite x > 0");
  }
  if (x < 0.5) {
    // reflection: ln Gamma(x) = ln(pi / sin(pi x)) - ln Gamma(1 - x)
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) -
           log_gamma_lanczos(1.0 - x);
  }
  return log_gamma_lanczos(x);
}

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error("digamma: requires finite x > 0");
  }
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number series through B14/(14 x^14).
  const double series = inv2 * (1.0 / 12 +
                        inv2 * (-1.0 / 120 +
                        inv2 * (1.0 / 252 +
                        inv2 * (-1.0 / 240 +
                        inv2 * (1.0 / 132 +
                        inv2 * (-691.0 / 32760 +
                        inv2 * (1.0 / 12)))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) {
    if (x != kNegInf) s += std::exp(x - m);
  }
  return m + std::log(s);
}

double deterministic_sum(std::span<const double> v) {
  double sum = 0.0, comp = 0.0;
  for (double x : v) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

void normalize_simplex(std::vector<double>& p) {
  double s = 0.0;
  for (double x : p) {
    if (x < 0.0 || !std::isfinite(x)) {
      throw std::invalid_argument("normalize_simplex: negative or non-finite entry");
    }
    s += x;
  }
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw std::invalid_argument("normalize_simplex: mass is not positive and finite");
  }
  for (double& x : p) x /= s;
}

bool is_simplex(std::span<const double> p, double tol) {
  double s = 0.0;
  for (double x : p) {
    if (x < 0.0 || x > 1.0) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

}  // namespace mfvi
