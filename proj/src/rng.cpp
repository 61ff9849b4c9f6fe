#include "mfvi/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace mfvi {

namespace {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::domain_error("gamma: shape must be positive");
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    const double u = uniform01();
    return g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> Rng::dirichlet(std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  if (alpha.size() == 1) {
    if (!(alpha[0] > 0.0)) throw std::domain_error("dirichlet: alpha must be positive");
    out[0] = 1.0;
    return out;
  }
  double sum = 0.0;
  for (size_t k = 0; k < alpha.size(); ++k) {
    if (!(alpha[k] > 0.0)) throw std::domain_error("dirichlet: alpha must be positive");
    out[k] = gamma(alpha[k]);
    sum += out[k];
  }
  if (sum == 0.0) {
    // all draws underflowed (extreme alpha); fall back to the largest weight
    size_t arg = 0;
    for (size_t k = 1; k < alpha.size(); ++k) {
      if (alpha[k] > alpha[arg]) arg = k;
    }
    out.assign(alpha.size(), 0.0);
    out[arg] = 1.0;
    return out;
  }
  for (double& x : out) x /= sum;
  return out;
}

int Rng::categorical(std::span<const double> p) {
  const double u = uniform01();
  double acc = 0.0;
  for (size_t k = 0; k + 1 < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(p.size()) - 1;
}

uint64_t Rng::substream(uint64_t seed, uint64_t index) {
  // stream 0 is the run seed itself, so a run over a slice reproduces the
  // corresponding stream of the joint run when given substream(seed, i)
  if (index == 0) return seed;
  uint64_t s = seed ^ (0x6a09e667f3bcc909ULL + index * 0x3c6ef372fe94f82bULL);
  return splitmix64(s);
}

}  // namespace mfvi
