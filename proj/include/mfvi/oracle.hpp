#pragma once

// Brute-force ground truth on tiny instances: full enumeration of the
// collapsed posterior, log evidence, exact KL against product distributions,
// exact marginals, and the full-posterior KL of fitted variational states
// (categorical part by enumeration, Dirichlet part in closed form).
//
// Enumeration walks assignments in lexicographic site order (site 0 most
// significant). The parallel path splits the index range into fixed chunks
// and reduces per chunk in index order, so results do not depend on the
// thread count.

#include <cstdint>
#include <vector>

#include "mfvi/functionals.hpp"

namespace mfvi {

inline constexpr uint64_t kOracleStateCap = 10'000'000;   // hard size error above
inline constexpr uint64_t kOracleRetainCap = 1'000'000;   // log weights kept below

struct PosteriorTable {
  uint64_t num_states = 0;
  double log_partition = kNegInf;     // log sum_z exp(Upsilon(z))
  std::vector<double> log_weights;    // Upsilon per assignment when retained
  bool retained() const { return !log_weights.empty(); }
};

// Throws std::length_error above kOracleStateCap and std::runtime_error when
// every assignment is impossible.
PosteriorTable enumerate_posterior(const CollapsedInstance& inst, bool parallel = true);

// log p(X): restores the Dirichlet prior normalizers dropped by Upsilon.
double oracle_log_evidence(const CollapsedInstance& inst, const PosteriorTable& table);

// KL(Q_y || collapsed posterior); +inf when Q_y charges an impossible z.
double exact_kl(const CollapsedInstance& inst, const PosteriorTable& table,
                const ProductDistribution& y, bool parallel = true);

struct ExactMarginals {
  // per site; for MMSB sites these are the exact joint (Z_out, Z_in) tables
  std::vector<std::vector<double>> site_marginals;
};

ExactMarginals exact_marginals(const CollapsedInstance& inst, const PosteriorTable& table);

// Exact conditional P(Z_site = c | rest of z, X) for one site, by direct
// evaluation of the two-sided energies (independent of the T-map path).
std::vector<double> exact_conditional(const CollapsedInstance& inst, std::vector<int> z,
                                      int site);

// KL of a variational state to the full posterior over (pi, Z):
// KL(q(Z) || P(Z|X)) + E_{q(Z)}[ sum KL(Dir(gamma) || Dir(alpha + N(Z))) ].
// The expected Dirichlet KL is exact via Poisson-binomial count laws.
double lda_full_kl(const LdaHyperparams& hp, const LdaVariationalState& state,
                   const CollapsedInstance& inst, const PosteriorTable& table);
double pg_full_kl(const MmsbHyperparams& hp, const PgState& state,
                  const CollapsedInstance& inst, const PosteriorTable& table);
double ff_full_kl(const MmsbHyperparams& hp, const FfState& state,
                  const CollapsedInstance& inst, const PosteriorTable& table);

}  // namespace mfvi
