#pragma once

// Mixed membership stochastic blockmodel: sampling, collapsed energy,
// partially grouped CAVI (pair responsibilities over K^2 categories) and
// fully factorized CAVI, their ELBOs, and pair-correlation analysis.
//
// Pair-responsibility sweeps and ELBO accumulation are data-parallel; every
// entry point takes a `parallel` flag so the serial reference path stays
// available for testing and benchmarking. Both paths call the same per-pair
// kernels and reduce in a fixed order, so results are bit-identical.

#include <cstdint>
#include <utility>
#include <vector>

#include "mfvi/numerics.hpp"

namespace mfvi {

struct MmsbHyperparams {
  int num_nodes = 0;                     // n >= 2
  int num_groups = 0;                    // K >= 1
  std::vector<double> alpha;             // K, positive
  std::vector<std::vector<double>> bmat; // K x K, entries in [0,1]

  // Throws std::invalid_argument; rejects the all-zero and all-one B.
  void validate() const;
};

struct MmsbGraph {
  int num_nodes = 0;
  std::vector<int8_t> adj;               // row-major n*n, diagonal unused

  MmsbGraph() = default;
  explicit MmsbGraph(int n) : num_nodes(n), adj(static_cast<size_t>(n) * n, 0) {}
  int edge(int i, int j) const { return adj[static_cast<size_t>(i) * num_nodes + j]; }
  void set_edge(int i, int j, int v) { adj[static_cast<size_t>(i) * num_nodes + j] = static_cast<int8_t>(v); }
};

struct MmsbLatents {
  std::vector<std::vector<double>> pi;   // n rows over K
  std::vector<int> z_out, z_in;          // row-major n*n, diagonal unused
};

std::pair<MmsbGraph, MmsbLatents> mmsb_sample(const MmsbHyperparams& hp, uint64_t seed);

// Upsilon(z) = sum_ll' [M log B + (A-M) log(1-B)]
//            + sum_il lnGamma(N_il + alpha_l) - n lnGamma(2n-2 + sum alpha).
// z_out/z_in are row-major n*n tables; -inf on impossible configurations.
double mmsb_collapsed_energy(const MmsbHyperparams& hp, const MmsbGraph& graph,
                             const std::vector<int>& z_out, const std::vector<int>& z_in);

// Partially grouped state: one simplex over K^2 per ordered pair.
struct PgState {
  int num_nodes = 0, num_groups = 0;
  std::vector<double> resp;   // [(i*n + j)*K*K + s*K + t]
  Mat gamma;                  // n x K

  const double* pair(int i, int j) const {
    return resp.data() + (static_cast<size_t>(i) * num_nodes + j) *
                             (static_cast<size_t>(num_groups) * num_groups);
  }
  double* pair(int i, int j) {
    return resp.data() + (static_cast<size_t>(i) * num_nodes + j) *
                             (static_cast<size_t>(num_groups) * num_groups);
  }
};

// Fully factorized state: sender and receiver simplexes over K per pair.
struct FfState {
  int num_nodes = 0, num_groups = 0;
  std::vector<double> resp_out, resp_in;  // [(i*n + j)*K + l]
  Mat gamma;

  const double* out(int i, int j) const {
    return resp_out.data() + (static_cast<size_t>(i) * num_nodes + j) * num_groups;
  }
  double* out(int i, int j) {
    return resp_out.data() + (static_cast<size_t>(i) * num_nodes + j) * num_groups;
  }
  const double* in(int i, int j) const {
    return resp_in.data() + (static_cast<size_t>(i) * num_nodes + j) * num_groups;
  }
  double* in(int i, int j) {
    return resp_in.data() + (static_cast<size_t>(i) * num_nodes + j) * num_groups;
  }
};

// One block sweep: all pair responsibilities from the frozen gamma table,
// then one gamma refresh. Throws std::runtime_error when a pair has zero
// unnormalized mass in every cell (contradictory B and X).
void pg_cavi_step(const MmsbHyperparams& hp, const MmsbGraph& graph, PgState& state,
                  bool parallel = true);
void ff_cavi_step(const MmsbHyperparams& hp, const MmsbGraph& graph, FfState& state,
                  bool parallel = true);

double pg_elbo(const MmsbHyperparams& hp, const MmsbGraph& graph, const PgState& state,
               bool parallel = true);
double ff_elbo(const MmsbHyperparams& hp, const MmsbGraph& graph, const FfState& state,
               bool parallel = true);

enum class MmsbInit {
  kJitter,     // gamma_il = (alpha_l + 2(n-1)/K) * U(0.95, 1.05)
  kSymmetric,  // gamma_il = alpha_l + 2(n-1)/K exactly; stays at the
               // symmetric CAVI fixed point for symmetric alpha and B
};

PgState pg_init_state(const MmsbHyperparams& hp, const MmsbGraph& graph, MmsbInit init,
                      uint64_t seed, bool parallel = true);
FfState ff_init_state(const MmsbHyperparams& hp, const MmsbGraph& graph, MmsbInit init,
                      uint64_t seed, bool parallel = true);

struct MmsbFitOptions {
  MmsbInit init = MmsbInit::kJitter;
  double tol = 1e-8;
  int max_sweeps = 500;
  int restarts = 1;
  uint64_t seed = 0;
  bool parallel = true;
};

template <class State>
struct MmsbFitResult {
  State state;                        // best restart by final ELBO
  std::vector<double> elbo_trace;     // trace of the best restart
  std::vector<double> restart_elbos;  // final ELBO per restart
  double best_elbo = kNegInf;
  int best_restart = 0;
  int sweeps = 0;                     // sweeps of the best restart
  bool converged = false;
};

// Restart r runs from Rng::substream(seed, r).
MmsbFitResult<PgState> pg_fit(const MmsbHyperparams& hp, const MmsbGraph& graph,
                              const MmsbFitOptions& opts);
MmsbFitResult<FfState> ff_fit(const MmsbHyperparams& hp, const MmsbGraph& graph,
                              const MmsbFitOptions& opts);

struct PairCorrelation {
  int i = 0, j = 0;
  double corr = 0.0;
  bool defined = false;  // false when a marginal is degenerate (p or q in {0,1})
};

// Correlation of the indicators 1{Z_out = group} and 1{Z_in = group} under a
// K x K joint table (row-major).
PairCorrelation correlation_from_joint(std::span<const double> joint, int num_groups,
                                       int group);

std::vector<PairCorrelation> pair_correlations(const PgState& state, int group);

struct CorrClusters {
  double center_lo = 0.0, center_hi = 0.0;  // 2-means centers, sorted
  double prop_lo = 0.0, prop_hi = 0.0;      // member proportions of the used pairs
  int used = 0;
  int undefined = 0;                        // excluded pairs
};

CorrClusters cluster_pair_correlations(const std::vector<PairCorrelation>& corrs);

}  // namespace mfvi
