#pragma once

// Latent Dirichlet allocation: generative sampling, collapsed energy,
// coordinate-ascent VI on the full posterior, and its ELBO.
//
// Indices are 0-based in memory; the JSON interchange format is 1-based
// (see io.hpp).

#include <cstdint>
#include <utility>
#include <vector>

#include "mfvi/numerics.hpp"

namespace mfvi {

struct LdaHyperparams {
  int num_docs = 0;                       // D
  int num_topics = 0;                     // K
  int vocab_size = 0;                     // V
  std::vector<int> doc_lengths;           // n_d
  std::vector<double> alpha;              // K, positive
  std::vector<std::vector<double>> eta;   // K rows over V, each a simplex

  int total_words() const;
  // Throws std::invalid_argument on dimension or positivity violations,
  // including a vocabulary column with no positive eta entry.
  void validate() const;
};

struct LdaCorpus {
  std::vector<std::vector<int>> words;    // [d][i] in [0, V)
};

struct LdaLatents {
  std::vector<std::vector<double>> pi;    // [d] simplex over K
  std::vector<std::vector<int>> topics;   // [d][i] in [0, K)
};

struct LdaVariationalState {
  std::vector<std::vector<std::vector<double>>> phi;  // [d][i] simplex over K
  Mat gamma;                                          // D x K, positive
};

std::pair<LdaCorpus, LdaLatents> lda_sample(const LdaHyperparams& hp, uint64_t seed);

// Upsilon(z): eta term + sum_dl lnGamma(N_dl + alpha_l) - sum_d lnGamma(n_d + sum alpha).
// Returns -inf when z routes a word through a zero eta entry.
double lda_collapsed_energy(const LdaHyperparams& hp, const LdaCorpus& corpus,
                            const std::vector<std::vector<int>>& z);

// One full sweep: phi responsibilities from the current gamma, then the
// gamma refresh gamma_dl = alpha_l + sum_i phi_dil. Throws std::runtime_error
// if some word has zero mass under every topic.
void lda_cavi_step(const LdaHyperparams& hp, const LdaCorpus& corpus,
                   LdaVariationalState& state);

double lda_elbo(const LdaHyperparams& hp, const LdaCorpus& corpus,
                const LdaVariationalState& state);

// gamma_dl = (alpha_l + n_d/K) * U(0.95, 1.05), phi by one responsibility
// update. Document d uses the substream Rng::substream(seed, d), so a fit of
// a single-document slice reproduces the joint fit bit-for-bit.
LdaVariationalState lda_init_state(const LdaHyperparams& hp, const LdaCorpus& corpus,
                                   uint64_t seed);

struct LdaFitOptions {
  double tol = 1e-8;        // relative ELBO change
  int max_sweeps = 1000;
  uint64_t seed = 0;
};

struct LdaFitResult {
  LdaVariationalState state;
  std::vector<double> elbo_trace;   // one entry per sweep
  bool converged = false;
  int sweeps = 0;
};

LdaFitResult lda_fit(const LdaHyperparams& hp, const LdaCorpus& corpus,
                     const LdaFitOptions& opts);

}  // namespace mfvi
