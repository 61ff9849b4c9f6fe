#include "mfvi/lda.hpp"

#include <cmath>
#include <stdexcept>

#include "mfvi/rng.hpp"

namespace mfvi {

int LdaHyperparams::total_words() const {
  int n = 0;
  for (int nd : doc_lengths) n += nd;
  return n;
}

void LdaHyperparams::validate() const {
  if (num_docs < 1 || num_topics < 1 || vocab_size < 1) {
    throw std::invalid_argument("lda: D, K, V must be >= 1");
  }
  if (static_cast<int>(doc_lengths.size()) != num_docs) {
    throw std::invalid_argument("lda: doc_lengths size mismatch");
  }
  for (int nd : doc_lengths) {
    if (nd < 1) throw std::invalid_argument("lda: every n_d must be >= 1");
  }
  if (static_cast<int>(alpha.size()) != num_topics) {
    throw std::invalid_argument("lda: alpha size mismatch");
  }
  for (double a : alpha) {
    if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("lda: alpha must be positive");
  }
  if (static_cast<int>(eta.size()) != num_topics) {
    throw std::invalid_argument("lda: eta row count mismatch");
  }
  for (const auto& row : eta) {
    if (static_cast<int>(row.size()) != vocab_size) {
      throw std::invalid_argument("lda: eta column count mismatch");
    }
    if (!is_simplex(row, 1e-9)) throw std::invalid_argument("lda: eta row is not a simplex");
  }
  for (int r = 0; r < vocab_size; ++r) {
    bool reachable = false;
    for (int l = 0; l < num_topics; ++l) {
      if (eta[l][r] > 0.0) reachable = true;
    }
    if (!reachable) {
      throw std::invalid_argument("lda: vocabulary entry with no positive eta column");
    }
  }
}

std::pair<LdaCorpus, LdaLatents> lda_sample(const LdaHyperparams& hp, uint64_t seed) {
  hp.validate();
  Rng rng(seed);
  LdaCorpus corpus;
  LdaLatents latents;
  corpus.words.resize(hp.num_docs);
  latents.pi.resize(hp.num_docs);
  latents.topics.resize(hp.num_docs);
  for (int d = 0; d < hp.num_docs; ++d) {
    latents.pi[d] = rng.dirichlet(hp.alpha);
    const int nd = hp.doc_lengths[d];
    corpus.words[d].resize(nd);
    latents.topics[d].resize(nd);
    for (int i = 0; i < nd; ++i) {
      const int z = rng.categorical(latents.pi[d]);
      latents.topics[d][i] = z;
      corpus.words[d][i] = rng.categorical(hp.eta[z]);
    }
  }
  return {std::move(corpus), std::move(latents)};
}

double lda_collapsed_energy(const LdaHyperparams& hp, const LdaCorpus& corpus,
                            const std::vector<std::vector<int>>& z) {
  if (static_cast<int>(z.size()) != hp.num_docs) {
    throw std::invalid_argument("lda_collapsed_energy: document count mismatch");
  }
  const int K = hp.num_topics;
  double alpha_sum = 0.0;
  for (double a : hp.alpha) alpha_sum += a;

  double total = 0.0;
  std::vector<int> counts(K);
  for (int d = 0; d < hp.num_docs; ++d) {
    const int nd = hp.doc_lengths[d];
    if (static_cast<int>(z[d].size()) != nd) {
      throw std::invalid_argument("lda_collapsed_energy: word count mismatch");
    }
    counts.assign(K, 0);
    for (int i = 0; i < nd; ++i) {
      const int l = z[d][i];
      const double e = hp.eta[l][corpus.words[d][i]];
      if (e == 0.0) return kNegInf;
      total += std::log(e);
      ++counts[l];
    }
    for (int l = 0; l < K; ++l) total += log_gamma(counts[l] + hp.alpha[l]);
    total -= log_gamma(nd + alpha_sum);
  }
  return total;
}

void lda_cavi_step(const LdaHyperparams& hp, const LdaCorpus& corpus,
                   LdaVariationalState& state) {
  const int K = hp.num_topics;
  std::vector<double> logits(K);
  for (int d = 0; d < hp.num_docs; ++d) {
    const int nd = hp.doc_lengths[d];
    for (int i = 0; i < nd; ++i) {
      const int word = corpus.words[d][i];
      for (int l = 0; l < K; ++l) {
        const double e = hp.eta[l][word];
        logits[l] = (e == 0.0) ? kNegInf : std::log(e) + digamma(state.gamma(d, l));
      }
      const double lse = log_sum_exp(logits);
      if (lse == kNegInf) {
        throw std::runtime_error("lda_cavi_step: word with zero mass under every topic");
      }
      auto& row = state.phi[d][i];
      for (int l = 0; l < K; ++l) row[l] = std::exp(logits[l] - lse);
    }
    for (int l = 0; l < K; ++l) {
      double s = hp.alpha[l];
      for (int i = 0; i < nd; ++i) s += state.phi[d][i][l];
      state.gamma(d, l) = s;
    }
  }
}

double lda_elbo(const LdaHyperparams& hp, const LdaCorpus& corpus,
                const LdaVariationalState& state) {
  const int K = hp.num_topics;
  double alpha_sum = 0.0, lg_alpha = 0.0;
  for (double a : hp.alpha) {
    alpha_sum += a;
    lg_alpha += log_gamma(a);
  }

  double total = 0.0;
  std::vector<double> elog(K);
  for (int d = 0; d < hp.num_docs; ++d) {
    double gamma_sum = 0.0;
    for (int l = 0; l < K; ++l) gamma_sum += state.gamma(d, l);
    const double psi_sum = digamma(gamma_sum);
    for (int l = 0; l < K; ++l) elog[l] = digamma(state.gamma(d, l)) - psi_sum;

    // E ln p(pi_d) - E ln q(pi_d)
    total += log_gamma(alpha_sum) - lg_alpha;
    total -= log_gamma(gamma_sum);
    for (int l = 0; l < K; ++l) {
      total += (hp.alpha[l] - 1.0) * elog[l];
      total += log_gamma(state.gamma(d, l)) - (state.gamma(d, l) - 1.0) * elog[l];
    }

    const int nd = hp.doc_lengths[d];
    for (int i = 0; i < nd; ++i) {
      const int word = corpus.words[d][i];
      const auto& row = state.phi[d][i];
      for (int l = 0; l < K; ++l) {
        const double p = row[l];
        if (p == 0.0) continue;
        total += p * elog[l];                  // E ln p(Z | pi)
        total += xlogy(p, hp.eta[l][word]);    // E ln p(X | Z)
        total -= p * std::log(p);              // entropy of q(Z)
      }
    }
  }
  return total;
}

LdaVariationalState lda_init_state(const LdaHyperparams& hp, const LdaCorpus& corpus,
                                   uint64_t seed) {
  const int K = hp.num_topics;
  LdaVariationalState state;
  state.gamma = Mat(hp.num_docs, K);
  state.phi.resize(hp.num_docs);
  for (int d = 0; d < hp.num_docs; ++d) {
    Rng rng(Rng::substream(seed, static_cast<uint64_t>(d)));
    const int nd = hp.doc_lengths[d];
    for (int l = 0; l < K; ++l) {
      state.gamma(d, l) = (hp.alpha[l] + static_cast<double>(nd) / K) * rng.uniform(0.95, 1.05);
    }
    state.phi[d].assign(nd, std::vector<double>(K, 0.0));
  }
  // one responsibility update fills phi; gamma is refreshed alongside
  lda_cavi_step(hp, corpus, state);
  return state;
}

LdaFitResult lda_fit(const LdaHyperparams& hp, const LdaCorpus& corpus,
                     const LdaFitOptions& opts) {
  hp.validate();
  if (!(opts.tol > 0.0)) throw std::invalid_argument("lda_fit: tol must be positive");
  LdaFitResult result;
  result.state = lda_init_state(hp, corpus, opts.seed);
  double prev = kNegInf;
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    if (sweep > 0) lda_cavi_step(hp, corpus, result.state);
    const double elbo = lda_elbo(hp, corpus, result.state);
    if (!std::isfinite(elbo)) {
      throw std::runtime_error("lda_fit: non-finite ELBO (unreachable word under eta?)");
    }
    result.elbo_trace.push_back(elbo);
    result.sweeps = sweep + 1;
    if (sweep > 0 && std::abs(elbo - prev) < opts.tol * (1.0 + std::abs(elbo))) {
      result.converged = true;
      break;
    }
    prev = elbo;
  }
  return result;
}

}  // namespace mfvi
