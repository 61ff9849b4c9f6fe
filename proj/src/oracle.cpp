#include "mfvi/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfvi {

namespace {

constexpr uint64_t kChunk = 1 << 16;

void decode_assignment(const CollapsedInstance& inst, uint64_t index, std::vector<int>& z) {
  for (int i = inst.num_sites() - 1; i >= 0; --i) {
    const uint64_t k = static_cast<uint64_t>(inst.num_cats(i));
    z[i] = static_cast<int>(index % k);
    index /= k;
  }
}

// odometer step, last site fastest; matches the index order of decode
void advance_assignment(const CollapsedInstance& inst, std::vector<int>& z) {
  for (int i = inst.num_sites() - 1; i >= 0; --i) {
    if (++z[i] < inst.num_cats(i)) return;
    z[i] = 0;
  }
}

struct StreamingLse {
  double max = kNegInf;
  double sum = 0.0;
  void add(double x) {
    if (x == kNegInf) return;
    if (x <= max) {
      sum += std::exp(x - max);
    } else {
      sum = sum * std::exp(max - x) + 1.0;
      max = x;
    }
  }
  double value() const { return max == kNegInf ? kNegInf : max + std::log(sum); }
};

}  // namespace

PosteriorTable enumerate_posterior(const CollapsedInstance& inst, bool parallel) {
  const uint64_t total = inst.state_space_size(kOracleStateCap);
  if (total > kOracleStateCap) {
    throw std::length_error("enumerate_posterior: state space exceeds the oracle cap");
  }
  PosteriorTable table;
  table.num_states = total;
  const bool retain = total <= kOracleRetainCap;
  if (retain) table.log_weights.resize(total);

  const uint64_t num_chunks = (total + kChunk - 1) / kChunk;
  std::vector<double> partial(num_chunks, kNegInf);

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int64_t c = 0; c < static_cast<int64_t>(num_chunks); ++c) {
    EnergyWorkspace ws = inst.make_workspace();
    std::vector<int> z(inst.num_sites());
    const uint64_t begin = static_cast<uint64_t>(c) * kChunk;
    const uint64_t end = std::min(begin + kChunk, total);
    decode_assignment(inst, begin, z);
    StreamingLse lse;
    for (uint64_t idx = begin; idx < end; ++idx) {
      const double w = inst.upsilon(z, ws);
      if (retain) table.log_weights[idx] = w;
      lse.add(w);
      advance_assignment(inst, z);
    }
    partial[c] = lse.value();
  }

  table.log_partition = log_sum_exp(partial);
  if (table.log_partition == kNegInf) {
    throw std::runtime_error("enumerate_posterior: every assignment is impossible");
  }
  return table;
}

double oracle_log_evidence(const CollapsedInstance& inst, const PosteriorTable& table) {
  return table.log_partition + inst.prior_log_normalizer();
}

double exact_kl(const CollapsedInstance& inst, const PosteriorTable& table,
                const ProductDistribution& y, bool parallel) {
  inst.check_product(y);
  const uint64_t total = table.num_states;
  const double log_z = table.log_partition;

  // per-site log rows, -inf for zero mass
  std::vector<std::vector<double>> log_y(y.rows.size());
  for (size_t i = 0; i < y.rows.size(); ++i) {
    log_y[i].resize(y.rows[i].size());
    for (size_t c = 0; c < y.rows[i].size(); ++c) {
      log_y[i][c] = y.rows[i][c] == 0.0 ? kNegInf : std::log(y.rows[i][c]);
    }
  }

  const uint64_t num_chunks = (total + kChunk - 1) / kChunk;
  std::vector<double> partial(num_chunks, 0.0);
  int charged_impossible = 0;

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int64_t c = 0; c < static_cast<int64_t>(num_chunks); ++c) {
    EnergyWorkspace ws = inst.make_workspace();
    std::vector<int> z(inst.num_sites());
    const uint64_t begin = static_cast<uint64_t>(c) * kChunk;
    const uint64_t end = std::min(begin + kChunk, total);
    decode_assignment(inst, begin, z);
    double acc = 0.0;
    for (uint64_t idx = begin; idx < end; ++idx) {
      double lq = 0.0;
      for (int i = 0; i < inst.num_sites(); ++i) {
        const double v = log_y[i][z[i]];
        if (v == kNegInf) {
          lq = kNegInf;
          break;
        }
        lq += v;
      }
      if (lq != kNegInf) {
        const double w = table.retained() ? table.log_weights[idx] : inst.upsilon(z, ws);
        if (w == kNegInf) {
#pragma omp atomic write
          charged_impossible = 1;
        } else {
          acc += std::exp(lq) * (lq - (w - log_z));
        }
      }
      advance_assignment(inst, z);
    }
    partial[c] = acc;
  }

  if (charged_impossible) return kPosInf;
  return deterministic_sum(partial);
}

ExactMarginals exact_marginals(const CollapsedInstance& inst, const PosteriorTable& table) {
  ExactMarginals out;
  out.site_marginals.resize(inst.num_sites());
  for (int i = 0; i < inst.num_sites(); ++i) out.site_marginals[i].assign(inst.num_cats(i), 0.0);

  EnergyWorkspace ws = inst.make_workspace();
  std::vector<int> z(inst.num_sites(), 0);
  for (uint64_t idx = 0; idx < table.num_states; ++idx) {
    const double w = table.retained() ? table.log_weights[idx] : inst.upsilon(z, ws);
    if (w != kNegInf) {
      const double p = std::exp(w - table.log_partition);
      for (int i = 0; i < inst.num_sites(); ++i) out.site_marginals[i][z[i]] += p;
    }
    advance_assignment(inst, z);
  }
  return out;
}

std::vector<double> exact_conditional(const CollapsedInstance& inst, std::vector<int> z,
                                      int site) {
  EnergyWorkspace ws = inst.make_workspace();
  std::vector<double> logits(inst.num_cats(site));
  for (int c = 0; c < inst.num_cats(site); ++c) {
    z[site] = c;
    logits[c] = inst.upsilon(z, ws);
  }
  const double lse = log_sum_exp(logits);
  if (lse == kNegInf) {
    throw std::runtime_error("exact_conditional: no admissible category");
  }
  std::vector<double> out(logits.size());
  for (size_t c = 0; c < logits.size(); ++c) {
    out[c] = logits[c] == kNegInf ? 0.0 : std::exp(logits[c] - lse);
  }
  return out;
}

namespace {

// E[KL(Dir(gamma) || Dir(alpha + N))] for a count vector N with independent
// indicator law per coordinate; sum_l N_l = trials is deterministic, so the
// lnGamma(sum) term is exact and only marginal count laws enter.
double expected_dirichlet_kl(std::span<const double> gamma_row, std::span<const double> alpha,
                             int trials, const std::vector<std::vector<double>>& probs_per_coord) {
  const int K = static_cast<int>(alpha.size());
  double gamma_sum = 0.0, alpha_sum = 0.0;
  for (int l = 0; l < K; ++l) {
    gamma_sum += gamma_row[l];
    alpha_sum += alpha[l];
  }
  const double psi_sum = digamma(gamma_sum);
  double total = log_gamma(gamma_sum) - log_gamma(trials + alpha_sum);
  for (int l = 0; l < K; ++l) {
    total -= log_gamma(gamma_row[l]);
    const std::vector<double> dist = poisson_binomial(probs_per_coord[l]);
    double e_lgamma = 0.0, mean = 0.0;
    for (size_t m = 0; m < dist.size(); ++m) {
      if (dist[m] == 0.0) continue;
      e_lgamma += dist[m] * log_gamma(static_cast<double>(m) + alpha[l]);
      mean += dist[m] * static_cast<double>(m);
    }
    total += e_lgamma;
    total += (gamma_row[l] - alpha[l] - mean) * (digamma(gamma_row[l]) - psi_sum);
  }
  return total;
}

}  // namespace

double lda_full_kl(const LdaHyperparams& hp, const LdaVariationalState& state,
                   const CollapsedInstance& inst, const PosteriorTable& table) {
  const double kl_z = exact_kl(inst, table, product_from_lda(hp, state));
  if (kl_z == kPosInf) return kPosInf;
  const int K = hp.num_topics;
  double total = kl_z;
  for (int d = 0; d < hp.num_docs; ++d) {
    std::vector<std::vector<double>> probs(K);
    for (int l = 0; l < K; ++l) {
      probs[l].reserve(hp.doc_lengths[d]);
      for (int i = 0; i < hp.doc_lengths[d]; ++i) probs[l].push_back(state.phi[d][i][l]);
    }
    std::vector<double> gamma_row(K);
    for (int l = 0; l < K; ++l) gamma_row[l] = state.gamma(d, l);
    total += expected_dirichlet_kl(gamma_row, hp.alpha, hp.doc_lengths[d], probs);
  }
  return total;
}

double pg_full_kl(const MmsbHyperparams& hp, const PgState& state,
                  const CollapsedInstance& inst, const PosteriorTable& table) {
  const double kl_z = exact_kl(inst, table, product_from_pg(inst, state));
  if (kl_z == kPosInf) return kPosInf;
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  double total = kl_z;
  for (int i = 0; i < n; ++i) {
    std::vector<std::vector<double>> probs(K);
    for (int l = 0; l < K; ++l) {
      auto& pl = probs[l];
      pl.reserve(static_cast<size_t>(2) * (n - 1));
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* sent = state.pair(i, j);
        double p = 0.0;
        for (int t = 0; t < K; ++t) p += sent[l * K + t];
        pl.push_back(std::min(p, 1.0));
      }
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* recv = state.pair(j, i);
        double p = 0.0;
        for (int s = 0; s < K; ++s) p += recv[s * K + l];
        pl.push_back(std::min(p, 1.0));
      }
    }
    std::vector<double> gamma_row(K);
    for (int l = 0; l < K; ++l) gamma_row[l] = state.gamma(i, l);
    total += expected_dirichlet_kl(gamma_row, hp.alpha, 2 * (n - 1), probs);
  }
  return total;
}

double ff_full_kl(const MmsbHyperparams& hp, const FfState& state,
                  const CollapsedInstance& inst, const PosteriorTable& table) {
  const double kl_z = exact_kl(inst, table, product_from_ff(inst, state));
  if (kl_z == kPosInf) return kPosInf;
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  double total = kl_z;
  for (int i = 0; i < n; ++i) {
    std::vector<std::vector<double>> probs(K);
    for (int l = 0; l < K; ++l) {
      auto& pl = probs[l];
      pl.reserve(static_cast<size_t>(2) * (n - 1));
      for (int j = 0; j < n; ++j) {
        if (j != i) pl.push_back(state.out(i, j)[l]);
      }
      for (int j = 0; j < n; ++j) {
        if (j != i) pl.push_back(state.in(j, i)[l]);
      }
    }
    std::vector<double> gamma_row(K);
    for (int l = 0; l < K; ++l) gamma_row[l] = state.gamma(i, l);
    total += expected_dirichlet_kl(gamma_row, hp.alpha, 2 * (n - 1), probs);
  }
  return total;
}

}  // namespace mfvi
