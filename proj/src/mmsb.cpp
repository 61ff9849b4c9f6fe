#include "mfvi/mmsb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mfvi/rng.hpp"

namespace mfvi {

void MmsbHyperparams::validate() const {
  if (num_nodes < 2) throw std::invalid_argument("mmsb: need n >= 2");
  if (num_groups < 1) throw std::invalid_argument("mmsb: need K >= 1");
  if (static_cast<int>(alpha.size()) != num_groups) {
    throw std::invalid_argument("mmsb: alpha size mismatch");
  }
  for (double a : alpha) {
    if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("mmsb: alpha must be positive");
  }
  if (static_cast<int>(bmat.size()) != num_groups) {
    throw std::invalid_argument("mmsb: B row count mismatch");
  }
  bool any_zero = false, any_one = false;
  for (const auto& row : bmat) {
    if (static_cast<int>(row.size()) != num_groups) {
      throw std::invalid_argument("mmsb: B column count mismatch");
    }
    for (double b : row) {
      if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("mmsb: B entries must be in [0,1]");
      if (b < 1.0) any_one = true;
      if (b > 0.0) any_zero = true;
    }
  }
  if (!any_zero) throw std::invalid_argument("mmsb: B must not be the zero matrix");
  if (!any_one) throw std::invalid_argument("mmsb: B must not be the all-ones matrix");
}

std::pair<MmsbGraph, MmsbLatents> mmsb_sample(const MmsbHyperparams& hp, uint64_t seed) {
  hp.validate();
  const int n = hp.num_nodes;
  Rng rng(seed);
  MmsbGraph graph(n);
  MmsbLatents latents;
  latents.pi.resize(n);
  for (int i = 0; i < n; ++i) latents.pi[i] = rng.dirichlet(hp.alpha);
  latents.z_out.assign(static_cast<size_t>(n) * n, 0);
  latents.z_in.assign(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int zo = rng.categorical(latents.pi[i]);
      const int zi = rng.categorical(latents.pi[j]);
      latents.z_out[static_cast<size_t>(i) * n + j] = zo;
      latents.z_in[static_cast<size_t>(i) * n + j] = zi;
      graph.set_edge(i, j, rng.uniform01() < hp.bmat[zo][zi] ? 1 : 0);
    }
  }
  return {std::move(graph), std::move(latents)};
}

double mmsb_collapsed_energy(const MmsbHyperparams& hp, const MmsbGraph& graph,
                             const std::vector<int>& z_out, const std::vector<int>& z_in) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  if (graph.num_nodes != n) throw std::invalid_argument("mmsb_collapsed_energy: node count mismatch");
  if (z_out.size() != static_cast<size_t>(n) * n || z_in.size() != static_cast<size_t>(n) * n) {
    throw std::invalid_argument("mmsb_collapsed_energy: assignment table size mismatch");
  }
  double alpha_sum = 0.0;
  for (double a : hp.alpha) alpha_sum += a;

  Mat counts(n, K);
  double lik = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int zo = z_out[static_cast<size_t>(i) * n + j];
      const int zi = z_in[static_cast<size_t>(i) * n + j];
      const double b = hp.bmat[zo][zi];
      const double p = graph.edge(i, j) ? b : 1.0 - b;
      if (p == 0.0) return kNegInf;
      lik += std::log(p);
      counts(i, zo) += 1.0;
      counts(j, zi) += 1.0;
    }
  }
  double total = lik;
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < K; ++l) total += log_gamma(counts(i, l) + hp.alpha[l]);
  }
  total -= n * log_gamma(2.0 * n - 2.0 + alpha_sum);
  return total;
}

namespace {

// E[ln pi_il] = psi(gamma_il) - psi(sum_s gamma_is), all nodes.
Mat expected_log_pi(const Mat& gamma) {
  Mat elog(gamma.rows(), gamma.cols());
  for (int i = 0; i < gamma.rows(); ++i) {
    double s = 0.0;
    for (int l = 0; l < gamma.cols(); ++l) s += gamma(i, l);
    const double ps = digamma(s);
    for (int l = 0; l < gamma.cols(); ++l) elog(i, l) = digamma(gamma(i, l)) - ps;
  }
  return elog;
}

struct LogLik {
  std::vector<double> on, off;  // K*K tables: log B and log(1-B)
  const double* table(int edge) const { return edge ? on.data() : off.data(); }
};

LogLik make_loglik(const MmsbHyperparams& hp) {
  const int K = hp.num_groups;
  LogLik ll;
  ll.on.resize(static_cast<size_t>(K) * K);
  ll.off.resize(static_cast<size_t>(K) * K);
  for (int s = 0; s < K; ++s) {
    for (int t = 0; t < K; ++t) {
      const double b = hp.bmat[s][t];
      ll.on[static_cast<size_t>(s) * K + t] = b == 0.0 ? kNegInf : std::log(b);
      ll.off[static_cast<size_t>(s) * K + t] = b == 1.0 ? kNegInf : std::log1p(-b);
    }
  }
  return ll;
}

// y_{ij;st} proportional to exp(elog_i[s] + elog_j[t]) * lik(s,t). Returns
// false when every cell is impossible.
inline bool pg_pair_kernel(int K, const double* elog_i, const double* elog_j,
                           const double* ll, double* row) {
  const int KK = K * K;
  double m = kNegInf;
  for (int s = 0; s < K; ++s) {
    for (int t = 0; t < K; ++t) {
      const double v = ll[s * K + t] == kNegInf ? kNegInf : elog_i[s] + elog_j[t] + ll[s * K + t];
      row[s * K + t] = v;
      m = std::max(m, v);
    }
  }
  if (m == kNegInf) return false;
  double sum = 0.0;
  for (int c = 0; c < KK; ++c) {
    row[c] = row[c] == kNegInf ? 0.0 : std::exp(row[c] - m);
    sum += row[c];
  }
  const double inv = 1.0 / sum;
  for (int c = 0; c < KK; ++c) row[c] *= inv;
  return true;
}

// Sender row from the frozen receiver row, then receiver row from the fresh
// sender row. 0 * (-inf) products are dropped.
inline bool ff_pair_kernel(int K, const double* elog_i, const double* elog_j,
                           const double* ll, double* out_row, double* in_row) {
  double m = kNegInf;
  for (int s = 0; s < K; ++s) {
    double v = elog_i[s];
    for (int t = 0; t < K; ++t) v += xtimes(in_row[t], ll[s * K + t]);
    out_row[s] = v;
    m = std::max(m, v);
  }
  if (m == kNegInf) return false;
  double sum = 0.0;
  for (int s = 0; s < K; ++s) {
    out_row[s] = out_row[s] == kNegInf ? 0.0 : std::exp(out_row[s] - m);
    sum += out_row[s];
  }
  for (int s = 0; s < K; ++s) out_row[s] /= sum;

  m = kNegInf;
  for (int t = 0; t < K; ++t) {
    double v = elog_j[t];
    for (int s = 0; s < K; ++s) v += xtimes(out_row[s], ll[s * K + t]);
    in_row[t] = v;
    m = std::max(m, v);
  }
  if (m == kNegInf) return false;
  sum = 0.0;
  for (int t = 0; t < K; ++t) {
    in_row[t] = in_row[t] == kNegInf ? 0.0 : std::exp(in_row[t] - m);
    sum += in_row[t];
  }
  for (int t = 0; t < K; ++t) in_row[t] /= sum;
  return true;
}

void pg_gamma_node(const MmsbHyperparams& hp, const PgState& state, int i, double* out) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  for (int l = 0; l < K; ++l) out[l] = hp.alpha[l];
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    const double* sent = state.pair(i, j);
    const double* recv = state.pair(j, i);
    for (int l = 0; l < K; ++l) {
      double acc = 0.0;
      for (int t = 0; t < K; ++t) acc += sent[l * K + t];
      for (int s = 0; s < K; ++s) acc += recv[s * K + l];
      out[l] += acc;
    }
  }
}

void ff_gamma_node(const MmsbHyperparams& hp, const FfState& state, int i, double* out) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  for (int l = 0; l < K; ++l) out[l] = hp.alpha[l];
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    const double* sent = state.out(i, j);
    const double* recv = state.in(j, i);
    for (int l = 0; l < K; ++l) out[l] += sent[l] + recv[l];
  }
}

// E ln p(pi) - E ln q(pi) over all nodes.
double dirichlet_node_terms(const MmsbHyperparams& hp, const Mat& gamma, const Mat& elog) {
  const int K = hp.num_groups;
  double alpha_sum = 0.0, lg_alpha = 0.0;
  for (double a : hp.alpha) {
    alpha_sum += a;
    lg_alpha += log_gamma(a);
  }
  double total = 0.0;
  for (int i = 0; i < gamma.rows(); ++i) {
    double gsum = 0.0;
    for (int l = 0; l < K; ++l) gsum += gamma(i, l);
    total += log_gamma(alpha_sum) - lg_alpha - log_gamma(gsum);
    for (int l = 0; l < K; ++l) {
      total += (hp.alpha[l] - gamma(i, l)) * elog(i, l) + log_gamma(gamma(i, l));
    }
  }
  return total;
}

inline double pg_pair_elbo(int K, const double* elog_i, const double* elog_j,
                           const double* ll, const double* row) {
  double acc = 0.0;
  for (int s = 0; s < K; ++s) {
    for (int t = 0; t < K; ++t) {
      const double y = row[s * K + t];
      if (y == 0.0) continue;
      acc += y * (elog_i[s] + elog_j[t]) + y * ll[s * K + t] - y * std::log(y);
    }
  }
  return acc;
}

inline double ff_pair_elbo(int K, const double* elog_i, const double* elog_j,
                           const double* ll, const double* out_row, const double* in_row) {
  double acc = 0.0;
  for (int s = 0; s < K; ++s) {
    if (out_row[s] == 0.0) continue;
    acc += out_row[s] * elog_i[s] - out_row[s] * std::log(out_row[s]);
  }
  for (int t = 0; t < K; ++t) {
    if (in_row[t] == 0.0) continue;
    acc += in_row[t] * elog_j[t] - in_row[t] * std::log(in_row[t]);
  }
  for (int s = 0; s < K; ++s) {
    for (int t = 0; t < K; ++t) acc += xtimes(out_row[s] * in_row[t], ll[s * K + t]);
  }
  return acc;
}

[[noreturn]] void throw_dead_pair() {
  throw std::runtime_error("mmsb cavi: pair with zero mass in every cell (B contradicts X)");
}

}  // namespace

void pg_cavi_step(const MmsbHyperparams& hp, const MmsbGraph& graph, PgState& state,
                  bool parallel) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  const Mat elog = expected_log_pi(state.gamma);
  const LogLik ll = make_loglik(hp);

  int dead = 0;
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        if (!pg_pair_kernel(K, elog.row(i), elog.row(j), ll.table(graph.edge(i, j)),
                            state.pair(i, j))) {
#pragma omp atomic write
          dead = 1;
        }
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        if (!pg_pair_kernel(K, elog.row(i), elog.row(j), ll.table(graph.edge(i, j)),
                            state.pair(i, j))) {
          dead = 1;
        }
      }
    }
  }
  if (dead) throw_dead_pair();

  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) pg_gamma_node(hp, state, i, state.gamma.row(i));
  } else {
    for (int i = 0; i < n; ++i) pg_gamma_node(hp, state, i, state.gamma.row(i));
  }
}

void ff_cavi_step(const MmsbHyperparams& hp, const MmsbGraph& graph, FfState& state,
                  bool parallel) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  const Mat elog = expected_log_pi(state.gamma);
  const LogLik ll = make_loglik(hp);

  int dead = 0;
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        if (!ff_pair_kernel(K, elog.row(i), elog.row(j), ll.table(graph.edge(i, j)),
                            state.out(i, j), state.in(i, j))) {
#pragma omp atomic write
          dead = 1;
        }
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        if (!ff_pair_kernel(K, elog.row(i), elog.row(j), ll.table(graph.edge(i, j)),
                            state.out(i, j), state.in(i, j))) {
          dead = 1;
        }
      }
    }
  }
  if (dead) throw_dead_pair();

  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) ff_gamma_node(hp, state, i, state.gamma.row(i));
  } else {
    for (int i = 0; i < n; ++i) ff_gamma_node(hp, state, i, state.gamma.row(i));
  }
}

double pg_elbo(const MmsbHyperparams& hp, const MmsbGraph& graph, const PgState& state,
               bool parallel) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  const Mat elog = expected_log_pi(state.gamma);
  const LogLik ll = make_loglik(hp);

  std::vector<double> contrib(static_cast<size_t>(n) * n, 0.0);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        contrib[static_cast<size_t>(i) * n + j] =
            pg_pair_elbo(K, elog.row(i), elog.row(j), ll.table(graph.edge(i, j)),
                         state.pair(i, j));
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        contrib[static_cast<size_t>(i) * n + j] =
            pg_pair_elbo(K, elog.row(i), elog.row(j), ll.table(graph.edge(i, j)),
                         state.pair(i, j));
      }
    }
  }
  return dirichlet_node_terms(hp, state.gamma, elog) + deterministic_sum(contrib);
}

double ff_elbo(const MmsbHyperparams& hp, const MmsbGraph& graph, const FfState& state,
               bool parallel) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  const Mat elog = expected_log_pi(state.gamma);
  const LogLik ll = make_loglik(hp);

  std::vector<double> contrib(static_cast<size_t>(n) * n, 0.0);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        contrib[static_cast<size_t>(i) * n + j] =
            ff_pair_elbo(K, elog.row(i), elog.row(j), ll.table(graph.edge(i, j)),
                         state.out(i, j), state.in(i, j));
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        contrib[static_cast<size_t>(i) * n + j] =
            ff_pair_elbo(K, elog.row(i), elog.row(j), ll.table(graph.edge(i, j)),
                         state.out(i, j), state.in(i, j));
      }
    }
  }
  return dirichlet_node_terms(hp, state.gamma, elog) + deterministic_sum(contrib);
}

namespace {

Mat init_gamma(const MmsbHyperparams& hp, MmsbInit init, uint64_t seed) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  Mat gamma(n, K);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < K; ++l) {
      const double base = hp.alpha[l] + 2.0 * (n - 1) / K;
      gamma(i, l) = init == MmsbInit::kJitter ? base * rng.uniform(0.95, 1.05) : base;
    }
  }
  return gamma;
}

}  // namespace

PgState pg_init_state(const MmsbHyperparams& hp, const MmsbGraph& graph, MmsbInit init,
                      uint64_t seed, bool parallel) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  PgState state;
  state.num_nodes = n;
  state.num_groups = K;
  state.resp.assign(static_cast<size_t>(n) * n * K * K, 0.0);
  state.gamma = init_gamma(hp, init, seed);
  pg_cavi_step(hp, graph, state, parallel);  // one responsibility update + refresh
  return state;
}

FfState ff_init_state(const MmsbHyperparams& hp, const MmsbGraph& graph, MmsbInit init,
                      uint64_t seed, bool parallel) {
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  FfState state;
  state.num_nodes = n;
  state.num_groups = K;
  // receiver rows start uniform; the first kernel call overwrites both sides
  state.resp_out.assign(static_cast<size_t>(n) * n * K, 1.0 / K);
  state.resp_in.assign(static_cast<size_t>(n) * n * K, 1.0 / K);
  state.gamma = init_gamma(hp, init, seed);
  ff_cavi_step(hp, graph, state, parallel);
  return state;
}

namespace {

template <class State, class InitFn, class StepFn, class ElboFn>
MmsbFitResult<State> fit_driver(const MmsbHyperparams& hp, const MmsbGraph& graph,
                                const MmsbFitOptions& opts, InitFn init_fn, StepFn step_fn,
                                ElboFn elbo_fn) {
  hp.validate();
  if (!(opts.tol > 0.0)) throw std::invalid_argument("mmsb fit: tol must be positive");
  if (opts.restarts < 1) throw std::invalid_argument("mmsb fit: restarts must be >= 1");

  MmsbFitResult<State> best;
  for (int r = 0; r < opts.restarts; ++r) {
    const uint64_t sub = Rng::substream(opts.seed, static_cast<uint64_t>(r));
    State state = init_fn(hp, graph, opts.init, sub, opts.parallel);
    std::vector<double> trace;
    bool converged = false;
    double prev = kNegInf;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
      if (sweep > 0) step_fn(hp, graph, state, opts.parallel);
      const double elbo = elbo_fn(hp, graph, state, opts.parallel);
      trace.push_back(elbo);
      if (sweep > 0 && std::abs(elbo - prev) < opts.tol * (1.0 + std::abs(elbo))) {
        converged = true;
        break;
      }
      prev = elbo;
    }
    const double final_elbo = trace.back();
    best.restart_elbos.push_back(final_elbo);
    if (r == 0 || final_elbo > best.best_elbo) {
      best.state = std::move(state);
      best.elbo_trace = std::move(trace);
      best.best_elbo = final_elbo;
      best.best_restart = r;
      best.sweeps = static_cast<int>(best.elbo_trace.size());
      best.converged = converged;
    }
  }
  return best;
}

}  // namespace

MmsbFitResult<PgState> pg_fit(const MmsbHyperparams& hp, const MmsbGraph& graph,
                              const MmsbFitOptions& opts) {
  return fit_driver<PgState>(hp, graph, opts, pg_init_state,
                             [](const MmsbHyperparams& h, const MmsbGraph& g, PgState& s,
                                bool par) { pg_cavi_step(h, g, s, par); },
                             [](const MmsbHyperparams& h, const MmsbGraph& g, const PgState& s,
                                bool par) { return pg_elbo(h, g, s, par); });
}

MmsbFitResult<FfState> ff_fit(const MmsbHyperparams& hp, const MmsbGraph& graph,
                              const MmsbFitOptions& opts) {
  return fit_driver<FfState>(hp, graph, opts, ff_init_state,
                             [](const MmsbHyperparams& h, const MmsbGraph& g, FfState& s,
                                bool par) { ff_cavi_step(h, g, s, par); },
                             [](const MmsbHyperparams& h, const MmsbGraph& g, const FfState& s,
                                bool par) { return ff_elbo(h, g, s, par); });
}

PairCorrelation correlation_from_joint(std::span<const double> joint, int num_groups,
                                       int group) {
  PairCorrelation pc;
  double p = 0.0, q = 0.0;
  for (int t = 0; t < num_groups; ++t) p += joint[static_cast<size_t>(group) * num_groups + t];
  for (int s = 0; s < num_groups; ++s) q += joint[static_cast<size_t>(s) * num_groups + group];
  const double m = joint[static_cast<size_t>(group) * num_groups + group];
  const double denom = p * (1.0 - p) * q * (1.0 - q);
  if (denom <= 0.0) {
    pc.defined = false;
    return pc;
  }
  pc.defined = true;
  pc.corr = (m - p * q) / std::sqrt(denom);
  return pc;
}

std::vector<PairCorrelation> pair_correlations(const PgState& state, int group) {
  const int n = state.num_nodes;
  const int K = state.num_groups;
  std::vector<PairCorrelation> out;
  out.reserve(static_cast<size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      PairCorrelation pc = correlation_from_joint(
          std::span<const double>(state.pair(i, j), static_cast<size_t>(K) * K), K, group);
      pc.i = i;
      pc.j = j;
      out.push_back(pc);
    }
  }
  return out;
}

CorrClusters cluster_pair_correlations(const std::vector<PairCorrelation>& corrs) {
  CorrClusters cl;
  std::vector<double> vals;
  for (const auto& c : corrs) {
    if (c.defined) {
      vals.push_back(c.corr);
    } else {
      ++cl.undefined;
    }
  }
  cl.used = static_cast<int>(vals.size());
  if (vals.empty()) return cl;

  double lo = *std::min_element(vals.begin(), vals.end());
  double hi = *std::max_element(vals.begin(), vals.end());
  double n_lo = 0, n_hi = 0;
  for (int iter = 0; iter < 200; ++iter) {
    double s_lo = 0, s_hi = 0;
    n_lo = n_hi = 0;
    for (double v : vals) {
      if (std::abs(v - lo) <= std::abs(v - hi)) {
        s_lo += v;
        ++n_lo;
      } else {
        s_hi += v;
        ++n_hi;
      }
    }
    const double new_lo = n_lo > 0 ? s_lo / n_lo : lo;
    const double new_hi = n_hi > 0 ? s_hi / n_hi : hi;
    if (new_lo == lo && new_hi == hi) break;
    lo = new_lo;
    hi = new_hi;
  }
  if (lo > hi) {
    std::swap(lo, hi);
    std::swap(n_lo, n_hi);
  }
  cl.center_lo = lo;
  cl.center_hi = hi;
  cl.prop_lo = n_lo / static_cast<double>(cl.used);
  cl.prop_hi = n_hi / static_cast<double>(cl.used);
  return cl;
}

}  // namespace mfvi
