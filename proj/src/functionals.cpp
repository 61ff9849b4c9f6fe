#include "mfvi/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mfvi/rng.hpp"

namespace mfvi {

CollapsedInstance CollapsedInstance::make_lda(const LdaHyperparams& hp, const LdaCorpus& corpus) {
  hp.validate();
  if (static_cast<int>(corpus.words.size()) != hp.num_docs) {
    throw std::invalid_argument("collapsed instance: corpus document count mismatch");
  }
  CollapsedInstance inst;
  inst.model_ = Model::kLda;
  inst.lda_ = hp;
  inst.corpus_ = corpus;
  const int K = hp.num_topics;
  double alpha_sum = 0.0, lg_alpha = 0.0;
  for (double a : hp.alpha) {
    alpha_sum += a;
    lg_alpha += log_gamma(a);
  }

  inst.doc_offset_.assign(hp.num_docs + 1, 0);
  for (int d = 0; d < hp.num_docs; ++d) {
    if (static_cast<int>(corpus.words[d].size()) != hp.doc_lengths[d]) {
      throw std::invalid_argument("collapsed instance: corpus word count mismatch");
    }
    inst.doc_offset_[d + 1] = inst.doc_offset_[d] + hp.doc_lengths[d];
  }
  const int total = inst.doc_offset_[hp.num_docs];

  inst.group_alpha_.resize(static_cast<size_t>(hp.num_docs) * K);
  inst.group_sites_.resize(inst.group_alpha_.size());
  for (int d = 0; d < hp.num_docs; ++d) {
    for (int l = 0; l < K; ++l) inst.group_alpha_[static_cast<size_t>(d) * K + l] = hp.alpha[l];
  }

  inst.site_log_weight_.resize(total);
  inst.site_log_weight_lse_.resize(total);
  inst.cat_groups_.resize(total);
  for (int d = 0; d < hp.num_docs; ++d) {
    for (int i = 0; i < hp.doc_lengths[d]; ++i) {
      const int site = inst.doc_offset_[d] + i;
      const int word = corpus.words[d][i];
      if (word < 0 || word >= hp.vocab_size) {
        throw std::invalid_argument("collapsed instance: word index out of range");
      }
      auto& lw = inst.site_log_weight_[site];
      lw.resize(K);
      auto& cg = inst.cat_groups_[site];
      cg.resize(K);
      for (int l = 0; l < K; ++l) {
        const double e = hp.eta[l][word];
        lw[l] = e == 0.0 ? kNegInf : std::log(e);
        const int g = d * K + l;
        cg[l] = {g};
        inst.group_sites_[g].push_back({site, {l}});
      }
      inst.site_log_weight_lse_[site] = log_sum_exp(lw);
      if (inst.site_log_weight_lse_[site] == kNegInf) {
        throw std::invalid_argument("collapsed instance: word impossible under every topic");
      }
      inst.mu_normalizer_ += inst.site_log_weight_lse_[site];
    }
    inst.const_term_ -= log_gamma(hp.doc_lengths[d] + alpha_sum);
  }
  inst.prior_log_normalizer_ = hp.num_docs * (log_gamma(alpha_sum) - lg_alpha);
  return inst;
}

CollapsedInstance CollapsedInstance::make_mmsb(const MmsbHyperparams& hp, const MmsbGraph& graph) {
  hp.validate();
  if (graph.num_nodes != hp.num_nodes) {
    throw std::invalid_argument("collapsed instance: graph node count mismatch");
  }
  CollapsedInstance inst;
  inst.model_ = Model::kMmsb;
  inst.mmsb_ = hp;
  inst.graph_ = graph;
  const int n = hp.num_nodes;
  const int K = hp.num_groups;
  double alpha_sum = 0.0, lg_alpha = 0.0;
  for (double a : hp.alpha) {
    alpha_sum += a;
    lg_alpha += log_gamma(a);
  }

  inst.group_alpha_.resize(static_cast<size_t>(n) * K);
  inst.group_sites_.resize(inst.group_alpha_.size());
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < K; ++l) inst.group_alpha_[static_cast<size_t>(i) * K + l] = hp.alpha[l];
  }

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int site = static_cast<int>(inst.pairs_.size());
      inst.pairs_.push_back({i, j});
      const int x = graph.edge(i, j);
      std::vector<double> lw(static_cast<size_t>(K) * K);
      std::vector<std::vector<int>> cg(static_cast<size_t>(K) * K);
      for (int s = 0; s < K; ++s) {
        for (int t = 0; t < K; ++t) {
          const double b = hp.bmat[s][t];
          const double w = x ? b : 1.0 - b;
          lw[static_cast<size_t>(s) * K + t] = w == 0.0 ? kNegInf : std::log(w);
          cg[static_cast<size_t>(s) * K + t] = {i * K + s, j * K + t};
        }
      }
      // row cats feed the sender group, column cats the receiver group
      for (int s = 0; s < K; ++s) {
        std::vector<int> cats(K);
        for (int t = 0; t < K; ++t) cats[t] = s * K + t;
        inst.group_sites_[static_cast<size_t>(i) * K + s].push_back({site, std::move(cats)});
      }
      for (int t = 0; t < K; ++t) {
        std::vector<int> cats(K);
        for (int s = 0; s < K; ++s) cats[s] = s * K + t;
        inst.group_sites_[static_cast<size_t>(j) * K + t].push_back({site, std::move(cats)});
      }
      inst.site_log_weight_lse_.push_back(log_sum_exp(lw));
      if (inst.site_log_weight_lse_.back() == kNegInf) {
        throw std::invalid_argument("collapsed instance: pair impossible under every cell");
      }
      inst.mu_normalizer_ += inst.site_log_weight_lse_.back();
      inst.site_log_weight_.push_back(std::move(lw));
      inst.cat_groups_.push_back(std::move(cg));
    }
  }
  inst.const_term_ = -static_cast<double>(n) * log_gamma(2.0 * n - 2.0 + alpha_sum);
  inst.prior_log_normalizer_ = n * (log_gamma(alpha_sum) - lg_alpha);
  return inst;
}

uint64_t CollapsedInstance::state_space_size(uint64_t cap) const {
  uint64_t total = 1;
  for (int i = 0; i < num_sites(); ++i) {
    const uint64_t k = static_cast<uint64_t>(num_cats(i));
    if (total > (cap + 1) / k + 1) return cap + 1;
    total *= k;
    if (total > cap) return cap + 1;
  }
  return total;
}

EnergyWorkspace CollapsedInstance::make_workspace() const {
  EnergyWorkspace ws;
  if (model_ == Model::kLda) {
    ws.lda_z.resize(lda_.num_docs);
    for (int d = 0; d < lda_.num_docs; ++d) ws.lda_z[d].resize(lda_.doc_lengths[d]);
  } else {
    const size_t nn = static_cast<size_t>(mmsb_.num_nodes) * mmsb_.num_nodes;
    ws.z_out.assign(nn, 0);
    ws.z_in.assign(nn, 0);
  }
  return ws;
}

double CollapsedInstance::upsilon(std::span<const int> z, EnergyWorkspace& ws) const {
  if (static_cast<int>(z.size()) != num_sites()) {
    throw std::invalid_argument("upsilon: assignment length mismatch");
  }
  if (model_ == Model::kLda) {
    for (int d = 0; d < lda_.num_docs; ++d) {
      for (int i = 0; i < lda_.doc_lengths[d]; ++i) ws.lda_z[d][i] = z[doc_offset_[d] + i];
    }
    return lda_collapsed_energy(lda_, corpus_, ws.lda_z);
  }
  const int n = mmsb_.num_nodes;
  const int K = mmsb_.num_groups;
  for (size_t p = 0; p < pairs_.size(); ++p) {
    const auto [i, j] = pairs_[p];
    ws.z_out[static_cast<size_t>(i) * n + j] = z[p] / K;
    ws.z_in[static_cast<size_t>(i) * n + j] = z[p] % K;
  }
  return mmsb_collapsed_energy(mmsb_, graph_, ws.z_out, ws.z_in);
}

double CollapsedInstance::f_energy(std::span<const int> z) const {
  std::vector<double> counts(group_alpha_.size(), 0.0);
  for (int i = 0; i < num_sites(); ++i) {
    for (int g : cat_groups_[i][z[i]]) counts[g] += 1.0;
  }
  double total = const_term_;
  for (size_t g = 0; g < counts.size(); ++g) total += log_gamma(counts[g] + group_alpha_[g]);
  return total;
}

void CollapsedInstance::check_product(const ProductDistribution& y) const {
  if (static_cast<int>(y.rows.size()) != num_sites()) {
    throw std::invalid_argument("product distribution: site count mismatch");
  }
  for (int i = 0; i < num_sites(); ++i) {
    if (static_cast<int>(y.rows[i].size()) != num_cats(i)) {
      throw std::invalid_argument("product distribution: category count mismatch");
    }
  }
}

ProductDistribution one_hot(const CollapsedInstance& inst, std::span<const int> z) {
  ProductDistribution y;
  y.rows.resize(inst.num_sites());
  for (int i = 0; i < inst.num_sites(); ++i) {
    y.rows[i].assign(inst.num_cats(i), 0.0);
    y.rows[i][z[i]] = 1.0;
  }
  return y;
}

ProductDistribution product_from_lda(const LdaHyperparams& hp, const LdaVariationalState& state) {
  ProductDistribution y;
  for (int d = 0; d < hp.num_docs; ++d) {
    for (const auto& row : state.phi[d]) y.rows.push_back(row);
  }
  return y;
}

ProductDistribution product_from_pg(const CollapsedInstance& inst, const PgState& state) {
  const int KK = state.num_groups * state.num_groups;
  ProductDistribution y;
  y.rows.reserve(inst.mmsb_pairs().size());
  for (const auto& [i, j] : inst.mmsb_pairs()) {
    const double* row = state.pair(i, j);
    y.rows.emplace_back(row, row + KK);
  }
  return y;
}

ProductDistribution product_from_ff(const CollapsedInstance& inst, const FfState& state) {
  const int K = state.num_groups;
  ProductDistribution y;
  y.rows.reserve(inst.mmsb_pairs().size());
  for (const auto& [i, j] : inst.mmsb_pairs()) {
    const double* o = state.out(i, j);
    const double* in = state.in(i, j);
    std::vector<double> row(static_cast<size_t>(K) * K);
    for (int s = 0; s < K; ++s) {
      for (int t = 0; t < K; ++t) row[static_cast<size_t>(s) * K + t] = o[s] * in[t];
    }
    y.rows.push_back(std::move(row));
  }
  return y;
}

namespace {

std::vector<double> soft_counts(const CollapsedInstance& inst, const ProductDistribution& y) {
  std::vector<double> counts(inst.num_groups(), 0.0);
  for (int i = 0; i < inst.num_sites(); ++i) {
    for (int c = 0; c < inst.num_cats(i); ++c) {
      const double p = y.rows[i][c];
      if (p == 0.0) continue;
      for (int g : inst.groups_of(i, c)) counts[g] += p;
    }
  }
  return counts;
}

}  // namespace

double eval_F(const CollapsedInstance& inst, const ProductDistribution& y) {
  inst.check_product(y);
  const std::vector<double> counts = soft_counts(inst, y);
  double total = inst.const_term();
  for (size_t g = 0; g < counts.size(); ++g) {
    total += log_gamma(counts[g] + inst.group_alpha(static_cast<int>(g)));
  }
  return total;
}

double eval_I(const CollapsedInstance& inst, const ProductDistribution& y) {
  inst.check_product(y);
  double total = 0.0;
  for (int i = 0; i < inst.num_sites(); ++i) {
    for (int c = 0; c < inst.num_cats(i); ++c) {
      const double p = y.rows[i][c];
      if (p == 0.0) continue;
      const double lm = inst.log_mu(i, c);
      if (lm == kNegInf) return kPosInf;
      total += p * (std::log(p) - lm);
    }
  }
  return total;
}

double eval_J(const CollapsedInstance& inst, const ProductDistribution& y,
              const ProductDistribution& yprime) {
  inst.check_product(y);
  inst.check_product(yprime);
  double total = 0.0;
  for (int i = 0; i < inst.num_sites(); ++i) {
    for (int c = 0; c < inst.num_cats(i); ++c) {
      const double p = y.rows[i][c];
      if (p == 0.0) continue;
      total += p * (std::log(yprime.rows[i][c]) - inst.log_mu(i, c));
    }
  }
  return total;
}

std::vector<std::vector<double>> grad_F(const CollapsedInstance& inst,
                                        const ProductDistribution& y) {
  inst.check_product(y);
  const std::vector<double> counts = soft_counts(inst, y);
  std::vector<double> psi(counts.size());
  for (size_t g = 0; g < counts.size(); ++g) {
    psi[g] = digamma(counts[g] + inst.group_alpha(static_cast<int>(g)));
  }
  std::vector<std::vector<double>> grad(inst.num_sites());
  for (int i = 0; i < inst.num_sites(); ++i) {
    grad[i].resize(inst.num_cats(i));
    for (int c = 0; c < inst.num_cats(i); ++c) {
      double acc = 0.0;
      for (int g : inst.groups_of(i, c)) acc += psi[g];
      grad[i][c] = acc;
    }
  }
  return grad;
}

ProductDistribution t_map(const CollapsedInstance& inst, const ProductDistribution& y) {
  inst.check_product(y);
  const std::vector<double> counts = soft_counts(inst, y);
  ProductDistribution t;
  t.rows.resize(inst.num_sites());
  std::vector<double> logits;
  // mass the current site places on each group, indexed by group id; only
  // the touched entries are written and reset, so a site costs O(cats)
  std::vector<double> removed(inst.num_groups(), 0.0);
  std::vector<int> touched;
  for (int i = 0; i < inst.num_sites(); ++i) {
    const int C = inst.num_cats(i);
    logits.assign(C, 0.0);
    touched.clear();
    for (int c = 0; c < C; ++c) {
      const double p = y.rows[i][c];
      if (p == 0.0) continue;
      for (int g : inst.groups_of(i, c)) {
        if (removed[g] == 0.0) touched.push_back(g);
        removed[g] += p;
      }
    }
    for (int c = 0; c < C; ++c) {
      double v = inst.log_weight(i, c);
      if (v != kNegInf) {
        // lnGamma(x+1) - lnGamma(x) = ln x at x = N~_g - y_i(g) + a_g
        for (int g : inst.groups_of(i, c)) {
          const double loo = std::max(counts[g] - removed[g], 0.0);
          v += std::log(loo + inst.group_alpha(g));
        }
      }
      logits[c] = v;
    }
    for (int g : touched) removed[g] = 0.0;
    const double lse = log_sum_exp(logits);
    auto& row = t.rows[i];
    row.resize(C);
    for (int c = 0; c < C; ++c) {
      row[c] = logits[c] == kNegInf ? 0.0 : std::exp(logits[c] - lse);
    }
  }
  return t;
}

double delta1(const CollapsedInstance& inst, const ProductDistribution& y) {
  const ProductDistribution t = t_map(inst, y);
  const auto grad = grad_F(inst, y);
  double lin = 0.0;
  for (int i = 0; i < inst.num_sites(); ++i) {
    for (int c = 0; c < inst.num_cats(i); ++c) {
      lin += grad[i][c] * (y.rows[i][c] - t.rows[i][c]);
    }
  }
  return eval_F(inst, y) - eval_F(inst, t) - lin;
}

double delta2(const CollapsedInstance& inst, const ProductDistribution& y) {
  const ProductDistribution t = t_map(inst, y);
  const auto grad = grad_F(inst, y);
  double lin = 0.0;
  for (int i = 0; i < inst.num_sites(); ++i) {
    for (int c = 0; c < inst.num_cats(i); ++c) {
      lin += grad[i][c] * (y.rows[i][c] - t.rows[i][c]);
    }
  }
  return eval_I(inst, t) - eval_J(inst, y, t) + lin;
}

std::vector<double> poisson_binomial(std::span<const double> probs) {
  std::vector<double> dist(probs.size() + 1, 0.0);
  dist[0] = 1.0;
  size_t m = 0;
  for (double p : probs) {
    for (size_t k = m + 1; k >= 1; --k) {
      dist[k] = dist[k] * (1.0 - p) + dist[k - 1] * p;
    }
    dist[0] *= 1.0 - p;
    ++m;
  }
  return dist;
}

namespace {

// P(site contributes to group g), one entry per trial of g, in site order.
std::vector<double> group_trial_probs(const CollapsedInstance& inst,
                                      const ProductDistribution& y, int g, int skip_site = -1) {
  std::vector<double> probs;
  for (const auto& [site, cats] : inst.group_sites(g)) {
    if (site == skip_site) continue;
    double p = 0.0;
    for (int c : cats) p += y.rows[site][c];
    probs.push_back(std::min(p, 1.0));
  }
  return probs;
}

double expected_lgamma(std::span<const double> dist, double alpha, int shift) {
  std::vector<double> terms(dist.size());
  for (size_t m = 0; m < dist.size(); ++m) {
    terms[m] = dist[m] == 0.0 ? 0.0 : dist[m] * log_gamma(static_cast<double>(m) + shift + alpha);
  }
  return deterministic_sum(terms);
}

}  // namespace

double expected_energy(const CollapsedInstance& inst, const ProductDistribution& y) {
  inst.check_product(y);
  double total = inst.const_term();
  for (int g = 0; g < inst.num_groups(); ++g) {
    const std::vector<double> probs = group_trial_probs(inst, y, g);
    const std::vector<double> dist = poisson_binomial(probs);
    total += expected_lgamma(dist, inst.group_alpha(g), 0);
  }
  return total;
}

namespace {

ProductDistribution initial_product(const CollapsedInstance& inst, uint64_t seed,
                                    bool random_init) {
  ProductDistribution y;
  y.rows.resize(inst.num_sites());
  if (random_init) {
    Rng rng(seed);
    for (int i = 0; i < inst.num_sites(); ++i) {
      const std::vector<double> ones(inst.num_cats(i), 1.0);
      y.rows[i] = rng.dirichlet(ones);
    }
  } else {
    for (int i = 0; i < inst.num_sites(); ++i) {
      auto& row = y.rows[i];
      row.resize(inst.num_cats(i));
      for (int c = 0; c < inst.num_cats(i); ++c) {
        const double lm = inst.log_mu(i, c);
        row[c] = lm == kNegInf ? 0.0 : std::exp(lm);
      }
    }
  }
  return y;
}

// Exact coordinate update of one site: y_{i,c} proportional to
// mu_i(c) exp(sum over touched groups of E[lnGamma(N_g^{-i} + 1{c feeds g} + a_g)]).
void exact_site_update(const CollapsedInstance& inst, ProductDistribution& y, int site) {
  const int C = inst.num_cats(site);
  // groups touched by this site
  std::vector<int> touched;
  for (int c = 0; c < C; ++c) {
    for (int g : inst.groups_of(site, c)) {
      if (std::find(touched.begin(), touched.end(), g) == touched.end()) touched.push_back(g);
    }
  }
  std::vector<double> e0(touched.size()), e1(touched.size());
  for (size_t k = 0; k < touched.size(); ++k) {
    const int g = touched[k];
    const std::vector<double> probs = group_trial_probs(inst, y, g, site);
    const std::vector<double> dist = poisson_binomial(probs);
    e0[k] = expected_lgamma(dist, inst.group_alpha(g), 0);
    e1[k] = expected_lgamma(dist, inst.group_alpha(g), 1);
  }
  std::vector<double> logits(C);
  for (int c = 0; c < C; ++c) {
    double v = inst.log_mu(site, c);
    if (v != kNegInf) {
      for (size_t k = 0; k < touched.size(); ++k) {
        const auto& groups = inst.groups_of(site, c);
        const bool feeds = std::find(groups.begin(), groups.end(), touched[k]) != groups.end();
        v += feeds ? e1[k] : e0[k];
      }
    }
    logits[c] = v;
  }
  const double lse = log_sum_exp(logits);
  for (int c = 0; c < C; ++c) {
    y.rows[site][c] = logits[c] == kNegInf ? 0.0 : std::exp(logits[c] - lse);
  }
}

}  // namespace

CollapsedViResult collapsed_vi(const CollapsedInstance& inst, const CollapsedViOptions& opts) {
  if (!(opts.tol > 0.0)) throw std::invalid_argument("collapsed_vi: tol must be positive");
  CollapsedViResult result;
  result.y = initial_product(inst, opts.seed, opts.random_init);

  if (opts.mode == CollapsedViMode::kExact) {
    double prev = kNegInf;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
      for (int i = 0; i < inst.num_sites(); ++i) exact_site_update(inst, result.y, i);
      const double obj = expected_energy(inst, result.y) - eval_I(inst, result.y);
      result.objective_trace.push_back(obj);
      result.sweeps = sweep + 1;
      if (sweep > 0 && std::abs(obj - prev) < opts.tol * (1.0 + std::abs(obj))) {
        result.converged = true;
        break;
      }
      prev = obj;
    }
    return result;
  }

  // surrogate: iterate T with optional 0.5 damping when the row change
  // stops decreasing for 10 consecutive iterations
  double step = 1.0;
  double prev_change = kPosInf;
  int non_decreasing = 0;
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    const ProductDistribution t = t_map(inst, result.y);
    double change = 0.0;
    for (int i = 0; i < inst.num_sites(); ++i) {
      for (int c = 0; c < inst.num_cats(i); ++c) {
        const double next = (1.0 - step) * result.y.rows[i][c] + step * t.rows[i][c];
        change = std::max(change, std::abs(next - result.y.rows[i][c]));
        result.y.rows[i][c] = next;
      }
    }
    result.objective_trace.push_back(eval_F(inst, result.y) - eval_I(inst, result.y));
    result.sweeps = sweep + 1;
    if (change < opts.tol) {
      result.converged = true;
      break;
    }
    if (change >= prev_change) {
      if (++non_decreasing >= 10 && step == 1.0) {
        step = 0.5;
        result.damped = true;
        non_decreasing = 0;
      }
    } else {
      non_decreasing = 0;
    }
    prev_change = change;
  }
  return result;
}

}  // namespace mfvi
