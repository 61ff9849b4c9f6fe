#pragma once

// Mean-field machinery over collapsed posteriors with categorical sites:
// product distributions y, the energy extension F, the KL-to-base functional
// I, the cross functional J, the single-site conditional map T, the Taylor
// error terms, the exact expected energy E_{Q_y}[f] via Poisson-binomial
// dynamic programming, and collapsed VI in exact and surrogate modes.
//
// Both LDA and MMSB reduce to the same structure: sites carry categorical
// values, the energy is sum_g lnGamma(N_g(z) + a_g) + const where each count
// group g collects indicator contributions from (site, category) slots, and
// the base measure weight of a site is an eta or B pick.
//
// LDA: sites are words (K categories), groups are (document, topic).
// MMSB: sites are ordered pairs with K^2 categories (Z_out, Z_in grouped),
// groups are (node, group membership).

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mfvi/lda.hpp"
#include "mfvi/mmsb.hpp"
#include "mfvi/numerics.hpp"

namespace mfvi {

struct ProductDistribution {
  std::vector<std::vector<double>> rows;  // one simplex per site
};

struct EnergyWorkspace {
  std::vector<std::vector<int>> lda_z;
  std::vector<int> z_out, z_in;
};

class CollapsedInstance {
 public:
  enum class Model { kLda, kMmsb };

  static CollapsedInstance make_lda(const LdaHyperparams& hp, const LdaCorpus& corpus);
  static CollapsedInstance make_mmsb(const MmsbHyperparams& hp, const MmsbGraph& graph);

  Model model() const { return model_; }
  int num_sites() const { return static_cast<int>(site_log_weight_.size()); }
  int num_cats(int site) const { return static_cast<int>(site_log_weight_[site].size()); }
  int num_groups() const { return static_cast<int>(group_alpha_.size()); }

  // ln of the unnormalized base weight w_i(cat); -inf on impossible picks.
  double log_weight(int site, int cat) const { return site_log_weight_[site][cat]; }
  // ln mu_i(cat) = ln w_i(cat) - ln W_i.
  double log_mu(int site, int cat) const {
    return site_log_weight_[site][cat] - site_log_weight_lse_[site];
  }
  // sum_i ln W_i; log S~ (partition w.r.t. mu) = log_partition - this.
  double mu_normalizer() const { return mu_normalizer_; }
  // Dirichlet prior constants dropped by Upsilon; log p(X) = log_partition + this.
  double prior_log_normalizer() const { return prior_log_normalizer_; }

  const std::vector<int>& groups_of(int site, int cat) const { return cat_groups_[site][cat]; }
  double group_alpha(int g) const { return group_alpha_[g]; }
  // (site, categories feeding g) pairs, in site order.
  const std::vector<std::pair<int, std::vector<int>>>& group_sites(int g) const {
    return group_sites_[g];
  }

  // Number of joint assignments, saturating at `cap` + 1.
  uint64_t state_space_size(uint64_t cap) const;

  EnergyWorkspace make_workspace() const;
  // Upsilon(z) through the engine energy code path (shared with the tables).
  double upsilon(std::span<const int> z, EnergyWorkspace& ws) const;
  // f(z) = sum_g lnGamma(N_g + a_g) + const_term; always finite.
  double f_energy(std::span<const int> z) const;
  double const_term() const { return const_term_; }

  const LdaHyperparams& lda_params() const { return lda_; }
  const LdaCorpus& lda_corpus() const { return corpus_; }
  const MmsbHyperparams& mmsb_params() const { return mmsb_; }
  const MmsbGraph& mmsb_graph() const { return graph_; }
  const std::vector<std::pair<int, int>>& mmsb_pairs() const { return pairs_; }

  void check_product(const ProductDistribution& y) const;  // throws on mismatch

 private:
  Model model_ = Model::kLda;
  std::vector<std::vector<double>> site_log_weight_;
  std::vector<double> site_log_weight_lse_;
  double mu_normalizer_ = 0.0;
  double prior_log_normalizer_ = 0.0;
  std::vector<double> group_alpha_;
  std::vector<std::vector<std::vector<int>>> cat_groups_;
  std::vector<std::vector<std::pair<int, std::vector<int>>>> group_sites_;
  double const_term_ = 0.0;

  LdaHyperparams lda_;
  LdaCorpus corpus_;
  MmsbHyperparams mmsb_;
  MmsbGraph graph_;
  std::vector<std::pair<int, int>> pairs_;
  std::vector<int> doc_offset_;
};

// One-hot embedding G(z).
ProductDistribution one_hot(const CollapsedInstance& inst, std::span<const int> z);

// Product distributions induced by fitted variational states.
ProductDistribution product_from_lda(const LdaHyperparams& hp, const LdaVariationalState& state);
ProductDistribution product_from_pg(const CollapsedInstance& inst, const PgState& state);
ProductDistribution product_from_ff(const CollapsedInstance& inst, const FfState& state);

// F(y) = sum_g lnGamma(N~_g(y) + a_g) + const_term.
double eval_F(const CollapsedInstance& inst, const ProductDistribution& y);
// I(y) = KL(Q_y || mu) = sum y ln(y/mu); +inf when y charges a mu-null cell.
double eval_I(const CollapsedInstance& inst, const ProductDistribution& y);
// J(y, y') = sum y ln(y'/mu); J(y, y) = I(y).
double eval_J(const CollapsedInstance& inst, const ProductDistribution& y,
              const ProductDistribution& yprime);
// dF/dy_{i,cat} = sum over the groups of (i,cat) of psi(N~_g + a_g).
std::vector<std::vector<double>> grad_F(const CollapsedInstance& inst,
                                        const ProductDistribution& y);

// T_{i,cat}(y): exact single-site conditionals, O(cats) per site via the
// count shift N~_g - (site i's mass on g) + 1.
ProductDistribution t_map(const CollapsedInstance& inst, const ProductDistribution& y);

double delta1(const CollapsedInstance& inst, const ProductDistribution& y);
double delta2(const CollapsedInstance& inst, const ProductDistribution& y);

// Probability masses of a sum of independent Bernoulli(p_k), k < trials.
std::vector<double> poisson_binomial(std::span<const double> probs);

// Exact E_{Q_y}[f(Z)]: per count group, the Poisson-binomial law of N_g over
// the site marginals, then sum_m P(N_g = m) lnGamma(m + a_g).
double expected_energy(const CollapsedInstance& inst, const ProductDistribution& y);

enum class CollapsedViMode { kExact, kSurrogate };

struct CollapsedViOptions {
  CollapsedViMode mode = CollapsedViMode::kExact;
  double tol = 1e-9;     // exact: relative objective change; surrogate: max row change
  int max_sweeps = 2000;
  uint64_t seed = 0;     // Dirichlet(1) random rows; 0 rows start at mu
  bool random_init = true;
};

struct CollapsedViResult {
  ProductDistribution y;
  std::vector<double> objective_trace;  // exact: E[f]-I; surrogate: F-I
  bool converged = false;
  bool damped = false;                  // surrogate oscillation fallback engaged
  int sweeps = 0;
};

// Exact mode maximizes E_{Q_y}[f] - I(y) by exact coordinate ascent: row i
// gets y_{i,cat} proportional to mu_i(cat) exp(E_{-i}[f | Z_i = cat]), with
// the conditional expectation from leave-one-out Poisson-binomial tables.
// Surrogate mode iterates y <- T(y) and stops on max row change < tol.
CollapsedViResult collapsed_vi(const CollapsedInstance& inst, const CollapsedViOptions& opts);

}  // namespace mfvi
