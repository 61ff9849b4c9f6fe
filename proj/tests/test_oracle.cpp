#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mfvi/oracle.hpp"
#include "mfvi/rng.hpp"

using namespace mfvi;

namespace {

LdaHyperparams uniform_lda(int D, std::vector<int> nd, int K, int V, std::vector<double> alpha) {
  LdaHyperparams hp;
  hp.num_docs = D;
  hp.num_topics = K;
  hp.vocab_size = V;
  hp.doc_lengths = std::move(nd);
  hp.alpha = std::move(alpha);
  hp.eta.assign(K, std::vector<double>(V, 1.0 / V));
  return hp;
}

CollapsedInstance random_lda_instance(Rng& rng, int D, int K, int V, int len, uint64_t seed) {
  LdaHyperparams hp;
  hp.num_docs = D;
  hp.num_topics = K;
  hp.vocab_size = V;
  hp.doc_lengths.assign(D, len);
  for (int l = 0; l < K; ++l) hp.alpha.push_back(rng.uniform(0.4, 1.6));
  const std::vector<double> ones(V, 1.0);
  for (int l = 0; l < K; ++l) hp.eta.push_back(rng.dirichlet(ones));
  auto [corpus, latents] = lda_sample(hp, seed);
  return CollapsedInstance::make_lda(hp, corpus);
}

ProductDistribution random_product(const CollapsedInstance& inst, Rng& rng) {
  ProductDistribution y;
  y.rows.resize(inst.num_sites());
  for (int i = 0; i < inst.num_sites(); ++i) {
    const std::vector<double> ones(inst.num_cats(i), 1.0);
    y.rows[i] = rng.dirichlet(ones);
  }
  return y;
}

// Gauss-Legendre log evidence for D=1, K=2 via the substitution
// pi = sin^2(theta), which removes the alpha = 1/2 endpoint singularity.
double quadrature_log_evidence(const LdaHyperparams& hp, const LdaCorpus& corpus) {
  REQUIRE(hp.num_docs == 1);
  REQUIRE(hp.num_topics == 2);
  const int N = 400;
  // Gauss-Legendre nodes on [0, pi/2] by Newton iteration on P_N
  std::vector<double> nodes(N), weights(N);
  for (int k = 0; k < N; ++k) {
    double x = std::cos(M_PI * (k + 0.75) / (N + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int m = 2; m <= N; ++m) {
        const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
      }
      const double dp = N * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int m = 2; m <= N; ++m) {
      const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
      p0 = p1;
      p1 = p2;
    }
    const double dp = N * (x * p1 - p0) / (x * x - 1.0);
    nodes[k] = (x + 1.0) * (M_PI / 4.0);
    weights[k] = (M_PI / 4.0) * 2.0 / ((1.0 - x * x) * dp * dp);
  }
  const double a = hp.alpha[0], b = hp.alpha[1];
  const double log_norm = log_gamma(a + b) - log_gamma(a) - log_gamma(b);
  double acc = 0.0;
  for (int k = 0; k < N; ++k) {
    const double s = std::sin(nodes[k]), c = std::cos(nodes[k]);
    const double pi1 = s * s;
    double lik = 1.0;
    for (int w : corpus.words[0]) lik *= pi1 * hp.eta[0][w] + (1.0 - pi1) * hp.eta[1][w];
    // Dir density * Jacobian 2 sin cos, with the sin/cos powers folded in
    const double dens = std::pow(s, 2.0 * a - 1.0) * std::pow(c, 2.0 * b - 1.0) * 2.0;
    acc += weights[k] * dens * lik;
  }
  return log_norm + std::log(acc);
}

}  // namespace

TEST_CASE("enumerate_posterior: uniform-eta hand value") {
  auto hp = uniform_lda(1, {2}, 2, 2, {1.0, 1.0});
  LdaCorpus corpus;
  corpus.words = {{0, 1}};
  auto inst = CollapsedInstance::make_lda(hp, corpus);
  auto table = enumerate_posterior(inst);
  CHECK(table.num_states == 4);
  CHECK(table.log_partition == doctest::Approx(-std::log(4.0)).epsilon(1e-13));

  // probabilities sum to one
  double total = 0.0;
  for (double w : table.log_weights) total += std::exp(w - table.log_partition);
  CHECK(std::abs(total - 1.0) <= 1e-10);

  // log evidence equals V^{-n} under uniform eta
  CHECK(oracle_log_evidence(inst, table) == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("enumerate_posterior: K=1 point mass and MMSB state count") {
  auto hp = uniform_lda(1, {3}, 1, 2, {0.9});
  LdaCorpus corpus;
  corpus.words = {{0, 1, 0}};
  auto inst = CollapsedInstance::make_lda(hp, corpus);
  auto table = enumerate_posterior(inst);
  CHECK(table.num_states == 1);
  CHECK(std::exp(table.log_weights[0] - table.log_partition) == doctest::Approx(1.0));

  // K=1: the posterior is the unique product distribution, KL exactly 0
  ProductDistribution point;
  point.rows.assign(3, {1.0});
  CHECK(exact_kl(inst, table, point) == 0.0);

  MmsbHyperparams mp;
  mp.num_nodes = 2;
  mp.num_groups = 2;
  mp.alpha = {1.0, 1.0};
  mp.bmat = {{0.9, 0.3}, {0.3, 0.9}};
  auto [graph, latents] = mmsb_sample(mp, 1);
  auto minst = CollapsedInstance::make_mmsb(mp, graph);
  auto mtable = enumerate_posterior(minst);
  CHECK(mtable.num_states == 16);
}

TEST_CASE("table weights share the engine energy code path") {
  Rng rng(5);
  auto inst = random_lda_instance(rng, 2, 2, 3, 3, 40);
  auto table = enumerate_posterior(inst);
  auto ws = inst.make_workspace();
  std::vector<int> z(inst.num_sites(), 0);
  for (uint64_t idx = 0; idx < table.num_states; ++idx) {
    CHECK(table.log_weights[idx] == inst.upsilon(z, ws));
    for (int i = inst.num_sites() - 1; i >= 0; --i) {
      if (++z[i] < inst.num_cats(i)) break;
      z[i] = 0;
    }
  }
}

TEST_CASE("K=1 log evidence is the emission log likelihood") {
  LdaHyperparams hp = uniform_lda(2, {3, 2}, 1, 3, {1.4});
  hp.eta = {{0.2, 0.5, 0.3}};
  LdaCorpus corpus;
  corpus.words = {{0, 1, 1}, {2, 0}};
  auto inst = CollapsedInstance::make_lda(hp, corpus);
  auto table = enumerate_posterior(inst);
  double expect = 0.0;
  for (const auto& doc : corpus.words) {
    for (int w : doc) expect += std::log(hp.eta[0][w]);
  }
  CHECK(oracle_log_evidence(inst, table) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("log evidence matches direct quadrature on D=1, n=3, K=2") {
  auto hp = uniform_lda(1, {3}, 2, 2, {0.5, 0.5});
  hp.eta = {{0.8, 0.2}, {0.3, 0.7}};
  LdaCorpus corpus;
  corpus.words = {{0, 1, 0}};
  auto inst = CollapsedInstance::make_lda(hp, corpus);
  auto table = enumerate_posterior(inst);
  CHECK(oracle_log_evidence(inst, table) ==
        doctest::Approx(quadrature_log_evidence(hp, corpus)).epsilon(1e-6));
}

TEST_CASE("partition factorizes over documents") {
  Rng rng(17);
  auto inst = random_lda_instance(rng, 2, 2, 4, 4, 50);
  auto table = enumerate_posterior(inst);
  double split = 0.0;
  for (int d = 0; d < 2; ++d) {
    LdaHyperparams sub = inst.lda_params();
    sub.num_docs = 1;
    sub.doc_lengths = {inst.lda_params().doc_lengths[d]};
    LdaCorpus piece;
    piece.words = {inst.lda_corpus().words[d]};
    auto sinst = CollapsedInstance::make_lda(sub, piece);
    split += enumerate_posterior(sinst).log_partition;
  }
  CHECK(std::abs(table.log_partition - split) <= 1e-10 * std::max(1.0, std::abs(split)));
}

TEST_CASE("exact_kl: nonnegative, zero at a product posterior") {
  // single site: the posterior is itself a product distribution
  auto hp = uniform_lda(1, {1}, 2, 2, {0.7, 1.3});
  hp.eta = {{0.6, 0.4}, {0.2, 0.8}};
  LdaCorpus corpus;
  corpus.words = {{1}};
  auto inst = CollapsedInstance::make_lda(hp, corpus);
  auto table = enumerate_posterior(inst);
  auto marg = exact_marginals(inst, table);
  ProductDistribution y;
  y.rows = marg.site_marginals;
  CHECK(std::abs(exact_kl(inst, table, y)) <= 1e-12);

  Rng rng(23);
  auto inst2 = random_lda_instance(rng, 1, 2, 3, 5, 60);
  auto table2 = enumerate_posterior(inst2);
  for (int rep = 0; rep < 100; ++rep) {
    const auto yr = random_product(inst2, rng);
    CHECK(exact_kl(inst2, table2, yr) >= -1e-12);
  }
}

TEST_CASE("partition identity: exact_kl equals log partition minus energy objective") {
  Rng rng(29);
  auto inst = random_lda_instance(rng, 1, 2, 3, 4, 70);
  auto table = enumerate_posterior(inst);
  const double log_s_mu = table.log_partition - inst.mu_normalizer();
  for (int rep = 0; rep < 50; ++rep) {
    const auto y = random_product(inst, rng);
    const double lhs = exact_kl(inst, table, y);
    const double rhs = log_s_mu - (expected_energy(inst, y) - eval_I(inst, y));
    CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("fitted collapsed VI beats random competitors in exact KL") {
  Rng rng(31);
  auto inst = random_lda_instance(rng, 1, 2, 3, 6, 80);
  auto table = enumerate_posterior(inst);
  CollapsedViOptions opts;
  opts.mode = CollapsedViMode::kExact;
  opts.seed = 3;
  double best = kPosInf;
  for (int r = 0; r < 5; ++r) {
    opts.seed = 3 + r;
    const auto res = collapsed_vi(inst, opts);
    best = std::min(best, exact_kl(inst, table, res.y));
  }
  for (int rep = 0; rep < 100; ++rep) {
    const auto y = random_product(inst, rng);
    CHECK(exact_kl(inst, table, y) >= best - 1e-10);
  }
}

TEST_CASE("exact marginals: symmetry and point mass") {
  // symmetric instance: uniform eta, symmetric alpha => uniform marginals
  auto hp = uniform_lda(1, {3}, 2, 2, {0.8, 0.8});
  LdaCorpus corpus;
  corpus.words = {{0, 1, 0}};
  auto inst = CollapsedInstance::make_lda(hp, corpus);
  auto table = enumerate_posterior(inst);
  auto marg = exact_marginals(inst, table);
  for (const auto& row : marg.site_marginals) {
    CHECK(row[0] == doctest::Approx(0.5).epsilon(1e-10));
  }

  // a zero eta column forces a point-mass conditional on that site
  LdaHyperparams hp2 = hp;
  hp2.eta = {{1.0, 0.0}, {0.5, 0.5}};
  auto inst2 = CollapsedInstance::make_lda(hp2, corpus);
  auto table2 = enumerate_posterior(inst2);
  auto marg2 = exact_marginals(inst2, table2);
  CHECK(marg2.site_marginals[1][1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("MMSB n=3 all-ones graph: exact pair correlations") {
  // frozen from an independent full enumeration: every pair's correlation
  // of the group-0 indicators equals +0.565618
  MmsbHyperparams hp;
  hp.num_nodes = 3;
  hp.num_groups = 2;
  hp.alpha = {1.0, 1.0};
  hp.bmat = {{0.9, 0.3}, {0.3, 0.9}};
  MmsbGraph graph(3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j) graph.set_edge(i, j, 1);
    }
  }
  auto inst = CollapsedInstance::make_mmsb(hp, graph);
  auto table = enumerate_posterior(inst);
  CHECK(table.log_partition == doctest::Approx(-2.947471163594778).epsilon(1e-10));
  auto marg = exact_marginals(inst, table);
  for (const auto& joint : marg.site_marginals) {
    const auto pc = correlation_from_joint(joint, 2, 0);
    REQUIRE(pc.defined);
    CHECK(pc.corr == doctest::Approx(0.565618477978980).epsilon(1e-9));
    CHECK(pc.corr > 0.0);
  }
}

TEST_CASE("full-model KL matches the evidence-ELBO gap") {
  Rng rng(37);
  // LDA
  for (int rep = 0; rep < 5; ++rep) {
    auto inst = random_lda_instance(rng, 2, 2, 3, 4, 90 + rep);
    auto table = enumerate_posterior(inst);
    LdaFitOptions opts;
    opts.seed = rep;
    auto fit = lda_fit(inst.lda_params(), inst.lda_corpus(), opts);
    const double gap = oracle_log_evidence(inst, table) -
                       lda_elbo(inst.lda_params(), inst.lda_corpus(), fit.state);
    const double kl = lda_full_kl(inst.lda_params(), fit.state, inst, table);
    CHECK(std::abs(gap - kl) <= 1e-8 * std::max(1.0, std::abs(gap)));
    CHECK(gap >= -1e-9);  // ELBO never exceeds the log evidence
  }
  // MMSB, both families
  MmsbHyperparams hp;
  hp.num_nodes = 3;
  hp.num_groups = 2;
  hp.alpha = {1.0, 1.0};
  hp.bmat = {{0.9, 0.3}, {0.3, 0.9}};
  auto [graph, latents] = mmsb_sample(hp, 19);
  auto inst = CollapsedInstance::make_mmsb(hp, graph);
  auto table = enumerate_posterior(inst);
  MmsbFitOptions opts;
  opts.seed = 4;
  auto pg = pg_fit(hp, graph, opts);
  auto ff = ff_fit(hp, graph, opts);
  const double log_ev = oracle_log_evidence(inst, table);
  const double pg_gap = log_ev - pg_fit(hp, graph, opts).best_elbo;
  CHECK(std::abs(pg_gap - pg_full_kl(hp, pg.state, inst, table)) <= 1e-8);
  const double ff_gap = log_ev - ff.best_elbo;
  CHECK(std::abs(ff_gap - ff_full_kl(hp, ff.state, inst, table)) <= 1e-8);
  CHECK(pg_gap >= -1e-9);
  CHECK(ff_gap >= -1e-9);
}

TEST_CASE("state-space cap raises a size error") {
  auto hp = uniform_lda(1, {13}, 4, 2, {1.0, 1.0, 1.0, 1.0});
  LdaCorpus corpus;
  corpus.words = {std::vector<int>(13, 0)};
  auto inst = CollapsedInstance::make_lda(hp, corpus);
  CHECK(inst.state_space_size(kOracleStateCap) > kOracleStateCap);  // 4^13 > 1e7
  CHECK_THROWS_AS(enumerate_posterior(inst), std::length_error);
}
