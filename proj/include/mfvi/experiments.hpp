#pragma once

// Experiment drivers behind the CLI subcommands: the PG-vs-FF ELBO study,
// the pair-correlation report, the KL rate check, and the exact identity
// suite. The CLI adds argument handling and file output; the acceptance
// suite calls these directly.

#include <cstdint>
#include <string>
#include <vector>

#include "mfvi/functionals.hpp"
#include "mfvi/mmsb.hpp"
#include "mfvi/oracle.hpp"

namespace mfvi {

MmsbHyperparams default_study_config(int n);  // K=2, alpha=(1,1), B=[[.9,.3],[.3,.9]]

struct ElboRow {
  int n = 0;
  uint64_t seed = 0;
  std::string method;   // "pg" or "ff"
  double elbo = 0.0;
  double scaled_elbo = 0.0;  // elbo / n^2
  int sweeps = 0;
  bool converged = false;
  double wall_ms = 0.0;      // reported in logs only, never in CSVs
};

struct ElboStudyOptions {
  std::vector<int> sizes{50, 100, 200};
  std::vector<uint64_t> seeds{1, 2, 3};
  int restarts = 5;
  double tol = 1e-8;
  int max_sweeps = 1000;  // ff needs ~550 at n=100 on some seeds
  MmsbInit init = MmsbInit::kJitter;
  bool parallel = true;
};

struct ElboStudy {
  std::vector<ElboRow> rows;               // fixed order: size, seed, method
  std::vector<double> mean_scaled_gap;     // per size, mean over seeds
  bool pg_above_ff_everywhere = false;     // strict, per (size, seed)
  double gap_spread_factor = 0.0;          // max mean gap / min mean gap
};

ElboStudy run_elbo_study(const ElboStudyOptions& opts);

struct CorrStudyOptions {
  int n = 200;
  uint64_t seed = 1;
  int group = 0;
  MmsbInit init = MmsbInit::kSymmetric;  // reproduces the clean two-cluster split
  bool uniform_b = false;                // control: B identically 0.6
  double tol = 1e-8;
  int max_sweeps = 500;
  bool parallel = true;
};

struct CorrStudy {
  std::vector<PairCorrelation> correlations;
  CorrClusters clusters;
  int sweeps = 0;
  double best_elbo = 0.0;
};

CorrStudy run_corr_study(const CorrStudyOptions& opts);

struct RateRow {
  int n = 0;
  double kl = 0.0;
  double kl_per_site = 0.0;
  double lower_bound = 0.0;   // (DK/5n) ln(n/(DK) + 2)
  double ratio = 0.0;         // (KL/n) / ((DK/n) ln(n/(DK) + 2))
  bool asserted = false;      // only rows with DK/n <= 1/4 are asserted
  bool pass = false;
  ProductDistribution best_y; // best-objective collapsed-VI solution
};

struct RateCheckOptions {
  std::vector<int> sizes{4, 6, 8, 10, 12};
  int restarts = 20;
  uint64_t seed = 1;
  double tol = 1e-10;
  int max_sweeps = 500;
};

// LDA with D=1, K=2, alpha=(1/2,1/2), uniform eta; the collapsed posterior
// does not depend on the observed words. The rate bound carries an
// unspecified absolute constant and is valid only for DK small relative to
// n; rows with DK/n > 1/4 are computed and reported but not asserted.
inline constexpr double kRateAssertMaxRatio = 0.25;

std::vector<RateRow> run_rate_check(const RateCheckOptions& opts);

struct CheckResult {
  std::string instance;
  std::string check;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  bool descriptive = false;  // informational rows (never counted as failures)
};

struct IdentitySuiteOptions {
  int num_instances = 20;   // mixed LDA and MMSB
  uint64_t seed = 1;
  int random_y = 50;
  int random_z = 200;
  double elbo_bias = 0.0;   // test hook: shifts ELBOs to prove the harness trips
};

std::vector<CheckResult> run_identity_suite(const IdentitySuiteOptions& opts);

}  // namespace mfvi
