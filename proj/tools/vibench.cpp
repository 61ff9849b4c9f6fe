// vibench: experiment runner for the LDA/MMSB variational inference engines.
//
// Subcommands: sample, fit-lda, fit-mmsb, figure-elbo, corr-report,
// rate-check, identity-suite, oracle.
//
// Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 IO error.
// Output CSVs are byte-deterministic for a fixed config (12 significant
// digits, fixed row order); wall-clock timings go to stderr only.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mfvi/experiments.hpp"
#include "mfvi/io.hpp"

using namespace mfvi;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse error: " + std::string(e.what()));
  }
  if (!j.is_object() || j.empty()) {
    throw std::invalid_argument("config must be a non-empty JSON object: " + path);
  }
  return j;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

std::string provenance(uint64_t cfg_hash, const std::vector<uint64_t>& seeds) {
  std::string s = version_string();
  char buf[32];
  std::snprintf(buf, sizeof(buf), " config=%016llx", static_cast<unsigned long long>(cfg_hash));
  s += buf;
  s += " seeds=";
  for (size_t k = 0; k < seeds.size(); ++k) {
    if (k) s += '|';
    s += std::to_string(seeds[k]);
  }
  return s;
}

// ---------------------------------------------------------------- sample --

int cmd_sample(const std::string& config_path, const std::string& out_dir) {
  const json cfg = load_config(config_path);
  ensure_dir(out_dir);
  const std::string model = cfg.at("model").get<std::string>();
  const auto seeds = cfg.at("seeds").get<std::vector<uint64_t>>();

  if (model == "lda") {
    LdaHyperparams hp;
    hp.num_docs = cfg.at("D").get<int>();
    hp.num_topics = cfg.at("K").get<int>();
    hp.vocab_size = cfg.at("V").get<int>();
    hp.doc_lengths = cfg.at("n_d").get<std::vector<int>>();
    hp.alpha = cfg.at("alpha").get<std::vector<double>>();
    hp.eta = cfg.at("eta").get<std::vector<std::vector<double>>>();
    hp.validate();
    for (uint64_t seed : seeds) {
      auto [corpus, latents] = lda_sample(hp, seed);
      write_lda_corpus(out_dir + "/lda_corpus_seed" + std::to_string(seed) + ".json", hp, corpus);
    }
    return kExitOk;
  }
  if (model == "mmsb") {
    std::vector<int> sizes;
    if (cfg.contains("n_list")) {
      sizes = cfg.at("n_list").get<std::vector<int>>();
    } else {
      sizes = {cfg.at("n").get<int>()};
    }
    for (int n : sizes) {
      MmsbHyperparams hp;
      hp.num_nodes = n;
      hp.num_groups = cfg.at("K").get<int>();
      hp.alpha = cfg.at("alpha").get<std::vector<double>>();
      hp.bmat = cfg.at("B").get<std::vector<std::vector<double>>>();
      hp.validate();
      for (uint64_t seed : seeds) {
        auto [graph, latents] = mmsb_sample(hp, seed);
        write_mmsb_graph(out_dir + "/mmsb_graph_n" + std::to_string(n) + "_seed" +
                             std::to_string(seed) + ".json",
                         hp, graph);
      }
    }
    return kExitOk;
  }
  throw std::invalid_argument("config model must be \"lda\" or \"mmsb\"");
}

// ------------------------------------------------------------------ fits --

int cmd_fit_lda(const std::string& data_path, const std::string& out_path, uint64_t seed,
                double tol, int max_sweeps) {
  auto [hp, corpus] = read_lda_corpus(data_path);
  LdaFitOptions opts;
  opts.seed = seed;
  opts.tol = tol;
  opts.max_sweeps = max_sweeps;
  const auto fit = lda_fit(hp, corpus, opts);
  write_lda_fit(out_path, hp, fit.state, fit.elbo_trace);
  std::fprintf(stderr, "fit-lda: %d sweeps, converged=%d, elbo=%s\n", fit.sweeps,
               fit.converged ? 1 : 0, format_g12(fit.elbo_trace.back()).c_str());
  return kExitOk;
}

int cmd_fit_mmsb(const std::string& data_path, const std::string& out_path,
                 const std::string& method, uint64_t seed, double tol, int max_sweeps,
                 int restarts, const std::string& init) {
  auto [hp, graph] = read_mmsb_graph(data_path);
  MmsbFitOptions opts;
  opts.seed = seed;
  opts.tol = tol;
  opts.max_sweeps = max_sweeps;
  opts.restarts = restarts;
  opts.init = init == "symmetric" ? MmsbInit::kSymmetric : MmsbInit::kJitter;

  const bool both = method == "both";
  if (method == "pg" || both) {
    const auto fit = pg_fit(hp, graph, opts);
    const std::string path = both ? out_path + ".pg.json" : out_path;
    write_pg_fit(path, fit.state, fit.elbo_trace);
    std::fprintf(stderr, "fit-mmsb pg: best restart %d, %d sweeps, elbo=%s\n", fit.best_restart,
                 fit.sweeps, format_g12(fit.best_elbo).c_str());
  }
  if (method == "ff" || both) {
    const auto fit = ff_fit(hp, graph, opts);
    const std::string path = both ? out_path + ".ff.json" : out_path;
    write_ff_fit(path, fit.state, fit.elbo_trace);
    std::fprintf(stderr, "fit-mmsb ff: best restart %d, %d sweeps, elbo=%s\n", fit.best_restart,
                 fit.sweeps, format_g12(fit.best_elbo).c_str());
  }
  return kExitOk;
}

// ----------------------------------------------------------- figure-elbo --

int cmd_figure_elbo(const std::optional<std::string>& config_path, const std::string& out_dir,
                    int restarts_override) {
  ElboStudyOptions opts;
  std::string canonical = "figure-elbo:default";
  if (config_path) {
    const json cfg = load_config(*config_path);
    if (cfg.contains("n_list")) opts.sizes = cfg.at("n_list").get<std::vector<int>>();
    if (cfg.contains("seeds")) opts.seeds = cfg.at("seeds").get<std::vector<uint64_t>>();
    if (cfg.contains("restarts")) opts.restarts = cfg.at("restarts").get<int>();
    if (cfg.contains("tol")) opts.tol = cfg.at("tol").get<double>();
    if (cfg.contains("max_sweeps")) opts.max_sweeps = cfg.at("max_sweeps").get<int>();
    canonical = cfg.dump();
  }
  if (restarts_override > 0) opts.restarts = restarts_override;
  ensure_dir(out_dir);

  const auto study = run_elbo_study(opts);
  const std::string prov = provenance(config_hash(canonical), opts.seeds);

  CsvWriter csv(out_dir + "/figure_elbo.csv",
                {"experiment", "n", "seed", "method", "elbo", "scaled_elbo", "sweeps",
                 "converged"},
                prov);
  for (const auto& row : study.rows) {
    csv.row({"figure-elbo", std::to_string(row.n), std::to_string(row.seed), row.method,
             format_g12(row.elbo), format_g12(row.scaled_elbo), std::to_string(row.sweeps),
             row.converged ? "1" : "0"});
    std::fprintf(stderr, "figure-elbo: n=%d seed=%llu %s elbo=%s (%.0f ms)\n", row.n,
                 static_cast<unsigned long long>(row.seed), row.method.c_str(),
                 format_g12(row.elbo).c_str(), row.wall_ms);
  }
  csv.close();

  CsvWriter summary(out_dir + "/figure_elbo_summary.csv",
                    {"n", "mean_scaled_gap", "gap_positive"}, prov);
  for (size_t k = 0; k < opts.sizes.size(); ++k) {
    summary.row({std::to_string(opts.sizes[k]), format_g12(study.mean_scaled_gap[k]),
                 study.mean_scaled_gap[k] > 0.0 ? "1" : "0"});
  }
  summary.close();

  if (!study.pg_above_ff_everywhere) {
    std::fprintf(stderr, "figure-elbo: FAIL, pg scaled ELBO did not exceed ff everywhere\n");
    return kExitCheckFailure;
  }
  std::fprintf(stderr, "figure-elbo: pg > ff at every (n, seed); gap spread factor %s\n",
               format_g12(study.gap_spread_factor).c_str());
  return kExitOk;
}

// ----------------------------------------------------------- corr-report --

int cmd_corr_report(const std::optional<std::string>& config_path, const std::string& out_dir,
                    int n_override, std::optional<uint64_t> seed, const std::string& init,
                    bool uniform_b) {
  CorrStudyOptions opts;
  std::string canonical = "corr-report:default";
  if (config_path) {
    const json cfg = load_config(*config_path);
    if (cfg.contains("n")) opts.n = cfg.at("n").get<int>();
    if (cfg.contains("seed")) opts.seed = cfg.at("seed").get<uint64_t>();
    if (cfg.contains("group")) opts.group = cfg.at("group").get<int>() - 1;
    canonical = cfg.dump();
  }
  if (n_override > 0) opts.n = n_override;
  if (seed) opts.seed = *seed;
  opts.init = init == "jitter" ? MmsbInit::kJitter : MmsbInit::kSymmetric;
  opts.uniform_b = uniform_b;
  ensure_dir(out_dir);

  const auto study = run_corr_study(opts);
  const std::string prov = provenance(config_hash(canonical), {opts.seed});

  CsvWriter csv(out_dir + "/corr_report.csv", {"i", "j", "corr", "cluster"}, prov);
  for (const auto& pc : study.correlations) {
    std::string cluster = "undefined";
    if (pc.defined) {
      cluster = std::abs(pc.corr - study.clusters.center_lo) <=
                        std::abs(pc.corr - study.clusters.center_hi)
                    ? "lo"
                    : "hi";
    }
    csv.row({std::to_string(pc.i + 1), std::to_string(pc.j + 1),
             pc.defined ? format_g12(pc.corr) : "", cluster});
  }
  csv.close();

  CsvWriter summary(out_dir + "/corr_summary.csv",
                    {"center_lo", "center_hi", "prop_lo", "prop_hi", "used", "undefined"}, prov);
  summary.row({format_g12(study.clusters.center_lo), format_g12(study.clusters.center_hi),
               format_g12(study.clusters.prop_lo), format_g12(study.clusters.prop_hi),
               std::to_string(study.clusters.used), std::to_string(study.clusters.undefined)});
  summary.close();

  std::fprintf(stderr,
               "corr-report: n=%d sweeps=%d centers (%s, %s) props (%s, %s) undefined=%d\n",
               opts.n, study.sweeps, format_g12(study.clusters.center_lo).c_str(),
               format_g12(study.clusters.center_hi).c_str(),
               format_g12(study.clusters.prop_lo).c_str(),
               format_g12(study.clusters.prop_hi).c_str(), study.clusters.undefined);
  return kExitOk;
}

// ------------------------------------------------------------ rate-check --

int cmd_rate_check(const std::optional<std::string>& config_path, const std::string& out_dir,
                   int restarts_override, std::optional<uint64_t> seed) {
  RateCheckOptions opts;
  std::string canonical = "rate-check:default";
  if (config_path) {
    const json cfg = load_config(*config_path);
    if (cfg.contains("n_list")) opts.sizes = cfg.at("n_list").get<std::vector<int>>();
    if (cfg.contains("restarts")) opts.restarts = cfg.at("restarts").get<int>();
    if (cfg.contains("seed")) opts.seed = cfg.at("seed").get<uint64_t>();
    canonical = cfg.dump();
  }
  if (restarts_override > 0) opts.restarts = restarts_override;
  if (seed) opts.seed = *seed;
  ensure_dir(out_dir);

  const auto rows = run_rate_check(opts);
  const std::string prov = provenance(config_hash(canonical), {opts.seed});
  CsvWriter csv(out_dir + "/rate_check.csv",
                {"n", "kl", "kl_per_site", "lower_bound", "ratio", "asserted", "pass"}, prov);
  bool ok = true;
  for (const auto& row : rows) {
    csv.row({std::to_string(row.n), format_g12(row.kl), format_g12(row.kl_per_site),
             format_g12(row.lower_bound), format_g12(row.ratio), row.asserted ? "1" : "0",
             row.pass ? "1" : "0"});
    std::fprintf(stderr, "rate-check: n=%d KL/n=%s bound=%s %s\n", row.n,
                 format_g12(row.kl_per_site).c_str(), format_g12(row.lower_bound).c_str(),
                 row.asserted ? (row.pass ? "PASS" : "FAIL") : "reported");
    ok = ok && row.pass;

    json ydump;
    ydump["n"] = row.n;
    ydump["objective"] = "collapsed-vi exact mode, best of restarts";
    ydump["y"] = row.best_y.rows;
    std::ofstream yf(out_dir + "/rate_y_n" + std::to_string(row.n) + ".json");
    if (!yf) throw IoError("cannot open for writing: rate_y dump");
    yf << ydump.dump(2) << '\n';
  }
  csv.close();
  return ok ? kExitOk : kExitCheckFailure;
}

// -------------------------------------------------------- identity-suite --

int cmd_identity_suite(const std::optional<std::string>& config_path,
                       const std::optional<std::string>& out_dir, int num_seeds,
                       std::optional<uint64_t> seed, double elbo_bias) {
  IdentitySuiteOptions opts;
  std::string canonical = "identity-suite:default";
  if (config_path) {
    const json cfg = load_config(*config_path);
    if (cfg.contains("instances")) opts.num_instances = cfg.at("instances").get<int>();
    if (cfg.contains("seed")) opts.seed = cfg.at("seed").get<uint64_t>();
    canonical = cfg.dump();
  }
  if (num_seeds > 0) opts.num_instances = num_seeds;
  if (seed) opts.seed = *seed;
  opts.elbo_bias = elbo_bias;

  const auto results = run_identity_suite(opts);
  bool ok = true;
  for (const auto& r : results) {
    if (r.descriptive) {
      std::printf("[info] %s %s value=%s\n", r.instance.c_str(), r.check.c_str(),
                  format_g12(r.residual).c_str());
      continue;
    }
    std::printf("%s %s %s residual=%s tol=%s\n", r.pass ? "[PASS]" : "[FAIL]",
                r.instance.c_str(), r.check.c_str(), format_g12(r.residual).c_str(),
                format_g12(r.tolerance).c_str());
    ok = ok && r.pass;
  }
  if (out_dir) {
    ensure_dir(*out_dir);
    CsvWriter csv(*out_dir + "/identity_suite.csv",
                  {"instance", "check", "kind", "residual", "tolerance", "pass"},
                  provenance(config_hash(canonical), {opts.seed}));
    for (const auto& r : results) {
      csv.row({r.instance, r.check, r.descriptive ? "info" : "check", format_g12(r.residual),
               format_g12(r.tolerance), r.pass ? "1" : "0"});
    }
    csv.close();
  }
  return ok ? kExitOk : kExitCheckFailure;
}

// ---------------------------------------------------------------- oracle --

int cmd_oracle(const std::string& data_path, const std::optional<std::string>& out_path) {
  std::ifstream probe(data_path);
  if (!probe) throw IoError("cannot open: " + data_path);
  json j;
  try {
    probe >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("data parse error: " + std::string(e.what()));
  }

  CollapsedInstance inst = j.contains("D")
                               ? [&] {
                                   auto [hp, corpus] = read_lda_corpus(data_path);
                                   return CollapsedInstance::make_lda(hp, corpus);
                                 }()
                               : [&] {
                                   auto [hp, graph] = read_mmsb_graph(data_path);
                                   return CollapsedInstance::make_mmsb(hp, graph);
                                 }();

  const auto table = enumerate_posterior(inst);
  std::printf("states %llu\n", static_cast<unsigned long long>(table.num_states));
  std::printf("log_partition %s\n", format_g12(table.log_partition).c_str());
  std::printf("log_evidence %s\n", format_g12(oracle_log_evidence(inst, table)).c_str());

  if (out_path) {
    if (table.num_states > 100000) {
      throw std::invalid_argument("oracle dump limited to 1e5 states");
    }
    CsvWriter csv(*out_path, {"assignment", "log_weight", "log_prob"},
                  provenance(config_hash(data_path), {}));
    std::vector<int> z(inst.num_sites(), 0);
    for (uint64_t idx = 0; idx < table.num_states; ++idx) {
      std::string key;
      for (int i = 0; i < inst.num_sites(); ++i) {
        if (i) key += ' ';
        key += std::to_string(z[i] + 1);
      }
      csv.row({key, format_g12(table.log_weights[idx]),
               format_g12(table.log_weights[idx] - table.log_partition)});
      for (int i = inst.num_sites() - 1; i >= 0; --i) {
        if (++z[i] < inst.num_cats(i)) break;
        z[i] = 0;
      }
    }
    csv.close();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-field VI engines for LDA and MMSB: experiments and checks"};
  app.require_subcommand(1);

  std::string config_path, data_path, out = "out", method = "pg", init;
  uint64_t seed = 1;
  int restarts = 0, max_sweeps = 0, num_seeds = 0, n_override = 0;
  double tol = 1e-8, elbo_bias = 0.0;
  bool uniform_b = false;

  auto* sample = app.add_subcommand("sample", "write corpus/graph JSON files per seed");
  sample->add_option("--config", config_path)->required();
  sample->add_option("--out", out);

  auto* fit_lda_cmd = app.add_subcommand("fit-lda", "CAVI fit of an LDA corpus");
  fit_lda_cmd->add_option("--data", data_path)->required();
  fit_lda_cmd->add_option("--out", out)->required();
  fit_lda_cmd->add_option("--seed", seed);
  fit_lda_cmd->add_option("--tol", tol);
  fit_lda_cmd->add_option("--max-sweeps", max_sweeps);

  auto* fit_mmsb_cmd = app.add_subcommand("fit-mmsb", "CAVI fit of an MMSB graph");
  fit_mmsb_cmd->add_option("--data", data_path)->required();
  fit_mmsb_cmd->add_option("--out", out)->required();
  fit_mmsb_cmd->add_option("--method", method)->check(CLI::IsMember({"pg", "ff", "both"}));
  fit_mmsb_cmd->add_option("--seed", seed);
  fit_mmsb_cmd->add_option("--tol", tol);
  fit_mmsb_cmd->add_option("--max-sweeps", max_sweeps);
  fit_mmsb_cmd->add_option("--restarts", restarts);
  fit_mmsb_cmd->add_option("--init", init)->check(CLI::IsMember({"jitter", "symmetric"}));

  auto* figure = app.add_subcommand("figure-elbo", "PG vs FF ELBO study on the default grid");
  figure->add_option("--config", config_path);
  figure->add_option("--out", out);
  figure->add_option("--restarts", restarts);

  auto* corr = app.add_subcommand("corr-report", "pair-correlation clusters under the PG fit");
  corr->add_option("--config", config_path);
  corr->add_option("--out", out);
  corr->add_option("--n", n_override);
  corr->add_option("--seed", seed);
  corr->add_option("--init", init)->check(CLI::IsMember({"jitter", "symmetric"}));
  corr->add_flag("--uniform-b", uniform_b, "control run with a constant B");

  auto* rate = app.add_subcommand("rate-check", "collapsed-VI KL rate lower bound");
  rate->add_option("--config", config_path);
  rate->add_option("--out", out);
  rate->add_option("--restarts", restarts);
  rate->add_option("--seed", seed);

  auto* identity = app.add_subcommand("identity-suite", "exact identity checks vs the oracle");
  identity->add_option("--config", config_path);
  identity->add_option("--out", out);
  identity->add_option("--instances", num_seeds);
  identity->add_option("--seed", seed);
  identity->add_option("--inject-elbo-bias", elbo_bias,
                       "test hook: shift ELBOs to verify failure detection");

  auto* oracle = app.add_subcommand("oracle", "enumerate a collapsed posterior");
  oracle->add_option("--data", data_path)->required();
  oracle->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sample->parsed()) return cmd_sample(config_path, out);
    if (fit_lda_cmd->parsed()) {
      return cmd_fit_lda(data_path, out, seed, tol, max_sweeps > 0 ? max_sweeps : 1000);
    }
    if (fit_mmsb_cmd->parsed()) {
      return cmd_fit_mmsb(data_path, out, method, seed, tol, max_sweeps > 0 ? max_sweeps : 500,
                          restarts > 0 ? restarts : 1, init.empty() ? "jitter" : init);
    }
    const auto cfg = config_path.empty() ? std::nullopt : std::optional<std::string>(config_path);
    if (figure->parsed()) return cmd_figure_elbo(cfg, out, restarts);
    if (corr->parsed()) {
      const auto seed_opt =
          corr->count("--seed") ? std::optional<uint64_t>(seed) : std::nullopt;
      return cmd_corr_report(cfg, out, n_override, seed_opt,
                             init.empty() ? "symmetric" : init, uniform_b);
    }
    if (rate->parsed()) {
      const auto seed_opt =
          rate->count("--seed") ? std::optional<uint64_t>(seed) : std::nullopt;
      return cmd_rate_check(cfg, out, restarts, seed_opt);
    }
    if (identity->parsed()) {
      const auto out_opt = identity->count("--out") ? std::optional<std::string>(out) : std::nullopt;
      const auto seed_opt =
          identity->count("--seed") ? std::optional<uint64_t>(seed) : std::nullopt;
      return cmd_identity_suite(cfg, out_opt, num_seeds, seed_opt, elbo_bias);
    }
    if (oracle->parsed()) {
      const auto out_opt = oracle->count("--out") ? std::optional<std::string>(out) : std::nullopt;
      return cmd_oracle(data_path, out_opt);
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::length_error& e) {
    std::fprintf(stderr, "size error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheckFailure;
  }
  return kExitUsage;
}
