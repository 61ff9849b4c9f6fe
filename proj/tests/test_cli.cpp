#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

// End-to-end checks of the vibench binary: exit codes, file determinism,
// and the data file formats. The binary path arrives in VIBENCH_BIN.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string bin() {
  const char* p = std::getenv("VIBENCH_BIN");
  REQUIRE(p != nullptr);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = bin() + " " + args + " 2>/dev/null 1>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("cli_tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("sample: byte-identical reruns and correct shapes") {
  TempDir dir("sample");
  const auto cfg = dir.path / "cfg.json";
  write_file(cfg, R"({"model":"mmsb","n":12,"K":2,"alpha":[1,1],
                      "B":[[0.9,0.3],[0.3,0.9]],"seeds":[1,2]})");
  const std::string args =
      "sample --config " + cfg.string() + " --out " + (dir.path / "a").string();
  REQUIRE(run(args) == 0);
  REQUIRE(run("sample --config " + cfg.string() + " --out " + (dir.path / "b").string()) == 0);
  CHECK(slurp(dir.path / "a/mmsb_graph_n12_seed1.json") ==
        slurp(dir.path / "b/mmsb_graph_n12_seed1.json"));

  const json g = json::parse(slurp(dir.path / "a/mmsb_graph_n12_seed1.json"));
  int off_diag = 0;
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      if (i == j) {
        CHECK(g["X"][i][j].is_null());
      } else {
        off_diag += g["X"][i][j].is_number() ? 1 : 0;
      }
    }
  }
  CHECK(off_diag == 12 * 11);

  const auto lcfg = dir.path / "lda.json";
  write_file(lcfg, R"({"model":"lda","D":2,"K":2,"V":3,"n_d":[3,4],"alpha":[0.5,0.5],
                       "eta":[[0.5,0.25,0.25],[0.2,0.3,0.5]],"seeds":[7]})");
  REQUIRE(run("sample --config " + lcfg.string() + " --out " + (dir.path / "l").string()) == 0);
  const json c = json::parse(slurp(dir.path / "l/lda_corpus_seed7.json"));
  CHECK(c["words"][0].size() + c["words"][1].size() == 7);
  for (const auto& doc : c["words"]) {
    for (const auto& w : doc) {
      CHECK(w.get<int>() >= 1);
      CHECK(w.get<int>() <= 3);
    }
  }
}

TEST_CASE("fit commands produce exports that load back") {
  TempDir dir("fits");
  const auto cfg = dir.path / "cfg.json";
  write_file(cfg, R"({"model":"mmsb","n":10,"K":2,"alpha":[1,1],
                      "B":[[0.9,0.3],[0.3,0.9]],"seeds":[3]})");
  REQUIRE(run("sample --config " + cfg.string() + " --out " + dir.path.string()) == 0);
  const std::string data = (dir.path / "mmsb_graph_n10_seed3.json").string();
  REQUIRE(run("fit-mmsb --data " + data + " --out " + (dir.path / "fit.json").string() +
              " --method both --restarts 2 --seed 5") == 0);
  const json pg = json::parse(slurp(dir.path / "fit.json.pg.json"));
  CHECK(pg["method"] == "pg");
  CHECK(pg["y"].size() == 90);
  CHECK(pg["elbo_trace"].size() >= 2);
  const json ff = json::parse(slurp(dir.path / "fit.json.ff.json"));
  CHECK(ff["y"][0]["y_out"].size() == 2);

  const auto lcfg = dir.path / "lda.json";
  write_file(lcfg, R"({"model":"lda","D":1,"K":2,"V":4,"n_d":[20],"alpha":[0.7,0.7],
                       "eta":[[0.4,0.3,0.2,0.1],[0.1,0.2,0.3,0.4]],"seeds":[2]})");
  REQUIRE(run("sample --config " + lcfg.string() + " --out " + dir.path.string()) == 0);
  REQUIRE(run("fit-lda --data " + (dir.path / "lda_corpus_seed2.json").string() + " --out " +
              (dir.path / "ldafit.json").string() + " --seed 9") == 0);
  const json lf = json::parse(slurp(dir.path / "ldafit.json"));
  CHECK(lf["phi"][0].size() == 20);
}

TEST_CASE("identity-suite exit codes: pass, injected failure, bad config") {
  TempDir dir("suite");
  REQUIRE(run("identity-suite --instances 3 --seed 11") == 0);
  CHECK(run("identity-suite --instances 3 --seed 11 --inject-elbo-bias 0.5") == 1);

  const auto empty = dir.path / "empty.json";
  write_file(empty, "{}");
  CHECK(run("identity-suite --config " + empty.string()) == 2);
  CHECK(run("identity-suite --config " + (dir.path / "missing.json").string()) == 3);
  CHECK(run("no-such-command") == 2);
}

TEST_CASE("oracle dump and determinism of rate-check CSVs") {
  TempDir dir("oracle");
  const auto lcfg = dir.path / "lda.json";
  write_file(lcfg, R"({"model":"lda","D":1,"K":2,"V":2,"n_d":[2],"alpha":[1,1],
                       "eta":[[0.5,0.5],[0.5,0.5]],"seeds":[1]})");
  REQUIRE(run("sample --config " + lcfg.string() + " --out " + dir.path.string()) == 0);
  const std::string data = (dir.path / "lda_corpus_seed1.json").string();
  REQUIRE(run("oracle --data " + data + " --out " + (dir.path / "table.csv").string()) == 0);
  const std::string table = slurp(dir.path / "table.csv");
  // header + comment + 4 assignments
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
  CHECK(table.find("log_prob") != std::string::npos);

  // MMSB data path: n=2, K=2 enumerates 16 grouped assignments
  const auto mcfg = dir.path / "mmsb.json";
  write_file(mcfg, R"({"model":"mmsb","n":2,"K":2,"alpha":[1,1],
                       "B":[[0.9,0.3],[0.3,0.9]],"seeds":[4]})");
  REQUIRE(run("sample --config " + mcfg.string() + " --out " + dir.path.string()) == 0);
  REQUIRE(run("oracle --data " + (dir.path / "mmsb_graph_n2_seed4.json").string() + " --out " +
              (dir.path / "mtable.csv").string()) == 0);
  const std::string mtable = slurp(dir.path / "mtable.csv");
  CHECK(std::count(mtable.begin(), mtable.end(), '\n') == 18);  // comment + header + 16

  const auto rcfg = dir.path / "rate.json";
  write_file(rcfg, R"({"n_list":[4,6],"restarts":2})");
  REQUIRE(run("rate-check --config " + rcfg.string() + " --out " + (dir.path / "r1").string()) ==
          0);
  REQUIRE(run("rate-check --config " + rcfg.string() + " --out " + (dir.path / "r2").string()) ==
          0);
  CHECK(slurp(dir.path / "r1/rate_check.csv") == slurp(dir.path / "r2/rate_check.csv"));
  CHECK(slurp(dir.path / "r1/rate_check.csv").rfind("# vibench-", 0) == 0);

  // outputs are independent of the OpenMP thread count
  const int status = std::system(("OMP_NUM_THREADS=1 " + bin() + " rate-check --config " +
                                  rcfg.string() + " --out " + (dir.path / "r3").string() +
                                  " 2>/dev/null 1>/dev/null")
                                     .c_str());
  REQUIRE(WEXITSTATUS(status) == 0);
  CHECK(slurp(dir.path / "r1/rate_check.csv") == slurp(dir.path / "r3/rate_check.csv"));
}

TEST_CASE("figure-elbo runs a reduced grid deterministically") {
  TempDir dir("figure");
  const auto cfg = dir.path / "cfg.json";
  write_file(cfg, R"({"n_list":[12],"seeds":[1],"restarts":3})");
  REQUIRE(run("figure-elbo --config " + cfg.string() + " --out " + (dir.path / "a").string()) ==
          0);
  REQUIRE(run("figure-elbo --config " + cfg.string() + " --out " + (dir.path / "b").string()) ==
          0);
  CHECK(slurp(dir.path / "a/figure_elbo.csv") == slurp(dir.path / "b/figure_elbo.csv"));
  CHECK(slurp(dir.path / "a/figure_elbo_summary.csv") ==
        slurp(dir.path / "b/figure_elbo_summary.csv"));
}

TEST_CASE("corr-report control run concentrates near zero") {
  TempDir dir("corr");
  REQUIRE(run("corr-report --n 40 --seed 2 --uniform-b --out " + (dir.path / "c").string()) == 0);
  const std::string summary = slurp(dir.path / "c/corr_summary.csv");
  // parse the single data row: centers are the first two fields
  const auto header_end = summary.find('\n', summary.find('\n') + 1);
  std::istringstream row(summary.substr(header_end + 1));
  std::string lo, hi;
  std::getline(row, lo, ',');
  std::getline(row, hi, ',');
  CHECK(std::abs(std::stod(lo)) < 0.1);
  CHECK(std::abs(std::stod(hi)) < 0.1);
}
