#pragma once

// JSON interchange for corpora, graphs, and fit exports, plus a CSV writer
// with locale-free 12-significant-digit formatting and a provenance comment
// line. Word and category indices are 1-based on disk, 0-based in memory.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfvi/lda.hpp"
#include "mfvi/mmsb.hpp"

namespace mfvi {

// Filesystem-level failures; the CLI maps these to exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// %.12g with "." decimal point regardless of locale; inf/-inf/nan spelled out.
std::string format_g12(double v);

std::string version_string();  // fixed build identifier for provenance lines

// FNV-1a over a canonical string form of a config.
uint64_t config_hash(const std::string& canonical);

class CsvWriter {
 public:
  // Opens `path` and writes the provenance comment and header immediately.
  // Throws std::runtime_error (filesystem problems surface as exit code 3
  // in the CLI).
  CsvWriter(const std::string& path, const std::vector<std::string>& columns,
            const std::string& provenance);
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::string path_;
  std::string buffer_;
  size_t columns_ = 0;
  bool closed_ = false;
};

void write_lda_corpus(const std::string& path, const LdaHyperparams& hp, const LdaCorpus& corpus);
std::pair<LdaHyperparams, LdaCorpus> read_lda_corpus(const std::string& path);

void write_mmsb_graph(const std::string& path, const MmsbHyperparams& hp, const MmsbGraph& graph);
std::pair<MmsbHyperparams, MmsbGraph> read_mmsb_graph(const std::string& path);

void write_lda_fit(const std::string& path, const LdaHyperparams& hp,
                   const LdaVariationalState& state, const std::vector<double>& elbo_trace);
void write_pg_fit(const std::string& path, const PgState& state,
                  const std::vector<double>& elbo_trace);
void write_ff_fit(const std::string& path, const FfState& state,
                  const std::vector<double>& elbo_trace);

}  // namespace mfvi
