#include "mfvi/io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace mfvi {

using nlohmann::json;

std::string format_g12(double v) {
  if (std::isnan(v)) return "nan";
  if (v == kPosInf) return "inf";
  if (v == kNegInf) return "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string version_string() { return "vibench-0.1.0"; }

uint64_t config_hash(const std::string& canonical) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& columns,
                     const std::string& provenance)
    : path_(path), columns_(columns.size()) {
  buffer_ = "# " + provenance + "\n";
  for (size_t k = 0; k < columns.size(); ++k) {
    if (k) buffer_ += ',';
    buffer_ += columns[k];
  }
  buffer_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::logic_error("csv row width mismatch");
  for (size_t k = 0; k < cells.size(); ++k) {
    if (k) buffer_ += ',';
    buffer_ += cells[k];
  }
  buffer_ += '\n';
}

void CsvWriter::close() {
  if (closed_) return;
  std::ofstream out(path_, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path_);
  out << buffer_;
  if (!out.flush()) throw IoError("write failed: " + path_);
  closed_ = true;
}

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  json j;
  in >> j;
  return j;
}

void dump_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out.flush()) throw IoError("write failed: " + path);
}

}  // namespace

void write_lda_corpus(const std::string& path, const LdaHyperparams& hp,
                      const LdaCorpus& corpus) {
  json j;
  j["D"] = hp.num_docs;
  j["K"] = hp.num_topics;
  j["V"] = hp.vocab_size;
  j["n_d"] = hp.doc_lengths;
  j["alpha"] = hp.alpha;
  j["eta"] = hp.eta;
  json words = json::array();
  for (const auto& doc : corpus.words) {
    json row = json::array();
    for (int w : doc) row.push_back(w + 1);
    words.push_back(std::move(row));
  }
  j["words"] = std::move(words);
  dump_json(path, j);
}

std::pair<LdaHyperparams, LdaCorpus> read_lda_corpus(const std::string& path) {
  const json j = load_json(path);
  LdaHyperparams hp;
  hp.num_docs = j.at("D").get<int>();
  hp.num_topics = j.at("K").get<int>();
  hp.vocab_size = j.at("V").get<int>();
  hp.doc_lengths = j.at("n_d").get<std::vector<int>>();
  hp.alpha = j.at("alpha").get<std::vector<double>>();
  hp.eta = j.at("eta").get<std::vector<std::vector<double>>>();
  hp.validate();
  LdaCorpus corpus;
  for (const auto& row : j.at("words")) {
    std::vector<int> doc;
    for (const auto& w : row) {
      const int v = w.get<int>();
      if (v < 1 || v > hp.vocab_size) throw std::invalid_argument("corpus word out of range");
      doc.push_back(v - 1);
    }
    corpus.words.push_back(std::move(doc));
  }
  if (static_cast<int>(corpus.words.size()) != hp.num_docs) {
    throw std::invalid_argument("corpus document count mismatch");
  }
  for (int d = 0; d < hp.num_docs; ++d) {
    if (static_cast<int>(corpus.words[d].size()) != hp.doc_lengths[d]) {
      throw std::invalid_argument("corpus word count mismatch");
    }
  }
  return {std::move(hp), std::move(corpus)};
}

void write_mmsb_graph(const std::string& path, const MmsbHyperparams& hp,
                      const MmsbGraph& graph) {
  json j;
  j["n"] = hp.num_nodes;
  j["K"] = hp.num_groups;
  j["alpha"] = hp.alpha;
  j["B"] = hp.bmat;
  json rows = json::array();
  for (int i = 0; i < hp.num_nodes; ++i) {
    json row = json::array();
    for (int k = 0; k < hp.num_nodes; ++k) {
      if (i == k) {
        row.push_back(nullptr);
      } else {
        row.push_back(graph.edge(i, k));
      }
    }
    rows.push_back(std::move(row));
  }
  j["X"] = std::move(rows);
  dump_json(path, j);
}

std::pair<MmsbHyperparams, MmsbGraph> read_mmsb_graph(const std::string& path) {
  const json j = load_json(path);
  MmsbHyperparams hp;
  hp.num_nodes = j.at("n").get<int>();
  hp.num_groups = j.at("K").get<int>();
  hp.alpha = j.at("alpha").get<std::vector<double>>();
  hp.bmat = j.at("B").get<std::vector<std::vector<double>>>();
  hp.validate();
  MmsbGraph graph(hp.num_nodes);
  const auto& rows = j.at("X");
  if (static_cast<int>(rows.size()) != hp.num_nodes) throw std::invalid_argument("X row count mismatch");
  for (int i = 0; i < hp.num_nodes; ++i) {
    if (static_cast<int>(rows[i].size()) != hp.num_nodes) {
      throw std::invalid_argument("X column count mismatch");
    }
    for (int k = 0; k < hp.num_nodes; ++k) {
      if (i == k) continue;
      if (rows[i][k].is_null()) throw std::invalid_argument("off-diagonal X entry is null");
      const int v = rows[i][k].get<int>();
      if (v != 0 && v != 1) throw std::invalid_argument("X entries must be 0 or 1");
      graph.set_edge(i, k, v);
    }
  }
  return {std::move(hp), std::move(graph)};
}

void write_lda_fit(const std::string& path, const LdaHyperparams& hp,
                   const LdaVariationalState& state, const std::vector<double>& elbo_trace) {
  json j;
  j["phi"] = state.phi;
  json gamma = json::array();
  for (int d = 0; d < hp.num_docs; ++d) {
    json row = json::array();
    for (int l = 0; l < hp.num_topics; ++l) row.push_back(state.gamma(d, l));
    gamma.push_back(std::move(row));
  }
  j["gamma"] = std::move(gamma);
  j["elbo_trace"] = elbo_trace;
  dump_json(path, j);
}

namespace {

json gamma_to_json(const Mat& gamma) {
  json out = json::array();
  for (int i = 0; i < gamma.rows(); ++i) {
    json row = json::array();
    for (int l = 0; l < gamma.cols(); ++l) row.push_back(gamma(i, l));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

void write_pg_fit(const std::string& path, const PgState& state,
                  const std::vector<double>& elbo_trace) {
  const int n = state.num_nodes;
  const int KK = state.num_groups * state.num_groups;
  json pairs = json::array();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double* row = state.pair(i, j);
      json rec;
      rec["i"] = i + 1;
      rec["j"] = j + 1;
      rec["y"] = std::vector<double>(row, row + KK);
      pairs.push_back(std::move(rec));
    }
  }
  json j;
  j["method"] = "pg";
  j["y"] = std::move(pairs);
  j["gamma"] = gamma_to_json(state.gamma);
  j["elbo_trace"] = elbo_trace;
  dump_json(path, j);
}

void write_ff_fit(const std::string& path, const FfState& state,
                  const std::vector<double>& elbo_trace) {
  const int n = state.num_nodes;
  const int K = state.num_groups;
  json pairs = json::array();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      json rec;
      rec["i"] = i + 1;
      rec["j"] = j + 1;
      rec["y_out"] = std::vector<double>(state.out(i, j), state.out(i, j) + K);
      rec["y_in"] = std::vector<double>(state.in(i, j), state.in(i, j) + K);
      pairs.push_back(std::move(rec));
    }
  }
  json j;
  j["method"] = "ff";
  j["y"] = std::move(pairs);
  j["gamma"] = gamma_to_json(state.gamma);
  j["elbo_trace"] = elbo_trace;
  dump_json(path, j);
}

}  // namespace mfvi
