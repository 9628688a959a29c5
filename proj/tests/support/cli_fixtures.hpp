#pragma once

// Helpers shared by the CLI tests and the acceptance runner: manifests on
// disk from in-memory blocks, running the CLI binary, and reading its
// labeled CSV output back.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmmi/block_model.hpp"
#include "cmmi/csv.hpp"

namespace fixture {

namespace fs = std::filesystem;
using cmmi::Index;
using cmmi::Matrix;

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes one CSV per block plus manifest.json into `dir`; returns the
/// manifest path.
inline fs::path write_manifest(const fs::path& dir, const std::vector<cmmi::ObservedBlock>& blocks) {
  fs::create_directories(dir);
  nlohmann::ordered_json doc;
  doc["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : blocks) {
    nlohmann::ordered_json e;
    e["id"] = b.block_id;
    e["rows"] = b.row_entities.ids();
    if (!b.symmetric) e["cols"] = b.col_entities.ids();
    e["values"] = b.block_id + ".csv";
    if (b.q) e["q"] = *b.q;
    doc["blocks"].push_back(e);
    std::ofstream(dir / (b.block_id + ".csv")) << cmmi::csv::format_matrix(b.values, &b.mask);
  }
  const auto path = dir / "manifest.json";
  std::ofstream(path) << doc.dump(2) << '\n';
  return path;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// Runs `cli args...` through the shell with stdout and stderr captured in
/// files under `scratch`.
inline CliResult run_cli(const std::string& cli, const std::string& args, const fs::path& scratch) {
  fs::create_directories(scratch);
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = "'" + cli + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

struct Labeled {
  std::vector<Index> rows, cols;
  Matrix values;
  cmmi::Mask observed;
};

/// Parses a CSV whose first row holds column ids and whose first column holds
/// row ids.
inline Labeled read_labeled(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  Labeled t;
  std::vector<std::vector<std::string>> cells;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> tok;
    for (auto s : cmmi::csv::split(line, ',')) tok.emplace_back(cmmi::csv::trim(s));
    if (header) {
      for (std::size_t k = 1; k < tok.size(); ++k) t.cols.push_back(std::stoll(tok[k]));
      header = false;
      continue;
    }
    t.rows.push_back(std::stoll(tok[0]));
    cells.emplace_back(tok.begin() + 1, tok.end());
  }
  const auto nr = static_cast<Index>(t.rows.size()), nc = static_cast<Index>(t.cols.size());
  t.values = Matrix::Zero(nr, nc);
  t.observed = cmmi::Mask::Constant(nr, nc, true);
  for (Index i = 0; i < nr; ++i)
    for (Index j = 0; j < nc; ++j) {
      const auto& s = cells[static_cast<std::size_t>(i)].at(static_cast<std::size_t>(j));
      if (s == cmmi::csv::kMissing) t.observed(i, j) = false;
      else t.values(i, j) = std::stod(s);
    }
  return t;
}

}  // namespace fixture
