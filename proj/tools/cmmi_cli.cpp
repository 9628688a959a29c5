// Command-line front end: cmmi <subcommand> [flags]. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 numerical failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmmi/cmmi.hpp"

namespace fs = std::filesystem;
using namespace cmmi;

namespace {

struct Options {
  std::string manifest;
  std::string chain;
  std::optional<Index> rank;
  std::string signature;
  std::string mode = "psd";
  std::string entry;
  std::optional<double> ci;
  std::optional<Index> threshold;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string config;
  bool recover = false;
  bool timing = false;
};

std::vector<std::string> split_list(const std::string& text, const std::string& what) {
  std::vector<std::string> out;
  for (auto token : csv::split(text, ',')) {
    const auto t = csv::trim(token);
    if (t.empty()) throw UsageError(what + " has an empty element");
    out.emplace_back(t);
  }
  return out;
}

Index parse_index(const std::string& s, const std::string& what) {
  Index v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0)
    throw UsageError(what + ": '" + s + "' is not a nonnegative integer");
  return v;
}

EmbedSpec embed_spec(const Options& o) {
  if (o.mode == "indef") {
    if (o.signature.empty()) throw UsageError("--mode indef needs --signature D+,D-");
    if (o.rank) throw UsageError("--rank and --signature are mutually exclusive");
    const auto parts = split_list(o.signature, "--signature");
    if (parts.size() != 2) throw UsageError("--signature expects D+,D-");
    const Signature sig{parse_index(parts[0], "--signature"), parse_index(parts[1], "--signature")};
    if (sig.d() < 1) throw UsageError("--signature must retain at least one eigenvalue");
    return EmbedSpec::indefinite(sig);
  }
  if (o.mode != "psd" && o.mode != "asym") throw UsageError("--mode must be psd, indef or asym");
  if (!o.signature.empty()) throw UsageError("--signature applies to --mode indef only");
  if (!o.rank) throw UsageError("--rank D is required");
  if (*o.rank < 1) throw UsageError("--rank must be positive");
  return o.mode == "psd" ? EmbedSpec::psd(*o.rank) : EmbedSpec::asymmetric(*o.rank);
}

std::vector<ObservedBlock> load(const Options& o) {
  if (o.manifest.empty()) throw UsageError("--manifest is required");
  return load_manifest(o.manifest);
}

const ObservedBlock& find_block(const std::vector<ObservedBlock>& blocks, const std::string& id) {
  for (const auto& b : blocks)
    if (b.block_id == id) return b;
  throw DataError("block '" + id + "' is not in the manifest");
}

std::vector<RescaledBlock> rescale_all(const std::vector<ObservedBlock>& blocks) {
  std::vector<RescaledBlock> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(rescale(b));
  return out;
}

std::string file_stem_for(const std::string& id) {
  std::string s = id;
  for (char& c : s)
    if (c == '/' || c == '\\') c = '_';
  return s;
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_filename(out.stem().string() + suffix + out.extension().string());
  return p;
}

void flush_warnings(const Diagnostics& diag) {
  for (const auto& w : diag.warnings) std::cerr << "warning: " << w << '\n';
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

OverlapGraph scored_graph(const std::vector<RescaledBlock>& blocks, const EmbedSpec& spec, Index threshold,
                          EmbeddingCache& cache, Diagnostics& diag) {
  std::vector<ResidualScore> scores;
  for (const auto& b : blocks) scores.push_back(residual_score(cache.get(b, spec, &diag)));
  return build_graph(blocks, scores, threshold);
}

std::string ci_long_format(const RecoveredBlock& r) {
  std::ostringstream out;
  out << "row,col,estimate,stderr,lower,upper\n";
  for (Index i = 0; i < r.estimate.rows(); ++i)
    for (Index j = 0; j < r.estimate.cols(); ++j)
      out << r.row_entities[static_cast<std::size_t>(i)] << ',' << r.col_entities[static_cast<std::size_t>(j)]
          << ',' << csv::format_double(r.estimate(i, j)) << ',' << csv::format_double((*r.std_error)(i, j)) << ','
          << csv::format_double((*r.ci_lower)(i, j)) << ',' << csv::format_double((*r.ci_upper)(i, j)) << '\n';
  return out.str();
}

void integrate_chain(const Options& o, const std::vector<ObservedBlock>& all, const std::vector<std::string>& ids) {
  const auto start = std::chrono::steady_clock::now();
  const EmbedSpec spec = embed_spec(o);
  if (o.ci && spec.mode != EmbedMode::psd) throw UsageError("--ci is available with --mode psd only");
  if (o.ci && !(*o.ci > 0.0 && *o.ci < 1.0)) throw UsageError("--ci ALPHA must lie in (0, 1)");
  std::vector<RescaledBlock> chain;
  for (const auto& id : ids) chain.push_back(rescale(find_block(all, id)));
  Diagnostics diag;
  ChainEstimate est = cmmi_chain(chain, spec, nullptr, &diag);
  if (o.ci) attach_inference(est, chain.front(), chain.back(), *o.ci, &diag);

  const auto& r = est.block;
  const fs::path out = o.out;
  csv::write_atomic(out, csv::format_labeled(r.estimate, r.row_entities.ids(), r.col_entities.ids()));
  if (o.ci) {
    csv::write_atomic(sibling(out, "_stderr"),
                      csv::format_labeled(*r.std_error, r.row_entities.ids(), r.col_entities.ids()));
    csv::write_atomic(sibling(out, "_ci"), ci_long_format(r));
  }
  flush_warnings(diag);
  std::cout << "chain ";
  for (std::size_t k = 0; k < ids.size(); ++k) std::cout << (k ? ">" : "") << ids[k];
  std::cout << " overlaps ";
  for (std::size_t k = 0; k < est.links.size(); ++k) std::cout << (k ? "," : "") << est.links[k].overlap_size;
  if (est.links.empty()) std::cout << '-';
  std::cout << " wall_ms " << static_cast<long long>(elapsed_ms(start)) << '\n';
}

int cmd_embed(const Options& o) {
  const auto blocks = load(o);
  const EmbedSpec spec = embed_spec(o);
  if (o.out.empty()) throw UsageError("--out DIR is required");
  std::vector<std::string> ids;
  if (o.chain.empty())
    for (const auto& b : blocks) ids.push_back(b.block_id);
  else
    ids = split_list(o.chain, "--chain");
  Diagnostics diag;
  std::vector<std::pair<std::string, std::string>> files;
  std::ostringstream scores;
  scores << "block_id,c\n";
  for (const auto& id : ids) {
    const Embedding e = embed(rescale(find_block(blocks, id)), spec, &diag);
    files.emplace_back(file_stem_for(id) + ".csv", format_embedding(e));
    scores << id << ',' << csv::format_double(residual_score(e).c) << '\n';
  }
  fs::create_directories(o.out);
  for (const auto& [name, content] : files) csv::write_atomic(fs::path(o.out) / name, content);
  csv::write_atomic(fs::path(o.out) / "scores.csv", scores.str());
  flush_warnings(diag);
  std::cout << "embedded " << ids.size() << " blocks in mode " << to_string(spec.mode) << " at rank " << spec.d()
            << '\n';
  return 0;
}

int cmd_integrate(const Options& o) {
  const auto blocks = load(o);
  if (o.chain.empty()) throw UsageError("--chain is required");
  if (o.out.empty()) throw UsageError("--out is required");
  integrate_chain(o, blocks, split_list(o.chain, "--chain"));
  return 0;
}

Index graph_threshold(const Options& o, const EmbedSpec& spec) {
  const Index r = o.threshold ? *o.threshold : spec.d();
  if (r < 1) throw UsageError("--threshold must be positive");
  return r;
}

int cmd_recoverable(const Options& o) {
  const auto blocks = load(o);
  if (o.out.empty()) throw UsageError("--out is required");
  Index threshold = 0;
  if (o.threshold) threshold = *o.threshold;
  else if (o.rank) threshold = *o.rank;
  else if (!o.signature.empty()) threshold = embed_spec(o).d();
  else throw UsageError("--threshold R or a rank is required");
  if (threshold < 1) throw UsageError("--threshold must be positive");
  const OverlapGraph g = build_graph(blocks, {}, threshold);
  const auto mask = recoverability(g);
  std::map<Index, std::vector<Index>> per_entity;
  for (std::size_t c = 0; c < mask.components.size(); ++c) {
    const auto ents = set_union(mask.components[c].row_entities, mask.components[c].col_entities);
    for (Index id : ents.ids()) per_entity[id].push_back(static_cast<Index>(c));
  }
  std::ostringstream out;
  out << "entity,component\n";
  for (const auto& [id, comps] : per_entity)
    for (Index c : comps) out << id << ',' << c << '\n';
  csv::write_atomic(o.out, out.str());
  std::cout << mask.components.size() << " components over " << per_entity.size() << " entities\n";
  return 0;
}

int cmd_chain(const Options& o) {
  const auto blocks = load(o);
  const EmbedSpec spec = embed_spec(o);
  if (o.entry.empty()) throw UsageError("--entry S,T is required");
  const auto parts = split_list(o.entry, "--entry");
  if (parts.size() != 2) throw UsageError("--entry expects S,T");
  const Index s = parse_index(parts[0], "--entry"), t = parse_index(parts[1], "--entry");
  if (o.recover && o.out.empty()) throw UsageError("--recover needs --out");
  const auto rescaled = rescale_all(blocks);
  EmbeddingCache cache;
  Diagnostics diag;
  const OverlapGraph g = scored_graph(rescaled, spec, graph_threshold(o, spec), cache, diag);
  std::vector<Index> path;
  try {
    path = select_chain_vertices(g, s, t);
  } catch (const DataError& e) {
    std::ostringstream msg;
    msg << e.what() << "; components:";
    const auto mask = recoverability(g);
    for (std::size_t c = 0; c < mask.components.size(); ++c) {
      msg << (c ? " |" : "") << ' ';
      for (std::size_t k = 0; k < mask.components[c].vertices.size(); ++k)
        msg << (k ? "," : "") << g.vertices[static_cast<std::size_t>(mask.components[c].vertices[k])].block_id;
    }
    throw DataError(msg.str());
  }
  flush_warnings(diag);
  std::vector<std::string> ids;
  for (Index v : path) {
    const auto& vx = g.vertices[static_cast<std::size_t>(v)];
    ids.push_back(vx.block_id);
    std::cout << vx.block_id << ' ' << csv::format_double(vx.c) << '\n';
  }
  if (o.recover) integrate_chain(o, blocks, ids);
  return 0;
}

int cmd_holistic(const Options& o) {
  const auto blocks = load(o);
  const EmbedSpec spec = embed_spec(o);
  if (o.out.empty()) throw UsageError("--out is required");
  const auto rescaled = rescale_all(blocks);
  EmbeddingCache cache;
  Diagnostics diag;
  const OverlapGraph g = scored_graph(rescaled, spec, graph_threshold(o, spec), cache, diag);
  const HolisticResult h = holistic_recover(g, rescaled, spec, &diag);
  csv::write_atomic(o.out, csv::format_labeled(h.estimate, h.row_entities.ids(), h.col_entities.ids(),
                                               &h.recoverable));
  flush_warnings(diag);
  std::cout << "holistic " << h.row_entities.size() << "x" << h.col_entities.size() << " from " << g.size()
            << " blocks in " << h.roots.size() << " components\n";
  return 0;
}

int cmd_aggregate(const Options& o) {
  const auto blocks = load(o);
  if (!o.rank) throw UsageError("--rank D is required");
  if (*o.rank < 1) throw UsageError("--rank must be positive");
  if (o.out.empty()) throw UsageError("--out DIR is required");
  const auto fused = aggregate(blocks, *o.rank);
  nlohmann::ordered_json manifest;
  manifest["blocks"] = nlohmann::ordered_json::array();
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& b : fused) {
    nlohmann::ordered_json entry;
    entry["id"] = b.block_id;
    entry["rows"] = b.row_entities.ids();
    if (!b.symmetric) entry["cols"] = b.col_entities.ids();
    const std::string name = file_stem_for(b.block_id) + ".csv";
    entry["values"] = name;
    entry["q"] = *b.q;
    manifest["blocks"].push_back(entry);
    files.emplace_back(name, csv::format_matrix(b.values, &b.mask));
  }
  fs::create_directories(o.out);
  for (const auto& [name, content] : files) csv::write_atomic(fs::path(o.out) / name, content);
  csv::write_atomic(fs::path(o.out) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "aggregated " << fused.size() << " blocks into " << (fs::path(o.out) / "manifest.json").string()
            << '\n';
  return 0;
}

int cmd_simulate(const Options& o) {
  if (!o.seed) throw UsageError("simulate requires --seed");
  if (o.config.empty()) throw UsageError("--config is required");
  if (o.out.empty()) throw UsageError("--out is required");
  auto sweep = sim::load_sweep_config(o.config);
  sweep.base.seed = *o.seed;
  sweep.base.timing = o.timing;
  if (o.threads != 1) sweep.base.threads = o.threads;
  std::string rows;
  for (const auto& point : sweep.points()) {
    const auto result = sim::run_experiment(point);
    rows += sim::format_results_rows(result);
    std::cout << "N=" << point.n_total << " L=" << point.chain_length << " sigma=" << point.sigma
              << " n=" << point.n_block() << " median_max_err=" << csv::format_double(result.median(&sim::ReplicateMetrics::max_err))
              << " failures=" << result.failures() << '\n';
  }
  csv::write_atomic(o.out, sim::results_csv_header() + rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recovery of unobserved blocks of a low-rank matrix from overlapping observed blocks"};
  app.require_subcommand(1);
  Options o;

  auto add_manifest = [&](CLI::App* c) { c->add_option("--manifest", o.manifest, "JSON block manifest")->required(); };
  auto add_model = [&](CLI::App* c) {
    auto* rank = c->add_option("--rank", o.rank, "Embedding rank D (psd, asym)");
    auto* sig = c->add_option("--signature", o.signature, "Signature D+,D- (indef)");
    rank->excludes(sig);
    c->add_option("--mode", o.mode, "Embedding mode")->check(CLI::IsMember({"psd", "indef", "asym"}));
  };
  auto add_out = [&](CLI::App* c, const std::string& what) { c->add_option("--out", o.out, what)->required(); };

  auto* embed_cmd = app.add_subcommand("embed", "Spectral embedding of every block");
  add_manifest(embed_cmd);
  add_model(embed_cmd);
  embed_cmd->add_option("--chain", o.chain, "Comma-separated subset of block ids");
  add_out(embed_cmd, "Output directory");

  auto* integrate_cmd = app.add_subcommand("integrate", "Recover the block between the ends of a chain");
  add_manifest(integrate_cmd);
  add_model(integrate_cmd);
  integrate_cmd->add_option("--chain", o.chain, "Comma-separated block ids i0,...,iL")->required();
  integrate_cmd->add_option("--ci", o.ci, "Write standard errors and (1-ALPHA) confidence intervals");
  add_out(integrate_cmd, "Recovered block CSV");

  auto* recoverable_cmd = app.add_subcommand("recoverable", "Connected components of the overlap graph");
  add_manifest(recoverable_cmd);
  add_model(recoverable_cmd);
  recoverable_cmd->add_option("--threshold", o.threshold, "Minimum overlap for an edge (default: rank)");
  add_out(recoverable_cmd, "Component CSV");

  auto* chain_cmd = app.add_subcommand("chain", "Choose a chain for entry S,T");
  add_manifest(chain_cmd);
  add_model(chain_cmd);
  chain_cmd->add_option("--entry", o.entry, "Target entry S,T")->required();
  chain_cmd->add_option("--threshold", o.threshold, "Minimum overlap for an edge (default: rank)");
  chain_cmd->add_flag("--recover", o.recover, "Also run integrate on the chosen chain");
  chain_cmd->add_option("--ci", o.ci, "With --recover: standard errors and intervals");
  chain_cmd->add_option("--out", o.out, "With --recover: recovered block CSV");

  auto* holistic_cmd = app.add_subcommand("holistic", "Whole-matrix recovery along a minimum spanning tree");
  add_manifest(holistic_cmd);
  add_model(holistic_cmd);
  holistic_cmd->add_option("--threshold", o.threshold, "Minimum overlap for an edge (default: rank)");
  add_out(holistic_cmd, "Full-matrix CSV");

  auto* aggregate_cmd = app.add_subcommand("aggregate", "Inverse-variance fusion of repeated observations");
  add_manifest(aggregate_cmd);
  aggregate_cmd->add_option("--rank", o.rank, "Rank used for noise estimation")->required();
  add_out(aggregate_cmd, "Output directory for the fused manifest and CSVs");

  auto* simulate_cmd = app.add_subcommand("simulate", "Monte-Carlo experiments from a JSON config");
  simulate_cmd->add_option("--config", o.config, "Simulation config JSON")->required();
  simulate_cmd->add_option("--seed", o.seed, "64-bit seed")->required();
  simulate_cmd->add_option("--threads", o.threads, "Worker threads (0: all cores)");
  simulate_cmd->add_flag("--timing", o.timing, "Record wall_ms per replicate");
  add_out(simulate_cmd, "Results CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*embed_cmd) return cmd_embed(o);
    if (*integrate_cmd) return cmd_integrate(o);
    if (*recoverable_cmd) return cmd_recoverable(o);
    if (*chain_cmd) return cmd_chain(o);
    if (*holistic_cmd) return cmd_holistic(o);
    if (*aggregate_cmd) return cmd_aggregate(o);
    if (*simulate_cmd) return cmd_simulate(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  }
  return static_cast<int>(ErrorKind::usage);
}
