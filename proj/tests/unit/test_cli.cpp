#include <gtest/gtest.h>

#include "cmmi/random.hpp"
#include "cmmi/sim_harness.hpp"
#include "support/cli_fixtures.hpp"
#include "support/tempdir.hpp"

using namespace cmmi;
using fixture::run_cli;

namespace {

const std::string kCli = CMMI_CLI_PATH;

/// Rank-2 psd truth over `n` entities.
Matrix truth_matrix(Index n, std::uint64_t seed) {
  CounterRng rng(seed);
  const Matrix x = rng.gaussian_matrix(n, 2) * 2.0;
  return x * x.transpose();
}

ObservedBlock window(const Matrix& p, std::string id, Index first, Index size) {
  return make_observed_block(std::move(id), EntityIndexSet::range(first, size), p.block(first, first, size, size));
}

/// Noiseless chain B0 = [0,6), B1 = [4,10), B2 = [8,14) plus a detached
/// block D = [20,26).
std::filesystem::path chain_fixture(const TempDir& dir, Matrix* truth = nullptr) {
  const Matrix p = truth_matrix(26, 5);
  if (truth) *truth = p;
  return fixture::write_manifest(dir / "in", {window(p, "B0", 0, 6), window(p, "B1", 4, 6), window(p, "B2", 8, 6),
                                               window(p, "D", 20, 6)});
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, HelpExitsZero) {
  TempDir dir;
  const auto r = run_cli(kCli, "--help", dir.path());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("integrate"), std::string::npos);
}

TEST(Cli, UnknownFlagIsAUsageErrorAndWritesNothing) {
  TempDir dir;
  const auto m = chain_fixture(dir);
  const auto out = dir / "rec.csv";
  const auto r = run_cli(kCli, "integrate --manifest " + q(m) + " --chain B0,B1 --rank 2 --out " + q(out) + " --bogus",
                         dir / "run");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_FALSE(std::filesystem::exists(out));
}

TEST(Cli, MissingRankIsAUsageError) {
  TempDir dir;
  const auto m = chain_fixture(dir);
  const auto r = run_cli(kCli, "integrate --manifest " + q(m) + " --chain B0,B1 --out " + q(dir / "x.csv"), dir / "run");
  EXPECT_EQ(r.exit_code, 1);
}

TEST(Cli, IntegrateRecoversTheNoiselessBlock) {
  TempDir dir;
  Matrix p;
  const auto m = chain_fixture(dir, &p);
  const auto out = dir / "rec.csv";
  const auto r = run_cli(kCli, "integrate --manifest " + q(m) + " --chain B0,B1,B2 --rank 2 --out " + q(out), dir / "run");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("chain B0>B1>B2 overlaps 2,2"), std::string::npos) << r.out;
  const auto t = fixture::read_labeled(out);
  ASSERT_EQ(t.rows.size(), 6u);
  EXPECT_EQ(t.rows.front(), 0);
  EXPECT_EQ(t.cols.front(), 8);
  EXPECT_LT(max_abs(t.values - p.block(0, 8, 6, 6)), 1e-8 * p.cwiseAbs().maxCoeff());
}

TEST(Cli, MissingBlockIdIsADataError) {
  TempDir dir;
  const auto m = chain_fixture(dir);
  const auto r = run_cli(kCli, "integrate --manifest " + q(m) + " --chain B0,ZZ --rank 2 --out " + q(dir / "x.csv"),
                         dir / "run");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("ZZ"), std::string::npos);
}

TEST(Cli, RankDeficientOverlapIsANumericalFailure) {
  TempDir dir;
  // The two shared entities have proportional latent positions, so the
  // overlap cannot span the rank-2 latent space.
  CounterRng rng(6);
  Matrix x = rng.gaussian_matrix(10, 2);
  x.row(5) = 2.0 * x.row(4);
  const Matrix p = x * x.transpose();
  const auto m = fixture::write_manifest(dir / "in", {window(p, "A", 0, 6), window(p, "B", 4, 6)});
  const auto r = run_cli(kCli, "integrate --manifest " + q(m) + " --chain A,B --rank 2 --out " + q(dir / "x.csv"),
                         dir / "run");
  EXPECT_EQ(r.exit_code, 3) << r.err;
}

TEST(Cli, ConfidenceIntervalFiles) {
  TempDir dir;
  sim::SimConfig c;
  c.n_total = 300;
  c.sigma = 0.5;
  c.q = 0.8;
  c.seed = 3;
  const auto data = sim::draw_replicate(c, 0);
  const auto m = fixture::write_manifest(dir / "in", data.observed);
  const auto out = dir / "rec.csv";
  const auto r = run_cli(kCli, "integrate --manifest " + q(m) + " --chain B0,B1,B2 --rank 3 --ci 0.05 --out " + q(out),
                         dir / "run");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  ASSERT_TRUE(std::filesystem::exists(dir / "rec_stderr.csv"));
  ASSERT_TRUE(std::filesystem::exists(dir / "rec_ci.csv"));
  const auto se = fixture::read_labeled(dir / "rec_stderr.csv");
  const auto est = fixture::read_labeled(out);
  EXPECT_TRUE((se.values.array() > 0).all());

  std::istringstream ci(fixture::slurp(dir / "rec_ci.csv"));
  std::string line;
  std::getline(ci, line);
  EXPECT_EQ(line, "row,col,estimate,stderr,lower,upper");
  std::size_t count = 0;
  while (std::getline(ci, line)) {
    std::vector<double> v;
    for (auto tok : csv::split(line, ',')) v.push_back(std::stod(std::string(tok)));
    const auto i = static_cast<Index>(count) / est.values.cols(), j = static_cast<Index>(count) % est.values.cols();
    EXPECT_EQ(static_cast<Index>(v[0]), est.rows[static_cast<std::size_t>(i)]);
    EXPECT_EQ(static_cast<Index>(v[1]), est.cols[static_cast<std::size_t>(j)]);
    EXPECT_DOUBLE_EQ(v[2], est.values(i, j));
    EXPECT_DOUBLE_EQ(v[3], se.values(i, j));
    EXPECT_NEAR(v[5] - v[4], 2 * 1.959963984540054 * v[3], 1e-9 * (1 + v[3]));
    ++count;
  }
  EXPECT_EQ(count, static_cast<std::size_t>(est.values.size()));
}

TEST(Cli, CiRequiresPsdMode) {
  TempDir dir;
  const auto m = chain_fixture(dir);
  const auto r = run_cli(kCli,
                         "integrate --manifest " + q(m) + " --chain B0,B1 --mode asym --rank 2 --ci 0.05 --out " +
                             q(dir / "x.csv"),
                         dir / "run");
  EXPECT_EQ(r.exit_code, 1);
}

TEST(Cli, EmbedWritesOneFilePerBlockAndScores) {
  TempDir dir;
  const auto m = chain_fixture(dir);
  const auto r = run_cli(kCli, "embed --manifest " + q(m) + " --rank 2 --out " + q(dir / "emb"), dir / "run");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  for (const char* id : {"B0", "B1", "B2", "D"}) EXPECT_TRUE(std::filesystem::exists(dir / "emb" / (std::string(id) + ".csv")));
  const auto scores = fixture::slurp(dir / "emb" / "scores.csv");
  EXPECT_EQ(scores.rfind("block_id,c\n", 0), 0u);
}

TEST(Cli, RecoverableListsComponents) {
  TempDir dir;
  const auto m = chain_fixture(dir);
  const auto out = dir / "comp.csv";
  const auto r = run_cli(kCli, "recoverable --manifest " + q(m) + " --threshold 2 --out " + q(out), dir / "run");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::istringstream in(fixture::slurp(out));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "entity,component");
  std::map<Index, Index> comp;
  while (std::getline(in, line)) {
    const auto parts = csv::split(line, ',');
    comp[std::stoll(std::string(parts[0]))] = std::stoll(std::string(parts[1]));
  }
  EXPECT_EQ(comp.size(), 20u);
  EXPECT_EQ(comp[0], comp[13]);
  EXPECT_NE(comp[0], comp[20]);
  EXPECT_EQ(comp[20], comp[25]);
  // A higher threshold splits the chain.
  const auto r3 = run_cli(kCli, "recoverable --manifest " + q(m) + " --threshold 3 --out " + q(out), dir / "run");
  ASSERT_EQ(r3.exit_code, 0);
  EXPECT_EQ(r3.out.rfind("4 components", 0), 0u) << r3.out;
}

TEST(Cli, ChainPrintsThePathAndRecovers) {
  TempDir dir;
  Matrix p;
  const auto m = chain_fixture(dir, &p);
  const auto out = dir / "rec.csv";
  const auto r =
      run_cli(kCli, "chain --manifest " + q(m) + " --rank 2 --entry 1,12 --recover --out " + q(out), dir / "run");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("B0 ", 0), 0u) << r.out;
  EXPECT_NE(r.out.find("\nB1 "), std::string::npos);
  EXPECT_NE(r.out.find("\nB2 "), std::string::npos);
  const auto t = fixture::read_labeled(out);
  EXPECT_LT(max_abs(t.values - p.block(0, 8, 6, 6)), 1e-8 * p.cwiseAbs().maxCoeff());
}

TEST(Cli, UnrecoverableEntryIsADataError) {
  TempDir dir;
  const auto m = chain_fixture(dir);
  const auto r = run_cli(kCli, "chain --manifest " + q(m) + " --rank 2 --entry 0,21", dir / "run");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("components"), std::string::npos) << r.err;
}

TEST(Cli, HolisticMatchesTheTruth) {
  TempDir dir;
  Matrix p;
  const auto m = chain_fixture(dir, &p);
  const auto out = dir / "full.csv";
  const auto r = run_cli(kCli, "holistic --manifest " + q(m) + " --rank 2 --out " + q(out), dir / "run");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto t = fixture::read_labeled(out);
  ASSERT_EQ(t.rows.size(), 20u);
  const double scale = p.cwiseAbs().maxCoeff();
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.cols.size(); ++j) {
      const bool same = (t.rows[i] < 20) == (t.cols[j] < 20);
      const auto ii = static_cast<Index>(i), jj = static_cast<Index>(j);
      ASSERT_EQ(static_cast<bool>(t.observed(ii, jj)), same) << t.rows[i] << "," << t.cols[j];
      if (same) EXPECT_NEAR(t.values(ii, jj), p(t.rows[i], t.cols[j]), 1e-8 * scale);
    }
}

TEST(Cli, AggregateWritesAReloadableManifest) {
  TempDir dir;
  const Matrix p = truth_matrix(10, 8);
  const auto m = fixture::write_manifest(dir / "in", {window(p, "A", 0, 6), window(p, "B", 4, 6)});
  const auto r = run_cli(kCli, "aggregate --manifest " + q(m) + " --rank 2 --out " + q(dir / "agg"), dir / "run");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto blocks = load_manifest(dir / "agg" / "manifest.json");
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[1].row_entities.ids().front(), 4);
  EXPECT_LT(max_abs(blocks[0].values - p.topLeftCorner(6, 6)), 1e-9 * p.cwiseAbs().maxCoeff());
}

TEST(Cli, SimulateIsByteIdenticalForAFixedSeed) {
  TempDir dir;
  const auto cfg = dir.write("cfg.json", R"({"N":300,"sigma":[0.1,0.5],"replicates":3})");
  const auto a = dir / "a.csv", b = dir / "b.csv", c = dir / "c.csv";
  ASSERT_EQ(run_cli(kCli, "simulate --config " + q(cfg) + " --seed 9 --out " + q(a), dir / "r1").exit_code, 0);
  ASSERT_EQ(run_cli(kCli, "simulate --config " + q(cfg) + " --seed 9 --threads 2 --out " + q(b), dir / "r2").exit_code,
            0);
  ASSERT_EQ(run_cli(kCli, "simulate --config " + q(cfg) + " --seed 10 --out " + q(c), dir / "r3").exit_code, 0);
  const auto ta = fixture::slurp(a);
  EXPECT_EQ(ta, fixture::slurp(b));
  EXPECT_NE(ta, fixture::slurp(c));
  EXPECT_EQ(ta.rfind(sim::results_csv_header(), 0), 0u);
  EXPECT_EQ(std::count(ta.begin(), ta.end(), '\n'), 7);
}

TEST(Cli, SimulateRequiresASeed) {
  TempDir dir;
  const auto cfg = dir.write("cfg.json", R"({"N":300})");
  EXPECT_EQ(run_cli(kCli, "simulate --config " + q(cfg) + " --out " + q(dir / "a.csv"), dir / "r").exit_code, 1);
  const auto bad = dir.write("bad.json", R"({"N":300,"colour":1})");
  EXPECT_EQ(run_cli(kCli, "simulate --config " + q(bad) + " --seed 1 --out " + q(dir / "a.csv"), dir / "r").exit_code,
            2);
}
