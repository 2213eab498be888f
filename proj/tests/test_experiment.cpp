#include "dsparse/experiment.hpp"
#include "dsparse/theory.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace dsparse;

namespace {

ExperimentConfig tiny(bool online) {
  ExperimentConfig cfg;
  cfg.name = "tiny";
  cfg.mc_runs = 3;
  cfg.threads = 1;
  cfg.scenario.m = 16;
  cfg.scenario.l = 10;
  cfg.scenario.n_nodes = 4;
  cfg.scenario.s = 2;
  cfg.scenario.topology.kind = TopologyKind::kRing;
  if (online) {
    cfg.algorithm = Algorithm::kGreedi;
    cfg.horizon = 40;
  } else {
    cfg.dihat.max_iters = 6;
    cfg.dihat.rel_change_tol = 0.0;
  }
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(DSPARSE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(ExperimentConfig, ParsesKeys) {
  ExperimentConfig cfg;
  cfg.read(KeyValues::parse("algorithm = greedi\nvariant = centralized\nm = 30\nnodes = 3\ns = 4\nmu = 0.1,0.2,0.3\n"
                            "zeta = 0.95\nhorizon = 50\nstep_schedule = adaptive\n"));
  EXPECT_EQ(cfg.algorithm, Algorithm::kGreedi);
  EXPECT_TRUE(cfg.centralized);
  EXPECT_EQ(cfg.variant(), "centralized");
  EXPECT_FALSE(cfg.auto_mu);
  ASSERT_EQ(cfg.greedi.mu.size(), 3u);
  EXPECT_DOUBLE_EQ(cfg.greedi.mu[2], 0.3);
  EXPECT_EQ(cfg.greedi.step_schedule, StepSchedule::kLemma1);
  EXPECT_EQ(cfg.greedi.s, 4);
}

TEST(ExperimentConfig, RejectsUnknownAndInvalid) {
  ExperimentConfig cfg;
  EXPECT_THROW(cfg.read(KeyValues::parse("bogus_key = 1\n")), ConfigError);
  EXPECT_THROW(cfg.read(KeyValues::parse("algorithm = greedi\nnodes = 3\nmu = 0.1,0.2\n")), ConfigError);
  EXPECT_THROW(cfg.read(KeyValues::parse("weights = random\n")), ConfigError);
  EXPECT_THROW(cfg.read(KeyValues::parse("m = 5\ns = 6\n")), ConfigError);
}

TEST(ExperimentConfig, TextRoundTripKeepsHash) {
  ExperimentConfig a = preset("exp7-tracking");
  ExperimentConfig b;
  b.read(KeyValues::parse(a.text()));
  EXPECT_EQ(a.text(), b.text());
  EXPECT_EQ(a.hash(), b.hash());
  b.master_seed = 2;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Presets, AllLoad) {
  for (const auto& [name, text] : preset_table()) {
    EXPECT_NO_THROW(preset(name)) << name;
  }
  EXPECT_EQ(preset("exp2").scenario.s, 20);
  EXPECT_EQ(preset("exp5-small-l").scenario.l, 15);
  EXPECT_EQ(preset("exp8-light").variant(), "light");
  EXPECT_THROW(preset("exp42"), ConfigError);
}

TEST(RunExperiment, SingleRunMatchesRunSingle) {
  for (bool online : {false, true}) {
    ExperimentConfig cfg = tiny(online);
    cfg.mc_runs = 1;
    const auto res = run_experiment(cfg);
    cfg.finalize();
    const auto art = run_single(cfg, make_topology(cfg.scenario.topology, cfg.scenario.n_nodes, cfg.master_seed), 0);
    EXPECT_EQ(res.trace.msd, art.trace.msd);
    EXPECT_EQ(res.trace.runs, 1);
  }
}

TEST(RunExperiment, SeedChangesTraceNotLength) {
  ExperimentConfig cfg = tiny(false);
  const auto a = run_experiment(cfg);
  cfg.master_seed = 99;
  const auto b = run_experiment(cfg);
  EXPECT_EQ(a.trace.size(), b.trace.size());
  EXPECT_NE(a.trace.msd, b.trace.msd);
}

TEST(RunExperiment, ThreadCountDoesNotChangeResult) {
  ExperimentConfig cfg = tiny(true);
  cfg.mc_runs = 5;
  const auto a = run_experiment(cfg);
  cfg.threads = 3;
  const auto b = run_experiment(cfg);
  EXPECT_EQ(a.trace.msd, b.trace.msd);
}

TEST(RunExperiment, AveragingIsAssociative) {
  ExperimentConfig cfg = tiny(true);
  cfg.mc_runs = 6;
  const auto res = run_experiment(cfg, RunOptions{true});
  std::vector<const RunTrace*> first, second, all;
  for (std::size_t r = 0; r < res.runs.size(); ++r) {
    (r < 2 ? first : second).push_back(&res.runs[r].trace);
    all.push_back(&res.runs[r].trace);
  }
  const MsdTrace merged = merge_averages(average_traces(first), average_traces(second));
  const MsdTrace direct = average_traces(all);
  ASSERT_EQ(merged.size(), direct.size());
  EXPECT_EQ(merged.runs, 6);
  for (std::size_t i = 0; i < direct.size(); ++i) {
    EXPECT_NEAR(merged.msd[i], direct.msd[i], 1e-12 * std::max(1.0, direct.msd[i]));
  }
  EXPECT_EQ(direct.msd, res.trace.msd);
}

TEST(RunExperiment, SlimRunsKeepSupportTime) {
  const auto res = run_experiment(tiny(true));
  for (const auto& r : res.runs) {
    EXPECT_TRUE(r.trace.msd.empty());
    EXPECT_EQ(r.estimates.size(), 4u);
  }
}

TEST(MsdTrace, Windows) {
  MsdTrace t;
  t.msd = {4, 3, 2, 1, 1, 1, 1, 1, 1, 0};
  EXPECT_DOUBLE_EQ(t.final_window_mean(0.1), 0.0);
  EXPECT_DOUBLE_EQ(t.final_window_mean(0.2), 0.5);
  EXPECT_DOUBLE_EQ(t.window_mean(1, 2), 3.5);
  EXPECT_THROW((void)t.window_mean(0, 2), std::out_of_range);
  EXPECT_THROW((void)t.window_mean(3, 11), std::out_of_range);
}

TEST(Output, CsvShapeAndZeroGuard) {
  MsdTrace t;
  t.msd = {1.0, 0.1, 0.0};
  std::ostringstream os;
  write_trace_csv(os, t);
  const std::string csv = os.str();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,msd,msd_db");
  EXPECT_NE(csv.find("3,0,-inf"), std::string::npos);
  EXPECT_NE(csv.find("2,0.1,-10"), std::string::npos);
}

TEST(Output, EmitIsByteIdenticalOnRerun) {
  const auto dir = std::filesystem::path(testing::TempDir()) / "dsparse_emit";
  std::filesystem::remove_all(dir);
  ExperimentConfig cfg = tiny(false);
  std::string first_csv, first_meta;
  for (int pass = 0; pass < 2; ++pass) {
    const auto res = run_experiment(cfg);
    const auto files = emit_outputs({res.trace}, {"tiny:full"}, {cfg.text()}, dir.string());
    ASSERT_EQ(files.size(), 1u);
    EXPECT_EQ(files[0], "tiny_full.csv");
    const std::string csv = slurp(dir / files[0]);
    const std::string meta = slurp(dir / "tiny_full.meta");
    if (pass == 0) {
      first_csv = csv;
      first_meta = meta;
    } else {
      EXPECT_EQ(csv, first_csv);
      EXPECT_EQ(meta, first_meta);
    }
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "plot_msd.py"));
  EXPECT_NE(first_meta.find("master_seed = 1"), std::string::npos);
  EXPECT_NE(first_meta.find("rng = "), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Compare, IdenticalConfigsGiveIdenticalColumns) {
  const ExperimentConfig cfg = tiny(false);
  const auto c = compare_variants({cfg, cfg});
  ASSERT_EQ(c.traces.size(), 2u);
  EXPECT_EQ(c.traces[0].msd, c.traces[1].msd);
  EXPECT_EQ(c.final_means[0], c.final_means[1]);
  std::ostringstream os;
  write_comparison_table(os, c);
  EXPECT_EQ(os.str().substr(0, 27), "label,final_msd,final_msd_d");
}

TEST(Compare, MismatchedHorizonsRejected) {
  ExperimentConfig a = tiny(true), b = tiny(true);
  b.horizon = 41;
  EXPECT_THROW(compare_variants({a, b}), ConfigError);
  b = tiny(true);
  b.master_seed = 5;
  EXPECT_THROW(compare_variants({a, b}), ConfigError);
}

TEST(RunExperiment, FailureNamesRunAndSeed) {
  ExperimentConfig cfg = tiny(true);
  cfg.auto_mu = false;
  cfg.greedi.mu = {1e200};
  cfg.greedi.step_schedule = StepSchedule::kFixed;
  try {
    run_experiment(cfg);
    FAIL() << "diverging run should throw";
  } catch (const RunFailure& e) {
    EXPECT_EQ(e.run_index, 0);
    EXPECT_EQ(e.master_seed, 1u);
    EXPECT_TRUE(e.numerical_failure);
  }
}

TEST(Theory, DisconnectedNegativeControl) {
  const auto c = check_assumption1(build_metropolis(
      Topology(4, std::vector<Topology::Edge>{{0, 1}, {2, 3}}, Connectivity::kAllowDisconnected)));
  EXPECT_FALSE(c.passed);
  EXPECT_NE(c.detail.find("spectral_below_one"), std::string::npos);
}

TEST(Theory, UnbiasedFractionOracle) {
  Vector h = Vector::Zero(2);
  h[0] = 1.0;
  std::vector<RunArtifact> runs(4);
  const double off[] = {-0.1, 0.1, -0.05, 0.05};
  for (int r = 0; r < 4; ++r) {
    Vector e = h;
    e[0] += off[r];
    e[1] = 5.0 + off[r];  // biased coordinate
    runs[r].estimates = {e};
  }
  EXPECT_DOUBLE_EQ(unbiased_fraction(runs, h), 0.5);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("presets"), 0);
  EXPECT_EQ(cli("presets --show exp1"), 0);
  EXPECT_EQ(cli("run --preset nope"), 2);
  EXPECT_EQ(cli("--no-such-flag"), 2);
  const auto dir = std::filesystem::path(testing::TempDir()) / "dsparse_cli";
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "bad.cfg");
    os << "m = 10\nunknown_key = 3\n";
  }
  EXPECT_EQ(cli("run --config " + (dir / "bad.cfg").string()), 2);
  {
    std::ofstream os(dir / "ok.cfg");
    os << "name = cli\nm = 12\nl = 8\nnodes = 3\ns = 2\ntopology = path\nmax_iters = 3\nmc_runs = 2\n";
  }
  EXPECT_EQ(cli("run --config " + (dir / "ok.cfg").string() + " --out " + (dir / "out").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "cli_full.csv"));
  std::filesystem::remove_all(dir);
}
