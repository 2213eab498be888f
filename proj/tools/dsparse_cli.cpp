#include "dsparse/dsparse.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

namespace {

using namespace dsparse;

enum Exit { kOk = 0, kFailure = 1, kConfigError = 2, kNumericalError = 3 };

struct Common {
  std::string config;
  std::string preset;
  std::uint64_t seed = 0;
  int mc_runs = 0;
  std::string out;
  std::string variant;
  int threads = -1;
  long horizon = 0;
};

void add_common(CLI::App* cmd, Common& c, bool with_variant = true) {
  cmd->add_option("--config", c.config, "config file (key = value lines)");
  cmd->add_option("--preset", c.preset, "built-in experiment preset");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--mc-runs", c.mc_runs, "Monte-Carlo runs");
  cmd->add_option("--out", c.out, "output directory");
  if (with_variant) cmd->add_option("--variant", c.variant, "algorithm variant");
  cmd->add_option("--threads", c.threads, "worker threads (0: all cores)");
  cmd->add_option("--horizon", c.horizon, "online horizon");
}

ExperimentConfig load_config(const Common& c) {
  KeyValues kv;
  if (!c.preset.empty() && !c.config.empty()) throw ConfigError("give either --preset or --config, not both");
  if (!c.preset.empty()) {
    kv = preset_keys(c.preset);
  } else if (!c.config.empty()) {
    kv = KeyValues::load(c.config);
  } else {
    throw ConfigError("need --preset or --config");
  }
  if (c.seed) kv.set("seed", std::to_string(c.seed));
  if (c.mc_runs) kv.set("mc_runs", std::to_string(c.mc_runs));
  if (!c.out.empty()) kv.set("output_dir", c.out);
  if (!c.variant.empty()) kv.set("variant", c.variant);
  if (c.threads >= 0) kv.set("threads", std::to_string(c.threads));
  if (c.horizon) kv.set("horizon", std::to_string(c.horizon));
  ExperimentConfig cfg;
  cfg.read(kv);
  return cfg;
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  auto res = run_experiment(cfg);
  const std::string label = cfg.name + ":" + cfg.variant();
  const auto files = emit_outputs({res.trace}, {label}, {cfg.text()}, cfg.output_dir);
  std::cout << label << " runs=" << res.trace.runs << " final_msd=" << format_real(res.trace.final_window_mean())
            << " (" << format_db(res.trace.final_window_mean()) << " dB)\n"
            << "wrote " << (std::filesystem::path(cfg.output_dir) / files[0]).string() << "\n";
  return kOk;
}

int cmd_compare(const Common& c, const std::vector<std::string>& variants) {
  const ExperimentConfig base = load_config(c);
  std::vector<ExperimentConfig> cfgs;
  if (variants.empty()) {
    cfgs.push_back(base);
  }
  for (const auto& v : variants) {
    ExperimentConfig cfg = base;
    cfg.set_variant(v);
    cfg.finalize();
    cfgs.push_back(cfg);
  }
  const Comparison cmp = compare_variants(cfgs);
  std::vector<std::string> texts;
  for (const auto& cfg : cfgs) texts.push_back(cfg.text());
  emit_outputs(cmp.traces, cmp.labels, texts, base.output_dir);
  const auto table = std::filesystem::path(base.output_dir) / "comparison.csv";
  std::ofstream os(table);
  if (!os) throw std::runtime_error("cannot write '" + table.string() + "'");
  write_comparison_table(os, cmp);
  write_comparison_table(std::cout, cmp);
  return kOk;
}

int cmd_verify(std::uint64_t seed, bool disconnected, int runs, bool strict) {
  TheoryOptions opt;
  opt.seed = seed ? seed : 1;
  opt.disconnected = disconnected;
  opt.theorem2_runs = runs;
  const TheoryReport rep = verify_theory(opt);
  rep.write(std::cout);
  return strict && !rep.all_passed() ? kFailure : kOk;
}

int cmd_presets(const std::string& show) {
  if (!show.empty()) {
    std::cout << preset(show).text();
    return kOk;
  }
  for (const auto& [name, text] : preset_table()) {
    const ExperimentConfig cfg = preset(name);
    std::cout << name << "  " << to_string(cfg.algorithm) << "/" << cfg.variant() << "  m=" << cfg.scenario.m
              << " nodes=" << cfg.scenario.n_nodes << " s=" << cfg.scenario.s << "\n";
  }
  return kOk;
}

int cmd_dump(const Common& c, int run) {
  const ExperimentConfig cfg = load_config(c);
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const auto r = static_cast<std::uint64_t>(run);
  if (cfg.algorithm == Algorithm::kDihat) {
    const GroundTruth truth = scenario_truth(cfg.scenario, cfg.master_seed, r);
    dump_truth_csv(truth, (fs::path(cfg.output_dir) / "truth.csv").string());
    dump_batch_csv(gen_batch_data(truth, cfg.scenario.n_nodes, cfg.scenario.l, cfg.scenario.snr_db, cfg.master_seed, r),
                   (fs::path(cfg.output_dir) / "batch.csv").string());
  } else {
    const Schedule sched = scenario_schedule(cfg.scenario, cfg.master_seed, r);
    dump_truth_csv(sched.initial(), (fs::path(cfg.output_dir) / "truth.csv").string());
    for (std::size_t i = 0; i < sched.switches().size(); ++i) {
      dump_truth_csv(sched.switches()[i].truth,
                     (fs::path(cfg.output_dir) / ("truth_after_" + std::to_string(sched.switches()[i].after) + ".csv"))
                         .string());
    }
  }
  std::ofstream(fs::path(cfg.output_dir) / "scenario.cfg") << cfg.text();
  std::cout << "wrote " << cfg.output_dir << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed greedy sparse estimation simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dsparse::kVersion));

  Common run_opts, cmp_opts, dump_opts;
  auto* run = app.add_subcommand("run", "run one experiment and write its averaged MSD trace");
  add_common(run, run_opts);

  std::vector<std::string> variants;
  auto* compare = app.add_subcommand("compare", "run several variants on the same scenario");
  add_common(compare, cmp_opts);
  compare->add_option("--variants", variants, "variants to compare")->delimiter(',');

  std::uint64_t verify_seed = 1;
  bool disconnected = false;
  bool strict = false;
  int verify_runs = 100;
  auto* verify = app.add_subcommand("verify", "small-instance checks of the convergence results");
  verify->add_option("--seed", verify_seed, "master seed");
  verify->add_flag("--disconnected", disconnected, "use a disconnected graph for the consensus check");
  verify->add_option("--mc-runs", verify_runs, "runs for the unbiasedness check");
  verify->add_flag("--strict", strict, "exit 1 when a check fails");

  std::string show;
  auto* presets = app.add_subcommand("presets", "list built-in experiment presets");
  presets->add_option("--show", show, "print one preset's full config");

  int dump_run = 0;
  auto* dump = app.add_subcommand("dump", "write one run's generated data as CSV");
  add_common(dump, dump_opts);
  dump->add_option("--run", dump_run, "Monte-Carlo run index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*compare) return cmd_compare(cmp_opts, variants);
    if (*verify) return cmd_verify(verify_seed, disconnected, verify_runs, strict);
    if (*presets) return cmd_presets(show);
    if (*dump) return cmd_dump(dump_opts, dump_run);
  } catch (const dsparse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const dsparse::TopologyError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const dsparse::RunFailure& e) {
    std::cerr << e.what() << "\n";
    return e.numerical_failure ? kNumericalError : kFailure;
  } catch (const dsparse::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
