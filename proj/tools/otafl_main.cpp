#include <cinttypes>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "otafl/config.hpp"
#include "otafl/theory.hpp"
#include "otafl/vec.hpp"

namespace {

otafl::engine::SimConfig assemble_config(const std::string& preset,
                                         const std::string& config_path,
                                         const std::vector<std::string>& sets,
                                         bool seed_given, std::uint64_t seed) {
  otafl::engine::SimConfig cfg = otafl::cli::default_config();
  if (!preset.empty()) {
    const auto* p = otafl::cli::find_preset(preset);
    if (p == nullptr) {
      throw std::runtime_error("unknown preset '" + preset +
                               "' (see `otafl presets`)");
    }
    cfg = p->config;
  }
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      throw std::runtime_error("unable to open config file " + config_path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    otafl::cli::apply_config_text(cfg, buf.str());
  }
  for (const std::string& entry : sets) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("--set expects key=value, got '" + entry + "'");
    }
    otafl::cli::apply_entry(cfg, entry.substr(0, eq), entry.substr(eq + 1));
  }
  if (seed_given) cfg.seed = seed;
  return cfg;
}

void print_round(const otafl::engine::RoundMetrics& m) {
  std::printf("round %d:", m.round);
  if (m.train_loss) std::printf(" train_loss=%.6f", *m.train_loss);
  if (m.test_loss) std::printf(" test_loss=%.6f", *m.test_loss);
  if (m.test_accuracy) std::printf(" test_acc=%.4f", *m.test_accuracy);
  if (m.dist_sq) std::printf(" dist_sq=%.6g", *m.dist_sq);
  if (m.skipped) std::printf(" (skipped)");
  std::printf("\n");
}

int cmd_run(const otafl::engine::SimConfig& cfg, const std::string& out_path) {
  otafl::cli::Experiment exp = otafl::cli::make_experiment(cfg);
  for (const std::string& note : exp.notices) {
    std::cerr << "note: " << note << "\n";
  }

  std::vector<double> bound;
  if (exp.problem->optimum() != nullptr) {
    bound = otafl::theory::run_bound(*exp.problem, exp.config);
  }

  otafl::engine::Simulation sim(exp.config, *exp.problem, exp.byzantine);
  const otafl::engine::RunResult result = sim.run();
  for (const auto& m : result.metrics) {
    if (m.train_loss || m.test_loss || m.dist_sq) print_round(m);
  }
  if (!out_path.empty()) {
    otafl::cli::emit_metrics(result.metrics, bound, out_path);
    std::printf("metrics written to %s\n", out_path.c_str());
  }
  std::printf("completed %d rounds (kernel backend: %s)\n", cfg.rounds,
              otafl::vec::backend_name(otafl::vec::active_backend()));
  return 0;
}

int cmd_presets() {
  for (const auto& p : otafl::cli::presets()) {
    std::printf("%-22s %s\n", p.name.c_str(), p.description.c_str());
  }
  return 0;
}

int cmd_validate(const std::string& preset, int seeds) {
  const auto* p = otafl::cli::find_preset(preset);
  if (p == nullptr) {
    throw std::runtime_error("unknown preset '" + preset + "'");
  }
  const std::size_t b_values[] = {0, 2, 4};
  const auto report = otafl::theory::validate_theorem(p->config, b_values, seeds);

  std::printf("constants: mu=%.4f L=%.4f delta2=%.4g kappa2=%.4g K2=%.4g\n",
              report.estimated.mu, report.estimated.L, report.estimated.delta2,
              report.estimated.kappa2, report.estimated.K2);
  std::printf("initial squared distance: %.4f\n", report.delta0);
  double max_ratio = 0.0;
  for (const auto& vc : report.cases) {
    std::printf("B=%zu: max dist/bound ratio %.4f, tail mean %.6g (%s)\n",
                vc.byzantine, vc.max_ratio, vc.tail_mean,
                vc.holds ? "within bound" : "BOUND VIOLATED");
    max_ratio = std::max(max_ratio, vc.max_ratio);
  }
  std::printf("error grows with attack size: %s\n",
              report.error_grows_with_attack ? "yes" : "NO");
  const bool pass = report.bound_holds && report.error_grows_with_attack;
  std::printf("%s (max violation ratio %.4f over %d seeds)\n",
              pass ? "PASS" : "FAIL", max_ratio, seeds);
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust over-the-air federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, preset, out_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path, "key=value config file");
  run->add_option("--preset", preset, "start from a named preset");
  CLI::Option* seed_opt =
      run->add_option("--seed", seed, "override the run seed");
  run->add_option("--set", sets, "override one key (repeatable)");
  run->add_option("--out", out_path, "write per-round metrics CSV here");

  app.add_subcommand("presets", "list the built-in experiment presets");

  std::string vt_preset = "theorem-validation";
  int vt_seeds = 50;
  CLI::App* vt = app.add_subcommand(
      "validate-theorem", "check the convergence bound on ridge regression");
  vt->add_option("--seeds", vt_seeds, "independent runs per attack size")
      ->check(CLI::PositiveNumber);
  vt->add_option("--preset", vt_preset, "ridge preset to validate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = assemble_config(preset, config_path, sets,
                                       seed_opt->count() > 0, seed);
      return cmd_run(cfg, out_path);
    }
    if (app.get_subcommand("presets")->parsed()) {
      return cmd_presets();
    }
    if (vt->parsed()) {
      return cmd_validate(vt_preset, vt_seeds);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
