// xlo: trace generation, offline solves, online runs, the grid oracle and
// the figure experiments.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "xlo/config.hpp"
#include "xlo/csv.hpp"
#include "xlo/experiments.hpp"
#include "xlo/instance_io.hpp"
#include "xlo/offline.hpp"
#include "xlo/online.hpp"
#include "xlo/oracle.hpp"
#include "xlo/tracegen.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "override the seed list with one seed");
  cmd->add_option("--out", f.out, "output directory (default: the config's out_dir)");
}

xlo::ExperimentConfig resolve(const CommonFlags& f) {
  auto cfg = f.config.empty() ? xlo::config_from_text("") : xlo::load_config(f.config);
  if (f.seed) {
    cfg.seeds = {*f.seed};
    cfg.trace.seed = *f.seed;
  } else {
    cfg.trace.seed = cfg.seeds.front();
  }
  if (!f.out.empty()) cfg.out_dir = f.out;
  return cfg;
}

std::string hash_of(const xlo::ExperimentConfig& cfg) { return xlo::hash_hex(xlo::config_hash(cfg)); }

void emit(const fs::path& path, const xlo::CsvTable& t) {
  xlo::save_csv(path, t);
  std::cout << "wrote " << path.string() << '\n';
}

int gen_trace(const CommonFlags& f) {
  const auto cfg = resolve(f);
  const auto inst = xlo::generate_trace(cfg.trace);
  const fs::path path = fs::path(cfg.out_dir) / ("trace_s" + std::to_string(cfg.trace.seed) + ".xlo");
  xlo::write_file_atomically(path, xlo::to_text(inst));
  double q = 0.0;
  for (const auto& du : inst.units) q += du.q;
  const auto n = inst.size();
  const double span = n > 1 ? inst.units.back().t - inst.units.front().t : 0.0;
  std::cout << "wrote " << path.string() << '\n'
            << "units " << n << "  W " << xlo::format_real(inst.budget) << "  mean q "
            << (n ? q / static_cast<double>(n) : 0.0) << "  mean interarrival "
            << (n > 1 ? 1000.0 * span / static_cast<double>(n - 1) : 0.0) << " ms  edges "
            << (inst.graph ? inst.graph->edges().size() : 0) << '\n';
  return 0;
}

int solve(const CommonFlags& f, const std::string& file, const std::string& mode) {
  const auto cfg = resolve(f);
  const auto inst = xlo::load_instance(file);
  const bool dag = mode == "dag";
  if (dag && !inst.has_dependencies()) {
    throw std::invalid_argument("mode dag needs an instance with a dag section");
  }
  if (!dag && inst.has_dependencies()) {
    throw std::invalid_argument("instance has dependencies; use --mode dag");
  }
  const auto rep = dag ? xlo::solve_interdependent(inst, cfg.model, cfg.solver)
                       : xlo::solve_independent(inst, cfg.model, cfg.solver);
  const auto hash = hash_of(cfg);
  const auto seed = std::to_string(cfg.trace.seed);
  emit(fs::path(cfg.out_dir) / "solve.csv", xlo::solve_table(rep, hash, seed));
  emit(fs::path(cfg.out_dir) / "solve_decisions.csv", xlo::decisions_table(inst, rep, cfg.model, hash, seed));
  std::cout << "gap " << xlo::format_real(rep.gap) << "  primal " << xlo::format_real(rep.primal_value)
            << "  dual " << xlo::format_real(rep.dual_value) << "  outer " << rep.outer_iterations
            << "  inner " << rep.inner_iterations << (rep.converged ? "" : "  (not converged)") << '\n';
  return 0;
}

int online(const CommonFlags& f, const std::string& file) {
  const auto cfg = resolve(f);
  std::optional<xlo::Instance> fixed;
  if (!file.empty()) fixed = xlo::load_instance(file);
  const auto sweep = xlo::online_sweep(cfg, cfg.trace.dag, fixed);
  const auto hash = hash_of(cfg);
  for (const auto& cell : sweep.cells) {
    emit(fs::path(cfg.out_dir) / xlo::cell_name(cell), xlo::online_table(cell.run, hash, std::to_string(cell.seed)));
  }
  emit(fs::path(cfg.out_dir) / "summary.csv", sweep.summary);
  return 0;
}

int oracle(const CommonFlags& f, const std::string& file, std::optional<double> step_ms,
           std::optional<std::size_t> points) {
  auto cfg = resolve(f);
  if (step_ms) cfg.oracle.time_step = *step_ms / 1000.0;
  if (points) cfg.oracle.action_points = *points;
  const auto inst = xlo::load_instance(file);
  const auto res = xlo::brute_force_oracle(inst, cfg.model, cfg.oracle);
  if (!res.feasible) {
    std::cout << "no feasible grid point\n";
    return 1;
  }
  xlo::CsvTable t({"unit", "x", "y", "a"}, hash_of(cfg), std::to_string(cfg.trace.seed));
  for (std::size_t i = 0; i < res.decisions.size(); ++i) {
    const auto& d = res.decisions[i];
    t.add({i + 1, d.x, d.y, d.a});
  }
  t.note("value=" + xlo::format_real(res.value) + " leaves=" + std::to_string(res.leaves));
  emit(fs::path(cfg.out_dir) / "oracle.csv", t);
  std::cout << "value " << xlo::format_real(res.value) << '\n';
  for (std::size_t i = 0; i < res.decisions.size(); ++i) {
    const auto& d = res.decisions[i];
    std::cout << "  " << i + 1 << ": x " << xlo::format_real(d.x) << "  y " << xlo::format_real(d.y) << "  a "
              << xlo::format_real(d.a) << '\n';
  }
  return 0;
}

int experiment(const CommonFlags& f, const std::string& name) {
  const auto cfg = resolve(f);
  for (const auto& [file, table] : xlo::run_experiment(name, cfg)) emit(fs::path(cfg.out_dir) / file, table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-layer transmission scheduling: offline solver, online learner, experiments"};
  app.require_subcommand(1);

  CommonFlags gen_f, solve_f, online_f, oracle_f, exp_f;
  std::string solve_file, mode = "independent", online_file, oracle_file, exp_name;
  std::optional<double> step_ms;
  std::optional<std::size_t> points;

  auto* gen = app.add_subcommand("gen-trace", "generate a trace from the config");
  add_common(gen, gen_f);

  auto* sol = app.add_subcommand("solve", "offline solve of an instance file");
  add_common(sol, solve_f);
  sol->add_option("instance", solve_file, "instance file")->required()->check(CLI::ExistingFile);
  sol->add_option("--mode", mode, "independent or dag")->check(CLI::IsMember({"independent", "dag"}));

  auto* onl = app.add_subcommand("online", "online policies over the (policy, W, seed) sweep");
  add_common(onl, online_f);
  onl->add_option("instance", online_file, "instance file (default: generate traces)")->check(CLI::ExistingFile);

  auto* orc = app.add_subcommand("oracle", "exhaustive grid optimum of a small instance");
  add_common(orc, oracle_f);
  orc->add_option("instance", oracle_file, "instance file")->required()->check(CLI::ExistingFile);
  orc->add_option("--time-step-ms", step_ms, "window grid step");
  orc->add_option("--action-points", points, "payload grid points");

  auto* exp = app.add_subcommand("experiment", "run a figure protocol");
  add_common(exp, exp_f);
  exp->add_option("name", exp_name, "fig5, fig6, fig7, fig8 or fig9")
      ->required()
      ->check(CLI::IsMember(xlo::experiment_names()));

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return gen_trace(gen_f);
    if (sol->parsed()) return solve(solve_f, solve_file, mode);
    if (onl->parsed()) return online(online_f, online_file);
    if (orc->parsed()) return oracle(oracle_f, oracle_file, step_ms, points);
    if (exp->parsed()) return experiment(exp_f, exp_name);
  } catch (const std::exception& e) {
    std::cerr << "xlo: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
