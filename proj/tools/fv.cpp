// Command-line front end: simulate particle systems, build grid references,
// estimate contraction rates, run the experiment suite, validate a checkout.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fvtorus/fvtorus.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonOpts {
  std::string config_path;
  std::optional<std::int64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> gamma;
  std::optional<std::int64_t> particles;
  std::optional<std::int64_t> steps;
  std::optional<std::int64_t> threads;
  std::optional<std::string> model;
  std::optional<double> lambda0;
  std::optional<double> eps;
  std::optional<double> drift_amp;
  bool quick = false;
  bool paper = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "run-config file (key = value)");
  cmd->add_option("--seed", o.seed, "base seed (64-bit)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--gamma", o.gamma, "timestep");
  cmd->add_option("--particles", o.particles, "particle count N");
  cmd->add_option("--steps", o.steps, "number of chain steps");
  cmd->add_option("--threads", o.threads, "worker threads (0 = hardware)");
  cmd->add_option("--model", o.model, "model family name");
  cmd->add_option("--lambda0", o.lambda0, "kill-rate level");
  cmd->add_option("--eps", o.eps, "kill-rate variation");
  cmd->add_option("--drift-amp", o.drift_amp, "drift amplitude");
  auto* quick = cmd->add_flag("--quick", o.quick, "quick preset (default)");
  cmd->add_flag("--paper", o.paper, "paper-scale preset")->excludes(quick);
}

void apply_overrides(fv::ConfigMap& map, const CommonOpts& o) {
  if (o.paper) map.set("preset", std::string("paper"));
  if (o.quick) map.set("preset", std::string("quick"));
  if (o.seed) map.set("seed", *o.seed);
  if (o.out_dir) map.set("out_dir", *o.out_dir);
  if (o.gamma) map.set("gamma", *o.gamma);
  if (o.particles) map.set("particles", *o.particles);
  if (o.steps) map.set("steps", *o.steps);
  if (o.threads) map.set("threads", *o.threads);
  if (o.model) map.set("model", *o.model);
  if (o.lambda0) map.set("lambda0", *o.lambda0);
  if (o.eps) map.set("eps", *o.eps);
  if (o.drift_amp) map.set("drift_amp", *o.drift_amp);
}

fv::RunConfig resolve_config(const CommonOpts& o) {
  fv::ConfigMap map = o.config_path.empty()
                          ? fv::ConfigMap()
                          : fv::ConfigMap::parse_file(o.config_path);
  apply_overrides(map, o);
  return fv::RunConfig::from_map(map);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int cmd_simulate(const CommonOpts& opts, bool snapshot_bin) {
  const fv::RunConfig cfg = resolve_config(opts);
  const fv::ModelSpec model = cfg.make_model();
  const fv::StepParams params(cfg.gamma, model, cfg.gamma_max);
  if (!fv::survival_margin_ok(params)) {
    std::cerr << "note: per-arrival survival probability drops below 1/2 for "
                 "this (gamma, lambda); heavy-kill regime\n";
  }
  const fs::path dir(cfg.out_dir);
  std::vector<std::string> outputs = {"trajectory.csv", "snapshot.csv"};
  if (snapshot_bin) outputs.push_back("snapshot.bin");
  fv::write_manifest(dir, cfg, "simulate", outputs);

  auto trajectory = open_output(dir / "trajectory.csv");
  fv::CsvWriter traj(trajectory);
  traj.field("step").field("time").field("observable").field("value");
  traj.end_row();

  fv::ParticleConfiguration init = fv::config_iid_uniform(
      static_cast<std::size_t>(cfg.particles), cfg.dimension,
      fv::derive_seed(cfg.seed, 1));
  const fv::ChainSummary summary = fv::run_chain(
      init, params, static_cast<std::uint64_t>(cfg.steps), cfg.seed,
      [&](const fv::StepObservation& obs) {
        traj.field(static_cast<std::uint64_t>(obs.config.step_index))
            .field(obs.config.time(cfg.gamma))
            .field("resurrections")
            .field(static_cast<std::uint64_t>(obs.resurrections));
        traj.end_row();
      });

  auto snapshot = open_output(dir / "snapshot.csv");
  fv::CsvWriter snap(snapshot);
  for (int i = 0; i < cfg.dimension; ++i) snap.field("x" + std::to_string(i));
  snap.end_row();
  for (const auto& pt : summary.final_config.points) {
    for (int i = 0; i < cfg.dimension; ++i) snap.field(pt[i]);
    snap.end_row();
  }
  if (snapshot_bin) {
    auto bin = open_output(dir / "snapshot.bin");
    const std::uint32_t magic = 0x46565350u;  // "FVSP"
    const std::uint32_t n = static_cast<std::uint32_t>(summary.final_config.size());
    const std::uint32_t d = static_cast<std::uint32_t>(cfg.dimension);
    bin.write(reinterpret_cast<const char*>(&magic), 4);
    bin.write(reinterpret_cast<const char*>(&n), 4);
    bin.write(reinterpret_cast<const char*>(&d), 4);
    for (const auto& pt : summary.final_config.points) {
      for (int i = 0; i < cfg.dimension; ++i) {
        const double v = pt[i];
        bin.write(reinterpret_cast<const char*>(&v), 8);
      }
    }
  }
  std::cout << "simulated " << cfg.particles << " particles for " << cfg.steps
            << " steps (" << summary.total_resurrections
            << " resurrections), outputs in " << dir.string() << "\n";
  return 0;
}

void write_density_csv(const fs::path& path, const fv::GridDensity& g) {
  auto out = open_output(path);
  fv::CsvWriter w(out);
  w.field("cell_center").field("weight");
  w.end_row();
  for (int j = 0; j < g.n_cells(); ++j) {
    w.field(g.cell_center(j)).field(g.weight(j));
    w.end_row();
  }
}

int cmd_oracle(const CommonOpts& opts) {
  const fv::RunConfig cfg = resolve_config(opts);
  const fv::ModelSpec model = cfg.make_model();
  const fv::GridKernel kernel =
      fv::build_grid_kernel(model, cfg.gamma, cfg.n_cells);
  const fv::GridDensity eta = fv::conditioned_flow(
      fv::GridDensity::uniform(cfg.n_cells), kernel, model, cfg.gamma,
      static_cast<int>(cfg.steps));
  const fs::path dir(cfg.out_dir);
  fv::write_manifest(dir, cfg, "oracle", {"density.csv"});
  write_density_csv(dir / "density.csv", eta);
  std::cout << "conditioned flow after " << cfg.steps << " steps written to "
            << (dir / "density.csv").string() << "\n";
  return 0;
}

int cmd_qsd(const CommonOpts& opts) {
  const fv::RunConfig cfg = resolve_config(opts);
  const fv::ModelSpec model = cfg.make_model();
  const fv::GridKernel kernel =
      fv::build_grid_kernel(model, cfg.gamma, cfg.n_cells);
  const fv::QsdResult q =
      fv::qsd_power_iteration(kernel, model, cfg.gamma, cfg.qsd_tol);
  const fs::path dir(cfg.out_dir);
  fv::write_manifest(dir, cfg, "qsd", {"density.csv"});
  write_density_csv(dir / "density.csv", q.density);
  std::cout << "qsd at gamma " << fv::format_double(cfg.gamma)
            << (q.converged ? "" : " [NOT CONVERGED]") << ": survival factor "
            << fv::format_double(q.survival_factor) << " after " << q.iterations
            << " iterations, residual " << fv::format_double(q.residual) << "\n";
  return q.converged ? 0 : 1;
}

int cmd_kappa(const CommonOpts& opts, std::vector<std::int64_t> sweep_n,
              std::vector<double> sweep_eps) {
  const fv::RunConfig cfg = resolve_config(opts);
  fv::KappaOptions ko;
  ko.n_particles = static_cast<int>(cfg.kappa_particles);
  ko.replicates = static_cast<int>(cfg.kappa_replicates);
  ko.horizon_steps = static_cast<int>(cfg.kappa_horizon);
  ko.rho_a = cfg.rho_a;
  ko.mode = cfg.coupling_mode();
  ko.threads = cfg.threads;
  if (sweep_n.empty()) sweep_n = {cfg.kappa_particles};
  if (sweep_eps.empty()) sweep_eps = {cfg.eps};

  fv::SineFamilyParams base;
  base.dim = cfg.dimension;
  base.drift_amp = cfg.drift_amp;
  base.lambda0 = cfg.lambda0;
  base.eps = cfg.eps;
  std::vector<int> n_list;
  for (auto n : sweep_n) n_list.push_back(static_cast<int>(n));
  const auto rows =
      fv::sweep_kappa(base, cfg.gamma, n_list, sweep_eps, ko, cfg.seed);

  const fs::path dir(cfg.out_dir);
  fv::write_manifest(dir, cfg, "kappa", {"kappa.csv"});
  auto out = open_output(dir / "kappa.csv");
  fv::CsvWriter w(out);
  w.field("n_particles").field("eps").field("gamma").field("kappa_hat")
      .field("ci_halfwidth").field("r_squared").field("window_begin")
      .field("window_end").field("replicates").field("seed");
  w.end_row();
  for (const auto& row : rows) {
    w.field(static_cast<long>(row.n_particles));
    row.eps < 0.0 ? w.field("no_kill") : w.field(row.eps);
    w.field(cfg.gamma).field(row.fit.rate).field(row.fit.ci_halfwidth)
        .field(row.fit.r_squared)
        .field(static_cast<long>(row.fit.window_begin))
        .field(static_cast<long>(row.fit.window_end))
        .field(static_cast<long>(row.fit.replicates))
        .field(row.fit.seed);
    w.end_row();
    std::printf("N=%d eps=%s: kappa_hat=%.4g +- %.2g (r2=%.4f)\n",
                row.n_particles,
                row.eps < 0 ? "none" : fv::format_double(row.eps).c_str(),
                row.fit.rate, row.fit.ci_halfwidth, row.fit.r_squared);
  }
  return 0;
}

int cmd_experiment(const CommonOpts& opts, const std::string& name) {
  fv::ConfigMap map = opts.config_path.empty()
                          ? fv::ConfigMap()
                          : fv::ConfigMap::parse_file(opts.config_path);
  map.set("experiment", name);
  apply_overrides(map, opts);
  const fv::RunConfig cfg = fv::RunConfig::from_map(map);

  const fv::ExperimentResult result = fv::run_experiment(cfg);
  fv::write_experiment_outputs(cfg.out_dir, cfg, result, "experiment " + name);
  std::cout << "experiment " << result.name << ": " << result.records.size()
            << " records -> " << cfg.out_dir << "/records.csv\n";
  for (const auto& [key, value] : result.scalars) {
    std::cout << "  " << key << " = " << fv::format_double(value) << "\n";
  }
  std::cout << (result.all_checks_passed ? "all experiment checks passed"
                                         : "SOME EXPERIMENT CHECKS FAILED")
            << "\n";
  return 0;
}

int cmd_validate(std::uint64_t seed) {
  const auto results = fv::selfcheck::run_all(seed);
  bool all = true;
  for (const auto& r : results) {
    std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.empty() ? "" : ": ", r.detail.c_str());
    all = all && r.pass;
  }
  std::printf("%zu checks, %s\n", results.size(),
              all ? "all passed" : "FAILURES PRESENT");
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Interacting-particle simulation of quasi-stationary distributions of "
      "killed diffusions on the flat torus, with deterministic grid "
      "references and convergence experiments"};
  app.require_subcommand(1);

  CommonOpts sim_opts;
  bool snapshot_bin = false;
  auto* sim = app.add_subcommand("simulate", "run one particle chain");
  add_common(sim, sim_opts);
  sim->add_flag("--snapshot-bin", snapshot_bin, "also dump a binary snapshot");

  CommonOpts oracle_opts;
  auto* oracle = app.add_subcommand(
      "oracle", "grid flow of the survival-conditioned law (d = 1)");
  add_common(oracle, oracle_opts);

  CommonOpts qsd_opts;
  auto* qsd =
      app.add_subcommand("qsd", "grid fixed point at one timestep (d = 1)");
  add_common(qsd, qsd_opts);

  CommonOpts kappa_opts;
  std::vector<std::int64_t> sweep_n;
  std::vector<double> sweep_eps;
  auto* kappa = app.add_subcommand("kappa", "contraction-rate estimation");
  add_common(kappa, kappa_opts);
  kappa->add_option("--sweep-n", sweep_n, "particle counts to sweep")
      ->delimiter(',');
  kappa->add_option("--sweep-eps", sweep_eps,
                    "kill-variation strengths to sweep (-1 = killing off)")
      ->delimiter(',');

  CommonOpts exp_opts;
  std::string exp_name;
  auto* exp = app.add_subcommand("experiment", "run a named experiment");
  exp->add_option("name", exp_name,
                  "propagation_of_chaos | gamma_bias | long_time | theorem_main")
      ->required();
  add_common(exp, exp_opts);

  std::int64_t validate_seed = 20240817;
  auto* validate = app.add_subcommand("validate", "run the property suite");
  validate->add_option("--seed", validate_seed, "seed for sampled checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_opts, snapshot_bin);
    if (oracle->parsed()) return cmd_oracle(oracle_opts);
    if (qsd->parsed()) return cmd_qsd(qsd_opts);
    if (kappa->parsed()) return cmd_kappa(kappa_opts, sweep_n, sweep_eps);
    if (exp->parsed()) return cmd_experiment(exp_opts, exp_name);
    if (validate->parsed()) {
      return cmd_validate(static_cast<std::uint64_t>(validate_seed));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
