#pragma once

// Command-line front end: run, tessellate, study, toy.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lagflow/app.hpp"

namespace lagflow::cli {

/// Exit codes
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;      // numerical or I/O failure
inline constexpr int kBadConfig = 2;    // invalid configuration or usage
inline constexpr int kPartialStudy = 3; // study table written, some rows failed

namespace detail {

struct CommonFlags {
  std::string testcase, config, partition, output_dir;
  std::size_t n_particles = 0, steps = 0, snapshot_every = 0;
  double epsilon = 0, tau = 0, horizon = 0, scale = 1;
  std::uint64_t seed = 0;
  bool allow_unstable = false;
  std::vector<CLI::Option*> opts;

  void add(CLI::App& cmd, bool dynamics) {
    auto keep = [&](CLI::Option* o) { opts.push_back(o); };
    keep(cmd.add_option("--testcase", testcase, "beltrami | kelvin_helmholtz | rayleigh_taylor | custom"));
    keep(cmd.add_option("--config", config, "JSON config file; flags override its values"));
    keep(cmd.add_option("--n-particles", n_particles, "number of particles N"));
    keep(cmd.add_option("--seed", seed, "seed of the Lloyd initial sample"));
    keep(cmd.add_option("--partition", partition, "lloyd | grid")->check(CLI::IsMember({"lloyd", "grid"})));
    keep(cmd.add_option("--output-dir", output_dir, "directory for snapshots and tables"));
    keep(cmd.add_option("--scale", scale, "divide N by s and multiply epsilon, tau by sqrt(s)"));
    if (!dynamics) return;
    keep(cmd.add_option("--epsilon", epsilon, "penalization parameter"));
    keep(cmd.add_option("--tau", tau, "time step"));
    keep(cmd.add_option("--steps", steps, "number of steps (sets horizon = steps * tau)"));
    keep(cmd.add_option("--horizon", horizon, "final time T"));
    keep(cmd.add_option("--snapshot-every", snapshot_every, "snapshot cadence in steps"));
    cmd.add_flag("--allow-unstable", allow_unstable, "run even if tau/epsilon^2 > 1/2");
  }

  bool given(const char* name) const {
    for (auto* o : opts)
      if (o->check_name(name)) return o->count() > 0;
    return false;
  }

  ResolvedConfig resolve() const {
    std::optional<nlohmann::json> file;
    if (given("--config")) file = read_json_file(config);
    ConfigOverrides f;
    if (given("--testcase")) f.testcase = testcase;
    if (given("--n-particles")) f.n_particles = n_particles;
    if (given("--epsilon")) f.epsilon = epsilon;
    if (given("--tau")) f.tau = tau;
    if (given("--horizon")) f.horizon = horizon;
    if (given("--steps")) f.steps = steps;
    if (given("--scale")) f.scale = scale;
    if (given("--seed")) f.seed = seed;
    if (given("--partition")) f.partition = partition;
    if (given("--snapshot-every")) f.snapshot_every = snapshot_every;
    if (given("--output-dir")) f.output_dir = output_dir;
    return resolve_config(file, f);
  }
};

inline std::string describe(const SimConfig& c) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "testcase=%s N=%zu epsilon=%.6g tau=%.6g horizon=%.6g seed=%llu partition=%s",
                to_string(c.testcase), c.n_particles, c.epsilon, c.tau, c.horizon,
                static_cast<unsigned long long>(c.seed), to_string(c.partition));
  return buf;
}

inline int report(const Error& e, std::ostream& err, const std::optional<SimConfig>& config = std::nullopt) {
  err << "error: " << e.what() << '\n';
  if (config) err << "config: " << describe(*config) << '\n';
  return e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::InvalidArgument ? kBadConfig : kFailure;
}

inline int run_command(const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  std::optional<SimConfig> config;
  try {
    const auto resolved = flags.resolve();
    config = resolved.config;
    std::vector<std::string> warnings;
    validate(*config, flags.allow_unstable || resolved.preset_timing, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    const auto sim = build_testcase(*config);
    const auto summary = run_simulation(sim);
    out << "completed " << summary.steps << " steps, " << summary.snapshots << " snapshots in " << config->output_dir
        << " (config " << config_hash(*config) << ")\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "min accepted cell area %.6g (target %.6g), max Newton iterations %d\n",
                  summary.min_accepted_area, sim.domain.area() / static_cast<double>(config->n_particles),
                  summary.max_newton_iterations);
    out << buf;
    return kOk;
  } catch (const Error& e) {
    return report(e, err, config);
  }
}

inline int tessellate_command(const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  std::optional<SimConfig> config;
  try {
    config = flags.resolve().config;
    if (!flags.given("--partition")) config->partition = PartitionKind::Lloyd;
    validate(*config, true);
    const auto sim = build_testcase(*config);
    auto state = sim.state;
    const auto ot = solve_at(state, sim.domain);
    const std::filesystem::path dir = config->output_dir;
    write_snapshot(state, ot, dir / "partition", config_hash(*config));
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu cells, h = %.6g, %d Lloyd iterations, written to %s\n", sim.partition.size(),
                  sim.partition.h, sim.partition.iterations, (dir / "partition.{csv,svg,json}").string().c_str());
    out << buf;
    return kOk;
  } catch (const Error& e) {
    return report(e, err, config);
  }
}

/// Ladder file: [{"n":..,"epsilon":..,"tau":..}, ...] or {"horizon": T, "rungs": [...]}.
inline std::pair<std::vector<LadderRung>, std::optional<double>> read_ladder(const std::string& path) {
  const auto j = read_json_file(path);
  const nlohmann::json* rungs = &j;
  std::optional<double> horizon;
  if (j.is_object()) {
    if (!j.contains("rungs")) throw Error(ErrorCode::ConfigInvalid, "ladder: missing 'rungs'");
    rungs = &j["rungs"];
    if (j.contains("horizon")) horizon = lagflow::detail::json_field<double>(j, "horizon");
  }
  if (!rungs->is_array()) throw Error(ErrorCode::ConfigInvalid, "ladder: expected an array of rungs");
  std::vector<LadderRung> ladder;
  for (const auto& r : *rungs) {
    LadderRung rung;
    const auto n = lagflow::detail::json_field<std::int64_t>(r, "n");
    if (n < 1) throw Error(ErrorCode::ConfigInvalid, "ladder: n must be >= 1");
    rung.n = static_cast<std::size_t>(n);
    rung.epsilon = lagflow::detail::json_field<double>(r, "epsilon");
    rung.tau = lagflow::detail::json_field<double>(r, "tau");
    ladder.push_back(rung);
  }
  return {ladder, horizon};
}

inline int study_command(const std::string& ladder_path, std::optional<double> horizon, const std::string& output,
                         std::ostream& out, std::ostream& err) {
  try {
    auto [ladder, file_horizon] = read_ladder(ladder_path);
    const double T = horizon ? *horizon : file_horizon.value_or(1.0);
    if (!(T >= 0)) throw Error(ErrorCode::ConfigInvalid, "horizon: must be non-negative");
    const auto rows = convergence_study(ladder, T);
    if (output.empty()) {
      write_study_csv(out, rows);
    } else {
      std::ofstream file(output, std::ios::binary);
      if (!file) throw Error(ErrorCode::IoFailure, "cannot open " + output);
      write_study_csv(file, rows);
      if (!file.flush()) throw Error(ErrorCode::IoFailure, "write failed: " + output);
    }
    bool failed = false;
    for (const auto& r : rows)
      if (!r.error.empty()) {
        err << "rung n=" << r.rung.n << " failed: " << r.error << '\n';
        failed = true;
      }
    return failed ? kPartialStudy : kOk;
  } catch (const Error& e) {
    return report(e, err);
  }
}

inline int toy_command(double h0, double h1, double eps, double horizon, std::vector<double> taus, std::ostream& out,
                       std::ostream& err) {
  try {
    if (taus.empty()) taus = {eps * eps / 2, eps * eps / 5, eps * eps / 10, eps * eps / 20, eps * eps / 50, eps * eps / 100};
    char buf[200];
    std::snprintf(buf, sizeof buf, "# h0=%.6g h1=%.6g epsilon=%.6g horizon=%.6g closed-form modulated energy %.17g\n",
                  h0, h1, eps, horizon, toy_modulated_energy(toy_geodesic_reference(h0, h1, eps, 0.0),
                                                             toy_geodesic_velocity(h0, h1, eps, 0.0), eps));
    out << buf << "tau,tau_over_eps2,steps,max_deviation,hamiltonian_drift\n";
    for (double tau : taus) {
      const auto traj = toy_trajectory(h0, h1, eps, tau, horizon);
      const double H0 = toy_hamiltonian(traj.front().position, traj.front().velocity, eps);
      double drift = 0;
      for (const auto& s : traj) drift = std::max(drift, std::abs(toy_hamiltonian(s.position, s.velocity, eps) - H0));
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%.17g,%.17g\n", tau, tau / (eps * eps), traj.size() - 1,
                    toy_integrator_check(h0, h1, eps, tau, horizon), drift / H0);
      out << buf;
    }
    return kOk;
  } catch (const Error& e) {
    return report(e, err);
  }
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Particle scheme for incompressible Euler via Laguerre-cell penalization"};
  app.name("lagflow");
  app.require_subcommand(1);

  detail::CommonFlags run_flags, tess_flags;
  auto* run = app.add_subcommand("run", "run a testcase, writing snapshots and diagnostics.csv");
  run_flags.add(*run, true);
  auto* tess = app.add_subcommand("tessellate", "compute a partition and write it as a snapshot");
  tess_flags.add(*tess, false);

  std::string ladder, study_output;
  double study_horizon = 0;
  auto* study = app.add_subcommand("study", "Beltrami convergence ladder, one CSV row per rung");
  study->add_option("--ladder", ladder, "ladder JSON file")->required()->check(CLI::ExistingFile);
  auto* study_h = study->add_option("--horizon", study_horizon, "final time (default: file value or 1)");
  study->add_option("--output", study_output, "CSV path (default: stdout)");

  double h0 = 0.01, h1 = 0.0, toy_eps = 0.1, toy_horizon = 1.0;
  std::vector<double> taus;
  auto* toy = app.add_subcommand("toy", "planar toy problem: integrator error against the closed form");
  toy->add_option("--h0", h0, "initial offset")->capture_default_str();
  toy->add_option("--h1", h1, "initial transverse velocity")->capture_default_str();
  toy->add_option("--epsilon", toy_eps, "penalization parameter")->capture_default_str();
  toy->add_option("--horizon", toy_horizon, "final time")->capture_default_str();
  toy->add_option("--tau", taus, "time steps to sweep (default: eps^2 / {2,5,10,20,50,100})");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0) err << app.help();
    return code == 0 ? kOk : kBadConfig;
  }

  if (*run) return detail::run_command(run_flags, out, err);
  if (*tess) return detail::tessellate_command(tess_flags, out, err);
  if (*study)
    return detail::study_command(ladder, study_h->count() ? std::optional<double>(study_horizon) : std::nullopt,
                                 study_output, out, err);
  return detail::toy_command(h0, h1, toy_eps, toy_horizon, taus, out, err);
}

}  // namespace lagflow::cli
