#pragma once

// Simulation configuration, the three named testcases, and snapshot export
// (particle CSV, SVG render of the Laguerre cells, JSON metadata).

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lagflow/diagnostics.hpp"
#include "lagflow/dynamics.hpp"
#include "lagflow/flows.hpp"
#include "lagflow/tessellation.hpp"

namespace lagflow {

enum class Testcase { Beltrami, KelvinHelmholtz, RayleighTaylor, Custom };
enum class PartitionKind { Lloyd, Grid };

inline const char* to_string(Testcase t) {
  switch (t) {
    case Testcase::Beltrami: return "beltrami";
    case Testcase::KelvinHelmholtz: return "kelvin_helmholtz";
    case Testcase::RayleighTaylor: return "rayleigh_taylor";
    case Testcase::Custom: return "custom";
  }
  return "?";
}

inline const char* to_string(PartitionKind p) { return p == PartitionKind::Lloyd ? "lloyd" : "grid"; }

inline Testcase parse_testcase(const std::string& s) {
  if (s == "beltrami") return Testcase::Beltrami;
  if (s == "kelvin_helmholtz" || s == "kh") return Testcase::KelvinHelmholtz;
  if (s == "rayleigh_taylor" || s == "rt") return Testcase::RayleighTaylor;
  if (s == "custom") return Testcase::Custom;
  throw Error(ErrorCode::ConfigInvalid, "testcase: unknown value '" + s + "'");
}

inline PartitionKind parse_partition(const std::string& s) {
  if (s == "lloyd") return PartitionKind::Lloyd;
  if (s == "grid") return PartitionKind::Grid;
  throw Error(ErrorCode::ConfigInvalid, "partition: expected 'lloyd' or 'grid', got '" + s + "'");
}

struct SimConfig {
  Testcase testcase = Testcase::Beltrami;
  std::size_t n_particles = 900;
  double epsilon = 0.1;
  double tau = 1.0 / 50;
  double horizon = 1.0;
  std::uint64_t seed = 1;
  PartitionKind partition = PartitionKind::Grid;
  std::size_t snapshot_every = 10;
  std::string output_dir = "out";
  double rt_eta = 0.2;
  Point2 gravity{0.0, 0.0};
  InitMode init = InitMode::Centroid;
  double scale = 1.0;

  double stability_ratio() const { return tau / (epsilon * epsilon); }
  std::size_t step_count() const { return SchemeParams{tau, epsilon, gravity, horizon}.step_count(); }
};

/// Named parameter sets of the three experiments.
inline SimConfig preset(Testcase t) {
  SimConfig c;
  c.testcase = t;
  switch (t) {
    case Testcase::Beltrami:
    case Testcase::Custom:
      c.n_particles = 900;
      c.tau = 1.0 / 50;
      c.epsilon = 0.1;
      c.horizon = 50 * c.tau;
      c.partition = PartitionKind::Grid;
      break;
    case Testcase::KelvinHelmholtz:
      c.n_particles = 300000;
      c.tau = 0.005;
      c.epsilon = 0.0025;
      c.horizon = 2000 * c.tau;
      c.partition = PartitionKind::Lloyd;
      break;
    case Testcase::RayleighTaylor:
      c.n_particles = 50000;
      c.tau = 0.001;
      c.epsilon = 0.002;
      c.horizon = 2000 * c.tau;
      c.partition = PartitionKind::Lloyd;
      c.gravity = {0.0, -10.0};
      break;
  }
  return c;
}

/// Desk-scale variant: N / s particles, eps and tau multiplied by sqrt(s),
/// which keeps h/eps and tau/eps unchanged. The step count is kept.
inline SimConfig scaled(SimConfig c, double s) {
  if (!(std::isfinite(s) && s >= 1.0)) throw Error(ErrorCode::ConfigInvalid, "scale: must be >= 1");
  const std::size_t steps = c.step_count();
  const double r = std::sqrt(s);
  c.n_particles = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(c.n_particles) / s)));
  c.epsilon *= r;
  c.tau *= r;
  c.horizon = static_cast<double>(steps) * c.tau;
  c.scale *= s;
  return c;
}

inline Domain testcase_domain(Testcase t) {
  switch (t) {
    case Testcase::KelvinHelmholtz: return Domain::periodic_rectangle(0.0, -0.5, 2.0, 0.5);
    case Testcase::RayleighTaylor: return Domain::rectangle(-1.0, -3.0, 1.0, 3.0);
    default: return Domain::rectangle(-0.5, -0.5, 0.5, 0.5);
  }
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const SimConfig& c) {
  return nlohmann::json{{"testcase", to_string(c.testcase)},
                        {"n_particles", c.n_particles},
                        {"epsilon", c.epsilon},
                        {"tau", c.tau},
                        {"horizon", c.horizon},
                        {"seed", c.seed},
                        {"partition", to_string(c.partition)},
                        {"snapshot_every", c.snapshot_every},
                        {"output_dir", c.output_dir},
                        {"rt_eta", c.rt_eta},
                        {"gravity", {c.gravity.x, c.gravity.y}},
                        {"init", c.init == InitMode::Centroid ? "centroid" : "cell_average"},
                        {"scale", c.scale}};
}

namespace detail {

template <class T>
T json_field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string(key) + ": " + e.what());
  }
}

}  // namespace detail

/// Overlays the fields present in `j` onto `c`. Unknown keys are rejected.
inline SimConfig merge_json(SimConfig c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "testcase") c.testcase = parse_testcase(detail::json_field<std::string>(j, k));
    else if (key == "n_particles") {
      const auto n = detail::json_field<std::int64_t>(j, k);
      if (n < 1) throw Error(ErrorCode::ConfigInvalid, "n_particles: must be >= 1");
      c.n_particles = static_cast<std::size_t>(n);
    } else if (key == "epsilon") c.epsilon = detail::json_field<double>(j, k);
    else if (key == "tau") c.tau = detail::json_field<double>(j, k);
    else if (key == "horizon") c.horizon = detail::json_field<double>(j, k);
    else if (key == "seed") c.seed = detail::json_field<std::uint64_t>(j, k);
    else if (key == "partition") c.partition = parse_partition(detail::json_field<std::string>(j, k));
    else if (key == "snapshot_every") {
      const auto n = detail::json_field<std::int64_t>(j, k);
      if (n < 1) throw Error(ErrorCode::ConfigInvalid, "snapshot_every: must be >= 1");
      c.snapshot_every = static_cast<std::size_t>(n);
    } else if (key == "output_dir") c.output_dir = detail::json_field<std::string>(j, k);
    else if (key == "rt_eta") c.rt_eta = detail::json_field<double>(j, k);
    else if (key == "gravity") {
      const auto g = detail::json_field<std::vector<double>>(j, k);
      if (g.size() != 2) throw Error(ErrorCode::ConfigInvalid, "gravity: expected [gx, gy]");
      c.gravity = {g[0], g[1]};
    } else if (key == "init") {
      const auto s = detail::json_field<std::string>(j, k);
      if (s == "centroid") c.init = InitMode::Centroid;
      else if (s == "cell_average") c.init = InitMode::CellAverage;
      else throw Error(ErrorCode::ConfigInvalid, "init: expected 'centroid' or 'cell_average'");
    } else if (key == "scale") c.scale = detail::json_field<double>(j, k);
    else throw Error(ErrorCode::ConfigInvalid, key + ": unknown field");
  }
  return c;
}

inline SimConfig config_from_json(const nlohmann::json& j) {
  SimConfig base = preset(j.contains("testcase") ? parse_testcase(detail::json_field<std::string>(j, "testcase"))
                                                 : Testcase::Beltrami);
  return merge_json(base, j);
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, path.string() + ": " + e.what());
  }
}

/// Values given on the command line; unset members leave the file/preset value.
struct ConfigOverrides {
  std::optional<std::string> testcase;
  std::optional<std::size_t> n_particles;
  std::optional<double> epsilon, tau, horizon, scale;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> partition;
  std::optional<std::size_t> snapshot_every;
  std::optional<std::string> output_dir;
};

struct ResolvedConfig {
  SimConfig config;
  bool preset_timing = true;  // tau and epsilon come from a (scaled) named preset
};

/// Precedence: named preset, scaled by `scale`, then the config file, then flags.
/// Explicit tau/epsilon/n values are taken as given and not scaled.
inline ResolvedConfig resolve_config(const std::optional<nlohmann::json>& file, const ConfigOverrides& flags) {
  if (file && !file->is_object()) throw Error(ErrorCode::ConfigInvalid, "config: expected a JSON object");
  std::string name = "beltrami";
  if (file && file->contains("testcase")) name = detail::json_field<std::string>(*file, "testcase");
  if (flags.testcase) name = *flags.testcase;
  double scale = 1.0;
  if (file && file->contains("scale")) scale = detail::json_field<double>(*file, "scale");
  if (flags.scale) scale = *flags.scale;

  ResolvedConfig r;
  r.config = scaled(preset(parse_testcase(name)), scale);
  if (file) {
    auto rest = *file;
    rest.erase("testcase");
    rest.erase("scale");
    r.config = merge_json(r.config, rest);
    if (file->contains("tau") || file->contains("epsilon")) r.preset_timing = false;
  }
  auto& c = r.config;
  if (flags.n_particles) {
    if (*flags.n_particles < 1) throw Error(ErrorCode::ConfigInvalid, "n_particles: must be >= 1");
    c.n_particles = *flags.n_particles;
  }
  const std::size_t preset_steps = c.step_count();
  if (flags.epsilon) c.epsilon = *flags.epsilon, r.preset_timing = false;
  if (flags.tau) c.tau = *flags.tau, r.preset_timing = false;
  if (flags.steps && flags.horizon) throw Error(ErrorCode::ConfigInvalid, "steps: give either --steps or --horizon");
  if (flags.horizon) c.horizon = *flags.horizon;
  else if (flags.steps) c.horizon = static_cast<double>(*flags.steps) * c.tau;
  else if (flags.tau && !(file && file->contains("horizon"))) c.horizon = static_cast<double>(preset_steps) * c.tau;
  if (flags.seed) c.seed = *flags.seed;
  if (flags.partition) c.partition = parse_partition(*flags.partition);
  if (flags.snapshot_every) {
    if (*flags.snapshot_every < 1) throw Error(ErrorCode::ConfigInvalid, "snapshot_every: must be >= 1");
    c.snapshot_every = *flags.snapshot_every;
  }
  if (flags.output_dir) c.output_dir = *flags.output_dir;
  return r;
}

/// FNV-1a (64 bit) of the canonical JSON of everything that affects results.
inline std::string config_hash(const SimConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");
  j.erase("snapshot_every");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

/// Field-level validation. A step ratio tau/eps^2 above 1/2 is an error
/// unless `allow_unstable`; then a warning is appended to `warnings`.
inline void validate(const SimConfig& c, bool allow_unstable, std::vector<std::string>* warnings = nullptr) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigInvalid, m); };
  if (c.n_particles < 1) fail("n_particles: must be >= 1");
  if (!(std::isfinite(c.epsilon) && c.epsilon > 0)) fail("epsilon: must be positive");
  if (!(std::isfinite(c.tau) && c.tau > 0)) fail("tau: must be positive");
  if (!(std::isfinite(c.horizon) && c.horizon >= 0)) fail("horizon: must be non-negative");
  if (c.snapshot_every < 1) fail("snapshot_every: must be >= 1");
  if (!std::isfinite(c.rt_eta) || std::abs(c.rt_eta) >= 1.0) fail("rt_eta: must lie in (-1, 1)");
  if (!is_finite(c.gravity)) fail("gravity: must be finite");
  if (!(std::isfinite(c.scale) && c.scale >= 1.0)) fail("scale: must be >= 1");
  const double ratio = c.stability_ratio();
  if (ratio > 0.5) {
    char msg[200];
    std::snprintf(msg, sizeof msg, "tau/epsilon^2 = %.6g exceeds the stability bound 1/2 (tau=%.6g, epsilon=%.6g)",
                  ratio, c.tau, c.epsilon);
    if (!allow_unstable) fail(std::string(msg) + "; pass --allow-unstable to run anyway");
    if (warnings) warnings->push_back(msg);
  }
}

// ---------------------------------------------------------------------------
// Testcase construction

struct Simulation {
  SimConfig config;
  Domain domain;
  Partition partition;
  ParticleState state;
  SchemeParams params;
  std::optional<VelocityField> reference;
};

/// nx x ny grid with nx * ny = n and cells close to square on the domain's box.
inline std::pair<std::size_t, std::size_t> grid_shape(const Domain& domain, std::size_t n) {
  const auto box = domain.bounds();
  const double aspect = box.width() / box.height();
  const auto nx = static_cast<std::size_t>(std::max<long long>(1, std::llround(std::sqrt(static_cast<double>(n) * aspect))));
  if (n % nx != 0)
    throw Error(ErrorCode::ConfigInvalid, "n_particles: " + std::to_string(n) + " does not factor into a grid of aspect " +
                                              std::to_string(aspect) + "; use --partition lloyd");
  return {nx, n / nx};
}

inline Simulation build_testcase(const SimConfig& config) {
  Simulation sim{config, testcase_domain(config.testcase), {}, {}, {}, std::nullopt};
  if (config.partition == PartitionKind::Grid) {
    const auto [nx, ny] = grid_shape(sim.domain, config.n_particles);
    sim.partition = grid_partition(sim.domain, nx, ny);
  } else {
    sim.partition = lloyd_partition(sim.domain, config.n_particles, config.seed);
  }
  VelocityField v0 = flows::at_rest;
  DensityField density;
  Point2 gravity = config.gravity;
  switch (config.testcase) {
    case Testcase::Beltrami:
      v0 = flows::beltrami;
      sim.reference = v0;
      break;
    case Testcase::KelvinHelmholtz: v0 = flows::shear_layer; break;
    case Testcase::RayleighTaylor: {
      const double eta = config.rt_eta;
      density = [eta](Point2 p) { return flows::two_phase_density(p, eta); };
      break;
    }
    case Testcase::Custom: break;
  }
  sim.state = init_state(sim.partition, v0, density, config.init);
  sim.params = SchemeParams{config.tau, config.epsilon, gravity, config.horizon};
  return sim;
}

// ---------------------------------------------------------------------------
// Snapshots

/// 16 x 16 bins of the initial position: hue from x, lightness from y.
inline int color_index(Point2 origin, const Domain& domain) {
  const auto box = domain.bounds();
  auto bin = [](double u) { return std::clamp(static_cast<int>(std::floor(16.0 * u)), 0, 15); };
  return bin((origin.x - box.lo.x) / box.width()) * 16 + bin((origin.y - box.lo.y) / box.height());
}

inline std::string color_css(int index) {
  const double hue = 360.0 * ((index / 16) + 0.5) / 16.0;
  const double light = 25.0 + 50.0 * ((index % 16) + 0.5) / 16.0;
  char buf[48];
  std::snprintf(buf, sizeof buf, "hsl(%.1f,70%%,%.1f%%)", hue, light);
  return buf;
}

struct SnapshotRow {
  std::size_t id = 0;
  Point2 position, velocity;
  double rho = 1.0;
  int color_index = 0;
};

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

}  // namespace detail

inline void write_particles_csv(const std::filesystem::path& path, const ParticleState& state, const Domain& domain) {
  auto out = detail::open_for_write(path);
  out << "id,x,y,vx,vy,rho,color_index\n";
  char buf[256];
  for (std::size_t i = 0; i < state.size(); ++i) {
    const Point2 p = state.positions[i], v = state.velocities[i];
    const Point2 origin = i < state.origins.size() ? state.origins[i] : p;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", i, p.x, p.y, v.x, v.y,
                  state.densities[i], color_index(origin, domain));
    out << buf;
  }
  detail::finish(out, path);
}

inline std::vector<SnapshotRow> read_particles_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "id,x,y,vx,vy,rho,color_index")
    throw Error(ErrorCode::IoFailure, path.string() + ": unexpected header");
  std::vector<SnapshotRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SnapshotRow r;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf,%d", &r.id, &r.position.x, &r.position.y, &r.velocity.x,
                    &r.velocity.y, &r.rho, &r.color_index) != 7)
      throw Error(ErrorCode::IoFailure, path.string() + ": malformed row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

/// One <path> per particle; periodic cells contribute one subpath per wrapped piece.
inline void write_cells_svg(const std::filesystem::path& path, const ParticleState& state, const OTSolution& ot) {
  const Domain& domain = ot.diagram.domain;
  const auto box = domain.bounds();
  const double pad = 0.02 * std::max(box.width(), box.height());
  auto out = detail::open_for_write(path);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"%.17g %.17g %.17g %.17g\" width=\"800\">\n",
                box.lo.x - pad, -box.hi.y - pad, box.width() + 2 * pad, box.height() + 2 * pad);
  out << buf;
  out << "<g transform=\"scale(1,-1)\" stroke=\"#222\" stroke-width=\"" << 0.001 * std::max(box.width(), box.height())
      << "\">\n";
  for (std::size_t i = 0; i < ot.size(); ++i) {
    const Point2 origin = i < state.origins.size() ? state.origins[i] : state.positions[i];
    out << "<path fill=\"" << color_css(color_index(origin, domain)) << "\" d=\"";
    for (const auto& piece : wrapped_pieces(ot.diagram.cells[i], domain)) {
      const auto v = piece.vertices();
      for (std::size_t k = 0; k < v.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%c%.17g %.17g ", k == 0 ? 'M' : 'L', v[k].x, v[k].y);
        out << buf;
      }
      out << "Z ";
    }
    out << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
  detail::finish(out, path);
}

inline void write_metadata(const std::filesystem::path& path, const ParticleState& state, const std::string& hash) {
  auto out = detail::open_for_write(path);
  const nlohmann::json j{{"step", state.step}, {"time", state.time}, {"config_hash", hash}, {"n_particles", state.size()}};
  out << j.dump(2) << '\n';
  detail::finish(out, path);
}

/// Writes <stem>.csv, <stem>.svg and <stem>.json.
inline void write_snapshot(const ParticleState& state, const OTSolution& ot, const std::filesystem::path& stem,
                           const std::string& hash) {
  const Domain& domain = ot.diagram.domain;
  auto with = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  write_particles_csv(with(".csv"), state, domain);
  write_cells_svg(with(".svg"), state, ot);
  write_metadata(with(".json"), state, hash);
}

inline std::filesystem::path snapshot_stem(const std::filesystem::path& dir, std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "snapshot_%06zu", step);
  return dir / buf;
}

// ---------------------------------------------------------------------------
// Driver

struct RunSummary {
  std::size_t steps = 0;
  std::size_t snapshots = 0;
  double min_accepted_area = std::numeric_limits<double>::infinity();
  int max_newton_iterations = 0;
  ParticleState final_state;
};

/// Runs the simulation, streaming diagnostics.csv and snapshots into output_dir.
/// `extra` observers run after the built-in ones.
inline RunSummary run_simulation(const Simulation& sim, std::span<const Observer> extra = {},
                                 const SolverOptions& options = {}) {
  const std::filesystem::path dir = sim.config.output_dir;
  const std::string hash = config_hash(sim.config);
  {
    auto out = detail::open_for_write(dir / "config.json");
    out << to_json(sim.config).dump(2) << '\n';
    detail::finish(out, dir / "config.json");
  }
  const auto diag_path = dir / "diagnostics.csv";
  auto diag = detail::open_for_write(diag_path);
  diag << kDiagnosticsHeader << '\n';
  const VelocityField reference = sim.reference ? *sim.reference : VelocityField{};

  RunSummary summary;
  const auto ot0 = solve_at(sim.state, sim.domain, options);
  write_csv_row(diag, make_record(sim.state, ot0, sim.params, reference));
  summary.min_accepted_area = ot0.min_accepted_area;
  summary.max_newton_iterations = ot0.newton_iterations;

  std::vector<Observer> observers;
  observers.emplace_back([&](std::size_t k, double, const ParticleState& s, const OTSolution& ot) {
    write_csv_row(diag, make_record(s, ot, sim.params, reference));
    summary.min_accepted_area = std::min(summary.min_accepted_area, ot.min_accepted_area);
    summary.max_newton_iterations = std::max(summary.max_newton_iterations, ot.newton_iterations);
    summary.steps = k;
    if (k % sim.config.snapshot_every == 0) {
      write_snapshot(s, ot, snapshot_stem(dir, k), hash);
      ++summary.snapshots;
    }
  });
  observers.insert(observers.end(), extra.begin(), extra.end());
  ParticleState initial = sim.state;
  initial.weights_warm = ot0.weights;
  summary.final_state = run(initial, sim.params, sim.domain, observers, options);
  detail::finish(diag, diag_path);
  return summary;
}

}  // namespace lagflow
