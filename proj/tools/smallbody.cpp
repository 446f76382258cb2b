// Command-line driver: cut-off checks, fluid and coupled runs, eps-sweeps and reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "smallbody/harness.hpp"

namespace fs = std::filesystem;
using namespace smallbody;

namespace {

RunSettings load_settings(const std::string& path, std::optional<long long> seed,
                          const std::set<std::string>& extra = {}) {
  const KeyValueConfig cfg = path.empty() ? KeyValueConfig::parse("") : KeyValueConfig::load(path);
  RunSettings s = RunSettings::from(cfg, extra);
  if (seed) {
    if (*seed < 0) throw std::invalid_argument("--seed must be non-negative");
    s.override_seed(static_cast<std::uint64_t>(*seed));
  }
  return s;
}

std::string frame_name(long step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06ld.snap", step);
  return buf;
}

void write_manifest(const fs::path& dir, nlohmann::ordered_json manifest) {
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

int verify_cutoffs_cmd(int refinement, const std::string& out) {
  const auto rows = verify_cutoffs(refinement);
  const std::string csv = cutoff_csv(rows);
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.rel_error());
  if (out.empty()) {
    std::cout << csv;
  } else {
    fs::create_directories(out);
    write_text_atomic(fs::path(out) / "cutoffs.csv", csv);
  }
  std::cerr << "verify-cutoffs: " << rows.size() << " comparisons, max rel_error " << worst
            << "\n";
  return worst <= 1e-6 ? 0 : 1;
}

int run_ns_cmd(const std::string& config, int snapshot_every, const std::string& out,
               std::optional<long long> seed) {
  const RunSettings s = load_settings(config, seed);
  if (snapshot_every < 1) throw std::invalid_argument("--snapshot-every must be >= 1");
  const fs::path dir(out);
  fs::create_directories(dir);
  NsSolver ns(s.fluid());
  FluidState st = ns.initialize(initial_velocity(ns.spectral(), s));

  std::string energy = "t,kinetic,dissipation_rate\n";
  auto record = [&](long n) {
    const Energy e = ns.energy(st);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", st.time, e.kinetic, e.dissipation_rate);
    energy += buf;
    if (n % snapshot_every == 0 || n == s.fluid().steps())
      write_snapshot(dir / frame_name(n), Snapshot{st.time, st.u});
  };
  record(0);
  for (long n = 1; n <= s.fluid().steps(); ++n) {
    ns.step(st);
    record(n);
  }
  write_text_atomic(dir / "energy.csv", energy);
  nlohmann::ordered_json m;
  m["command"] = "run-ns";
  m["settings"] = settings_json(s);
  m["settings"].erase("eps");
  m["settings"].erase("mass_rule");
  m["settings"].erase("shape");
  m["settings"]["record_every"] = snapshot_every;
  m["final_time"] = st.time;
  write_manifest(dir, m);
  std::cerr << "run-ns: " << s.fluid().steps() << " steps to t = " << st.time << "\n";
  return 0;
}

int run_fsi_cmd(const std::string& config, const std::string& out,
                std::optional<long long> seed) {
  const RunSettings s = load_settings(config, seed);
  const fs::path dir(out);
  fs::create_directories(dir);
  FsiSolver solver(s.fsi());
  const VectorField u0 = initial_velocity(solver.spectral(), s);
  ExtendedState st = solver.extend_by_projection(u0, make_body(s.shape, s.eps, s.mass_rule));
  nlohmann::ordered_json m;
  m["command"] = "run-fsi";
  m["settings"] = settings_json(s);
  m["body"] = body_json(st.body);
  m["initial_trace_mismatch"] = solver.trace_mismatch(u0, st.body);

  long step = 0;
  const RunRecord rec = run_fsi(solver, std::move(st), s.record_every, [&](const ExtendedState& x) {
    write_snapshot(dir / frame_name(step), Snapshot{x.time, x.w});
    step = step == 0 ? s.record_every : std::min(step + s.record_every, s.fluid().steps());
  });
  write_text_atomic(dir / "ledger.csv", rec.ledger.csv());
  m["final_time"] = rec.ledger.rows().back().t;
  m["energy_residual_max"] = rec.ledger.max_residual();
  m["energy_residual_budget"] = kEnergyTolerance * rec.ledger.rows().front().E;
  m["sup_eps_hdot"] = body_speed_supremum(rec);
  m["max_strain_solid"] = rec.max_strain_solid;
  m["max_divergence"] = rec.max_divergence;
  write_manifest(dir, m);
  std::cerr << "run-fsi: " << rec.frames.size() << " frames, max energy residual "
            << rec.ledger.max_residual() << "\n";
  return 0;
}

int sweep_cmd(const std::string& config, const std::string& out, std::optional<long long> seed,
              std::optional<int> workers) {
  const KeyValueConfig cfg = config.empty() ? KeyValueConfig::parse("") : KeyValueConfig::load(config);
  SweepPlan plan = SweepPlan::from(cfg);
  if (seed) {
    if (*seed < 0) throw std::invalid_argument("--seed must be non-negative");
    plan.base.override_seed(static_cast<std::uint64_t>(*seed));
  }
  if (workers) plan.workers = *workers;
  plan.validate();
  const fs::path dir(out);
  fs::create_directories(dir);

  const ConvergenceReport report = run_sweep(
      plan, [](const std::string& msg) { std::cerr << "sweep: " << msg << "\n"; },
      [&](std::size_t, const RunSettings& s, const RunRecord& rec) {
        char name[64];
        std::snprintf(name, sizeof name, "ledger_eps_%.6g.csv", s.eps);
        write_text_atomic(dir / name, rec.ledger.csv());
      });
  write_report(report, dir);

  nlohmann::ordered_json m;
  m["command"] = "sweep";
  m["settings"] = settings_json(plan.base);
  m["settings"].erase("eps");
  m["eps_list"] = plan.eps;
  m["window"] = plan.window;
  m["alpha"] = plan.alpha;
  m["workers"] = plan.workers;
  write_manifest(dir, m);
  std::cout << report_csv(report);
  return 0;
}

int report_cmd(const std::string& in, const std::string& out) {
  std::ifstream is(in);
  if (!is) throw std::runtime_error("cannot open report: " + in);
  const auto j = nlohmann::ordered_json::parse(is);
  const ConvergenceReport r = report_from_json(j);
  const fs::path dir(out);
  fs::create_directories(dir);
  write_text_atomic(dir / "report.csv", report_csv(r));
  write_text_atomic(dir / "plot.csv", plot_csv(r));
  std::cout << report_csv(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small rigid body in a 2D periodic Navier-Stokes flow"};
  app.require_subcommand(1);

  int refinement = 24;
  std::string cutoff_out;
  auto* vc = app.add_subcommand("verify-cutoffs", "Compare cut-off norms with quadrature");
  vc->add_option("--refinement", refinement, "Panels per radial piece")->check(CLI::PositiveNumber);
  vc->add_option("--out", cutoff_out, "Directory for cutoffs.csv (stdout when omitted)");

  std::string config, out;
  int snapshot_every = 10;
  std::optional<long long> seed;
  auto* ns = app.add_subcommand("run-ns", "Fluid-only reference run");
  ns->add_option("--config", config, "Settings file")->check(CLI::ExistingFile);
  ns->add_option("--snapshot-every", snapshot_every, "Steps between snapshots");
  ns->add_option("--out", out, "Output directory")->required();
  ns->add_option("--seed", seed, "Seed for random initial data");

  auto* fsi = app.add_subcommand("run-fsi", "Coupled fluid and rigid-body run");
  fsi->add_option("--config", config, "Settings file")->check(CLI::ExistingFile);
  fsi->add_option("--out", out, "Output directory")->required();
  fsi->add_option("--seed", seed, "Seed for random initial data");

  std::optional<int> workers;
  auto* sw = app.add_subcommand("sweep", "eps-family against the fluid-only reference");
  sw->add_option("--config", config, "Settings file (run keys plus eps_list, window, alpha, workers)")
      ->check(CLI::ExistingFile);
  sw->add_option("--out", out, "Output directory")->required();
  sw->add_option("--seed", seed, "Seed for random initial data");
  sw->add_option("--workers", workers, "Concurrent runs");

  std::string in;
  auto* rp = app.add_subcommand("report", "Rebuild report.csv and plot.csv from report.json");
  rp->add_option("--in", in, "report.json from a sweep")->required()->check(CLI::ExistingFile);
  rp->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*vc) return verify_cutoffs_cmd(refinement, cutoff_out);
    if (*ns) return run_ns_cmd(config, snapshot_every, out, seed);
    if (*fsi) return run_fsi_cmd(config, out, seed);
    if (*sw) return sweep_cmd(config, out, seed, workers);
    if (*rp) return report_cmd(in, out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << " (measured " << e.measured() << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
