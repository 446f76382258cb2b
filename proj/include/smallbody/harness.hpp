#pragma once

// Small-body convergence experiment: runs an eps-family against a reference fluid run and
// reduces each run to distances, weak-form gaps, cut-off pairings and hypothesis checks.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "smallbody/config.hpp"
#include "smallbody/cutoff.hpp"
#include "smallbody/fsi_solver.hpp"
#include "smallbody/snapshot.hpp"
#include "smallbody/stream.hpp"

namespace smallbody {

inline constexpr std::size_t kBankSize = 6;
inline constexpr double kEnergyTolerance = 1e-3;  // ledger residual budget, relative to E(0)

// ---- Cut-off oracle table --------------------------------------------------------------

struct CutoffCheckRow {
  double A = 0.0;
  double B = 0.0;
  std::string norm_name;
  double closed_form = 0.0;
  double quadrature = 0.0;
  [[nodiscard]] double alpha() const { return B / A; }
  [[nodiscard]] double rel_error() const {
    return std::abs(quadrature - closed_form) / std::abs(closed_form);
  }
};

/// Ten annulus specs with log-spaced ratios from e to 1e4 and inner radii from 0.01 to 10,
/// each compared on all three squared norms.
inline std::vector<CutoffCheckRow> verify_cutoffs(int refinement = 24) {
  std::vector<CutoffCheckRow> rows;
  const double la_lo = 1.0;
  const double la_hi = std::log(1e4);
  for (int n = 0; n < 10; ++n) {
    const double alpha = std::exp(la_lo + (la_hi - la_lo) * n / 9.0);
    const double a = std::pow(10.0, -2.0 + 3.0 * n / 9.0);
    const auto spec = AnnulusCutoffSpec::make(a, a * alpha);
    const CutoffNormsSq exact = annulus_closed_form_norms(spec);
    const CutoffNormsSq quad = annulus_quadrature_norms(spec, refinement);
    rows.push_back({a, a * alpha, "f_minus_one_l2_sq", exact.minus_one_l2_sq, quad.minus_one_l2_sq});
    rows.push_back({a, a * alpha, "gradient_l2_sq", exact.gradient_l2_sq, quad.gradient_l2_sq});
    rows.push_back({a, a * alpha, "weighted_hessian_l2_sq", exact.weighted_hessian_l2_sq,
                    quad.weighted_hessian_l2_sq});
  }
  return rows;
}

inline std::string cutoff_csv(const std::vector<CutoffCheckRow>& rows) {
  std::string out = "A,B,alpha,norm_name,closed_form,quadrature,rel_error\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%s,%.17g,%.17g,%.17g\n", r.A, r.B,
                  r.alpha(), r.norm_name.c_str(), r.closed_form, r.quadrature, r.rel_error());
    out += buf;
  }
  return out;
}

// ---- Test bank -------------------------------------------------------------------------

struct BankField {
  std::string name;
  VectorField phi;
  ScalarField psi;  // phi = grad^perp psi
};

/// Six divergence-free fields with Gaussian envelopes of width ~L/20, placed inside
/// [-L/4, L/4]^2: two bump translates, two dipoles, two seeded band-limited patches.
/// Each is scaled to max|phi| = 1.
inline std::vector<BankField> make_test_bank(Spectral& sp) {
  const Grid& g = sp.grid();
  const double L = g.L;
  const double sigma = L / 20.0;
  auto envelope = [&](Vec2 c, double s) {
    return [&g, c, s](Vec2 x) {
      const Vec2 d = g.displacement(c, x);
      return std::pair{d, std::exp(-d.dot(d) / (2.0 * s * s))};
    };
  };
  auto finish = [&](std::string name, ScalarField psi) {
    VectorField phi = perp_gradient(sp, psi);
    const double top = phi.max_abs();
    psi *= 1.0 / top;
    phi *= 1.0 / top;
    psi -= ScalarField(g, psi.mean());
    return BankField{std::move(name), std::move(phi), std::move(psi)};
  };
  auto random_patch = [&](Vec2 c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> coef(0.0, 1.0);
    std::vector<std::array<double, 4>> modes;
    for (int my = -3; my <= 3; ++my)
      for (int mx = 0; mx <= 3; ++mx)
        if ((mx != 0 || my > 0) && mx * mx + my * my <= 9) {
          const double a = coef(rng);
          const double b = coef(rng);
          modes.push_back({double(mx), double(my), a, b});
        }
    const double k = 2.0 * std::numbers::pi / (0.25 * L);
    const auto env = envelope(c, 1.25 * sigma);
    return ScalarField::sample(g, [&](Vec2 x) {
      const auto [d, e] = env(x);
      double v = 0.0;
      for (const auto& m : modes) {
        const double ph = k * (m[0] * d.x + m[1] * d.y);
        v += m[2] * std::cos(ph) + m[3] * std::sin(ph);
      }
      return e * v;
    });
  };
  auto bump = [&](Vec2 c) {
    const auto env = envelope(c, sigma);
    return ScalarField::sample(g, [&](Vec2 x) { return env(x).second; });
  };
  auto dipole = [&](Vec2 c, Vec2 axis) {
    const auto env = envelope(c, sigma);
    return ScalarField::sample(g, [&](Vec2 x) {
      const auto [d, e] = env(x);
      return d.dot(axis) / sigma * e;
    });
  };
  std::vector<BankField> bank;
  bank.push_back(finish("bump_near", bump({0.09 * L, 0.03 * L})));
  bank.push_back(finish("bump_far", bump({-0.125 * L, -0.09 * L})));
  bank.push_back(finish("dipole_x", dipole({0.03 * L, -0.06 * L}, {1.0, 0.0})));
  bank.push_back(finish("dipole_y", dipole({-0.06 * L, 0.125 * L}, {0.0, 1.0})));
  bank.push_back(finish("patch_a", random_patch({0.1 * L, 0.1 * L}, 101)));
  bank.push_back(finish("patch_b", random_patch({-0.1 * L, 0.0}, 202)));
  return bank;
}

// ---- Cut-off pairings ------------------------------------------------------------------

/// The frame recorded at time t; pairings are never interpolated between frames.
inline const Frame& frame_at(const std::vector<Frame>& frames, double t) {
  for (const Frame& f : frames)
    if (std::abs(f.time - t) <= 1e-9 * std::max(1.0, std::abs(t))) return f;
  std::ostringstream os;
  os << "no frame recorded at t = " << t << "; pairings are only taken at recorded times";
  throw ValidationError(os.str(), t);
}

/// integral w(t) . phi_eps(t), with phi_eps the cut-off modification of phi around the
/// body centre at t (ratio `alpha`). With no body, phi_eps = phi.
inline double xi_pairing(Spectral& sp, const Frame& f, const BankField& phi, double alpha) {
  if (f.body.empty()) return inner(f.w, phi.phi);
  const MovingCutoff mc(SmoothCutoffSpec::relaxed(f.body.eps, alpha),
                        PiecewiseLinearPath::constant(f.body.h, f.time + 1.0));
  const TestFunctionBundle b = build_test_function(sp, phi.phi, mc, f.time, phi.psi);
  return inner(f.w, b.phi_eps);
}

inline double xi_pairing(Spectral& sp, const std::vector<Frame>& frames, const BankField& phi,
                         double t, double alpha) {
  return xi_pairing(sp, frame_at(frames, t), phi, alpha);
}

struct ModulusFit {
  double K = 0.0;          // least squares through the origin of |dxi| against sqrt(dt) ||phi||_H3
  double max_ratio = 0.0;  // largest single |dxi| / (sqrt(dt) ||phi||_H3)
  double estimate_C = 0.0; // largest |xi - integral w . phi| / (||w|| ||phi||_H2 eps alpha / sqrt(ln alpha))
  std::size_t samples = 0;
};

/// Fits K in |<xi(t) - xi(s), phi>| <= K (t - s)^{1/2} ||phi||_{H^3} over all frame pairs
/// and bank members.
inline ModulusFit equicontinuity_modulus(Spectral& sp, const std::vector<Frame>& frames,
                                         const std::vector<BankField>& bank, double alpha) {
  if (frames.size() < 8)
    throw ValidationError("equicontinuity fit needs at least 8 recorded frames",
                          static_cast<double>(frames.size()));
  ModulusFit fit;
  double sxy = 0.0, sxx = 0.0;
  for (const BankField& b : bank) {
    const double h3 = sobolev_norm(sp, b.phi, 3.0);
    const double h2 = sobolev_norm(sp, b.phi, 2.0);
    std::vector<double> xi;
    for (const Frame& f : frames) {
      xi.push_back(xi_pairing(sp, f, b, alpha));
      if (!f.body.empty()) {
        const double la = std::log(alpha);
        const double bound = l2_norm(f.w) * h2 * f.body.eps * alpha / std::sqrt(la);
        if (bound > 0.0)
          fit.estimate_C =
              std::max(fit.estimate_C, std::abs(xi.back() - inner(f.w, b.phi)) / bound);
      }
    }
    for (std::size_t i = 0; i < frames.size(); ++i)
      for (std::size_t j = i + 1; j < frames.size(); ++j) {
        const double x = std::sqrt(frames[j].time - frames[i].time) * h3;
        const double y = std::abs(xi[j] - xi[i]);
        sxy += x * y;
        sxx += x * x;
        fit.max_ratio = std::max(fit.max_ratio, y / x);
        ++fit.samples;
      }
  }
  fit.K = sxx > 0.0 ? sxy / sxx : 0.0;
  return fit;
}

// ---- Reference run and windowed distance -----------------------------------------------

struct ReferenceRun {
  std::vector<double> times;
  std::vector<VectorField> u;
};

/// The fluid-only run from v0 on the same grid and time step, recorded at the same steps
/// as run_fsi.
inline ReferenceRun run_reference(const FluidConfig& cfg, const VectorField& v0,
                                  int record_every) {
  NsSolver ns(cfg);
  FluidState s = ns.initialize(v0);
  ReferenceRun ref;
  ref.times.push_back(s.time);
  ref.u.push_back(s.u);
  const long steps = cfg.steps();
  for (long n = 1; n <= steps; ++n) {
    ns.step(s);
    if (n % record_every == 0 || n == steps) {
      ref.times.push_back(s.time);
      ref.u.push_back(s.u);
    }
  }
  return ref;
}

/// ||w - v||_{L2(0,T; L2(K))} with K = [-a, a]^2, Simpson in time over the frames.
inline double window_distance(const std::vector<Frame>& frames, const ReferenceRun& ref,
                              double half_width) {
  if (frames.size() != ref.times.size())
    throw ValidationError("run and reference record different frame counts",
                          static_cast<double>(frames.size()));
  std::vector<double> times, sq;
  for (std::size_t n = 0; n < frames.size(); ++n) {
    if (std::abs(frames[n].time - ref.times[n]) > 1e-9)
      throw ValidationError("run and reference frame times differ", frames[n].time);
    const Grid& g = frames[n].w.grid();
    double acc = 0.0;
    for (int j = 0; j < g.N; ++j)
      for (int i = 0; i < g.N; ++i) {
        const Vec2 p = g.point(i, j);
        if (std::abs(p.x) > half_width || std::abs(p.y) > half_width) continue;
        const std::size_t k = g.index(i, j);
        const Vec2 d = frames[n].w.at(k) - ref.u[n].at(k);
        acc += d.dot(d);
      }
    times.push_back(frames[n].time);
    sq.push_back(acc * g.cell_area());
  }
  return std::sqrt(std::max(0.0, simpson(times, sq)));
}

/// Weak-form gaps against phi(t) = (1 - t / t_end)^2 phi_k, one per bank member. With
/// `alpha`, the test fields are cut off around the body.
inline std::array<double, kBankSize> weak_gaps(Spectral& sp, const std::vector<Frame>& frames,
                                               const std::vector<BankField>& bank, double nu,
                                               std::optional<double> alpha = std::nullopt) {
  std::array<double, kBankSize> out{};
  if (frames.empty()) return out;
  const double t_end = frames.back().time;
  const auto a = [t_end](double t) { return (1.0 - t / t_end) * (1.0 - t / t_end); };
  const auto da = [t_end](double t) { return -2.0 * (1.0 - t / t_end) / t_end; };
  std::optional<SmoothCutoffSpec> spec;
  if (alpha && !frames.front().body.empty())
    spec = SmoothCutoffSpec::relaxed(frames.front().body.eps, *alpha);
  for (std::size_t k = 0; k < kBankSize && k < bank.size(); ++k)
    out[k] = weak_form_residual(sp, frames, TimeDependentField::separable(bank[k].phi, a, da),
                                nu, spec);
  return out;
}

// ---- Sweep -----------------------------------------------------------------------------

struct SweepPlan {
  RunSettings base;                          // eps is overridden per run
  std::vector<double> eps{0.1, 0.05, 0.025}; // sorted to decreasing order by validate()
  double window = 0.4;                       // K = [-window, window]^2
  double alpha = SmoothCutoffSpec::kMinimumRatio;
  int workers = 0;                           // 0: one per run, capped by the hardware

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{"eps_list", "window", "alpha", "workers"};
    return k;
  }

  static SweepPlan from(const KeyValueConfig& c) {
    SweepPlan p;
    p.base = RunSettings::from(c, keys());
    p.eps = c.numbers("eps_list", p.eps);
    p.window = c.number("window", 0.25 * p.base.L);
    p.alpha = c.number("alpha", p.alpha);
    p.workers = static_cast<int>(c.integer("workers", p.workers));
    p.validate();
    return p;
  }

  /// Checks every run against the solver's body limits before anything is launched.
  void validate() {
    base.validate();
    std::sort(eps.begin(), eps.end(), std::greater<>());
    for (std::size_t k = 0; k < eps.size(); ++k) {
      if (!(eps[k] > 0.0)) throw ValidationError("sweep eps values must be positive", eps[k]);
      if (k > 0 && eps[k] == eps[k - 1]) throw ValidationError("duplicate sweep eps", eps[k]);
    }
    if (!(window > 0.0 && window <= 0.5 * base.L))
      throw ValidationError("window half-width must lie in (0, L/2]", window);
    if (!(alpha >= SmoothCutoffSpec::kMinimumRatio))
      throw ValidationError("cut-off ratio must be >= 16", alpha);
    for (double e : eps) {
      RunSettings s = base;
      s.eps = e;
      const FsiSolver probe(s.fsi());
      try {
        probe.check_body(make_body(s.shape, e, s.mass_rule));
      } catch (const ValidationError& err) {
        std::ostringstream os;
        os << "sweep refused at eps = " << e << ": " << err.what();
        throw ValidationError(os.str(), e);
      }
    }
  }

  [[nodiscard]] RunSettings settings_for(double e) const {
    RunSettings s = base;
    s.eps = e;
    return s;
  }
};

struct SweepRow {
  double eps = 0.0;
  double mass = 0.0;
  double m_over_eps2 = 0.0;
  double sqrt_m_hdot0 = 0.0;
  double E0 = 0.0;
  double distance = 0.0;
  std::array<double, kBankSize> gap{};         // plain test fields
  std::array<double, kBankSize> cutoff_gap{};  // test fields cut off around the body
  double sup_eps_hdot = 0.0;
  double energy_residual_max = 0.0;
  double xi_K = 0.0;
  double xi_max_ratio = 0.0;
  double xi_estimate_C = 0.0;
  double max_strain_solid = 0.0;
  double max_divergence = 0.0;
  bool flagged = false;  // energy residual above budget; left out of trend checks
};

struct HypothesisChecks {
  bool mass_ratio_increasing = true;     // m / eps^2 grows as eps shrinks
  bool initial_momentum_bounded = true;  // sqrt(m) |h'(0)| <= sqrt(E(0)) (with 5% slack)
  bool body_speed_decreasing = true;     // sup eps |h'| shrinks with eps
  bool distance_decreasing = true;
  double xi_K_spread = 1.0;              // max K / min K over the family
};

struct ConvergenceReport {
  std::string shape = "disk";
  double window = 0.0;
  double alpha = 0.0;
  std::vector<SweepRow> rows;  // decreasing eps
  std::array<double, kBankSize> reference_gap{};
  std::optional<double> fit_order;  // slope of log distance against log eps
  HypothesisChecks checks;
};

/// Least-squares slope of log y against log x; needs two usable points.
inline std::optional<double> log_log_slope(const std::vector<double>& x,
                                           const std::vector<double>& y) {
  std::vector<std::pair<double, double>> p;
  for (std::size_t k = 0; k < x.size(); ++k)
    if (x[k] > 0.0 && y[k] > 0.0) p.emplace_back(std::log(x[k]), std::log(y[k]));
  if (p.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (const auto& [a, b] : p) mx += a, my += b;
  mx /= p.size();
  my /= p.size();
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [a, b] : p) sxy += (a - mx) * (b - my), sxx += (a - mx) * (a - mx);
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

inline void evaluate_checks(ConvergenceReport& r) {
  HypothesisChecks c;
  std::vector<const SweepRow*> kept;
  for (const auto& row : r.rows) {
    if (row.sqrt_m_hdot0 > 1.05 * std::sqrt(row.E0)) c.initial_momentum_bounded = false;
    if (!row.flagged) kept.push_back(&row);
  }
  for (std::size_t k = 1; k < r.rows.size(); ++k)
    if (!(r.rows[k].m_over_eps2 > r.rows[k - 1].m_over_eps2)) c.mass_ratio_increasing = false;
  double kmin = 0.0, kmax = 0.0;
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    if (k > 0) {
      if (!(kept[k]->sup_eps_hdot < kept[k - 1]->sup_eps_hdot)) c.body_speed_decreasing = false;
      if (!(kept[k]->distance < kept[k - 1]->distance)) c.distance_decreasing = false;
    }
    kmin = k == 0 ? kept[k]->xi_K : std::min(kmin, kept[k]->xi_K);
    kmax = k == 0 ? kept[k]->xi_K : std::max(kmax, kept[k]->xi_K);
    xs.push_back(kept[k]->eps);
    ys.push_back(kept[k]->distance);
  }
  c.xi_K_spread = kmin > 0.0 ? kmax / kmin : (kmax > 0.0 ? INFINITY : 1.0);
  r.checks = c;
  r.fit_order = log_log_slope(xs, ys);
}

using SweepLog = std::function<void(const std::string&)>;
/// Called from the worker thread once a run finishes; `index` is the row position.
using RunHook = std::function<void(std::size_t index, const RunSettings&, const RunRecord&)>;

/// Runs the reference and every eps concurrently, then reduces to a report.
inline ConvergenceReport run_sweep(SweepPlan plan, const SweepLog& log = {},
                                   const RunHook& on_run = {}) {
  plan.validate();
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    log(msg);
  };

  const RunSettings& base = plan.base;
  Spectral sp(base.fluid().grid());
  const VectorField v0 = initial_velocity(sp, base);
  const std::vector<BankField> bank = make_test_bank(sp);

  const std::size_t runs = plan.eps.size();
  ConvergenceReport report;
  report.shape = to_string(base.shape);
  report.window = plan.window;
  report.alpha = plan.alpha;
  report.rows.resize(runs);
  std::vector<std::vector<Frame>> frames(runs);
  ReferenceRun reference;

  // Job 0 is the reference run; job k > 0 is eps[k - 1].
  std::vector<std::exception_ptr> errors(runs + 1);
  auto job = [&](std::size_t id) {
    try {
      Spectral local(base.fluid().grid());
      if (id == 0) {
        reference = run_reference(base.fluid(), v0, base.record_every);
        report.reference_gap = weak_gaps(local, [&] {
          std::vector<Frame> f;
          for (std::size_t n = 0; n < reference.times.size(); ++n)
            f.push_back({reference.times[n], reference.u[n], RigidBodyState{}});
          return f;
        }(), bank, base.nu);
        say("reference run done");
        return;
      }
      const std::size_t k = id - 1;
      const RunSettings s = plan.settings_for(plan.eps[k]);
      FsiSolver solver(s.fsi());
      ExtendedState st = solver.extend_by_projection(v0, make_body(s.shape, s.eps, s.mass_rule));
      SweepRow& row = report.rows[k];
      row.eps = s.eps;
      row.mass = st.body.mass;
      row.m_over_eps2 = st.body.mass / (s.eps * s.eps);
      row.sqrt_m_hdot0 = std::sqrt(st.body.mass) * st.body.hdot.norm();
      RunRecord rec = run_fsi(solver, std::move(st), s.record_every);
      row.E0 = rec.ledger.rows().front().E;
      row.energy_residual_max = rec.ledger.max_residual();
      row.flagged = row.energy_residual_max > kEnergyTolerance * row.E0;
      row.sup_eps_hdot = body_speed_supremum(rec);
      row.max_strain_solid = rec.max_strain_solid;
      row.max_divergence = rec.max_divergence;
      row.gap = weak_gaps(local, rec.frames, bank, s.nu);
      row.cutoff_gap = weak_gaps(local, rec.frames, bank, s.nu, plan.alpha);
      const ModulusFit fit = equicontinuity_modulus(local, rec.frames, bank, plan.alpha);
      row.xi_K = fit.K;
      row.xi_max_ratio = fit.max_ratio;
      row.xi_estimate_C = fit.estimate_C;
      if (on_run) on_run(k, s, rec);
      frames[k] = std::move(rec.frames);
      std::ostringstream os;
      os << "eps = " << s.eps << " done";
      say(os.str());
    } catch (...) {
      errors[id] = std::current_exception();
    }
  };

  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers =
      std::min(runs + 1, plan.workers > 0 ? static_cast<std::size_t>(plan.workers) : hw);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t id = next++; id <= runs; id = next++) job(id);
    });
  for (auto& t : pool) t.join();
  for (std::size_t id = 0; id <= runs; ++id) {
    if (!errors[id]) continue;
    if (id == 0) std::rethrow_exception(errors[id]);
    try {
      std::rethrow_exception(errors[id]);
    } catch (const ValidationError& e) {
      std::ostringstream os;
      os << "sweep run at eps = " << plan.eps[id - 1] << " failed: " << e.what();
      throw ValidationError(os.str(), e.measured());
    }
  }

  for (std::size_t k = 0; k < runs; ++k)
    report.rows[k].distance = window_distance(frames[k], reference, plan.window);
  evaluate_checks(report);
  return report;
}

// ---- Report emission -------------------------------------------------------------------

inline std::string report_csv(const ConvergenceReport& r) {
  std::string out = "eps,distance";
  for (std::size_t k = 0; k < kBankSize; ++k) out += ",gap_phi" + std::to_string(k);
  out += ",sup_eps_hdot,energy_residual_max,xi_K,flagged\n";
  if (r.rows.empty()) return out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& row : r.rows) {
    out += num(row.eps) + "," + num(row.distance);
    for (double g : row.gap) out += "," + num(g);
    out += "," + num(row.sup_eps_hdot) + "," + num(row.energy_residual_max) + "," +
           num(row.xi_K) + "," + (row.flagged ? "1" : "0") + "\n";
  }
  out += "fit_order," + (r.fit_order ? num(*r.fit_order) : std::string("nan")) + "\n";
  return out;
}

/// Distance against eps on log axes, with the gap and modulus columns alongside.
inline std::string plot_csv(const ConvergenceReport& r) {
  std::string out = "eps,log10_eps,distance,log10_distance,max_gap,max_cutoff_gap,xi_K\n";
  char buf[512];
  for (const auto& row : r.rows) {
    double g = 0.0, cg = 0.0;
    for (std::size_t k = 0; k < kBankSize; ++k) {
      g = std::max(g, row.gap[k]);
      cg = std::max(cg, row.cutoff_gap[k]);
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.eps,
                  std::log10(row.eps), row.distance,
                  row.distance > 0.0 ? std::log10(row.distance) : -INFINITY, g, cg, row.xi_K);
    out += buf;
  }
  return out;
}

inline nlohmann::ordered_json report_json(const ConvergenceReport& r) {
  nlohmann::ordered_json j;
  j["shape"] = r.shape;
  j["window"] = r.window;
  j["alpha"] = r.alpha;
  j["reference_gap"] = r.reference_gap;
  j["fit_order"] = r.fit_order ? nlohmann::ordered_json(*r.fit_order) : nlohmann::ordered_json();
  auto& c = j["checks"];
  c["mass_ratio_increasing"] = r.checks.mass_ratio_increasing;
  c["initial_momentum_bounded"] = r.checks.initial_momentum_bounded;
  c["body_speed_decreasing"] = r.checks.body_speed_decreasing;
  c["distance_decreasing"] = r.checks.distance_decreasing;
  c["xi_K_spread"] = r.checks.xi_K_spread;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json o;
    o["eps"] = row.eps;
    o["mass"] = row.mass;
    o["m_over_eps2"] = row.m_over_eps2;
    o["sqrt_m_hdot0"] = row.sqrt_m_hdot0;
    o["E0"] = row.E0;
    o["distance"] = row.distance;
    o["gap"] = row.gap;
    o["cutoff_gap"] = row.cutoff_gap;
    o["sup_eps_hdot"] = row.sup_eps_hdot;
    o["energy_residual_max"] = row.energy_residual_max;
    o["xi_K"] = row.xi_K;
    o["xi_max_ratio"] = row.xi_max_ratio;
    o["xi_estimate_C"] = row.xi_estimate_C;
    o["max_strain_solid"] = row.max_strain_solid;
    o["max_divergence"] = row.max_divergence;
    o["flagged"] = row.flagged;
    j["rows"].push_back(std::move(o));
  }
  return j;
}

inline ConvergenceReport report_from_json(const nlohmann::ordered_json& j) {
  ConvergenceReport r;
  r.shape = j.at("shape").get<std::string>();
  r.window = j.at("window").get<double>();
  r.alpha = j.at("alpha").get<double>();
  r.reference_gap = j.at("reference_gap").get<std::array<double, kBankSize>>();
  for (const auto& o : j.at("rows")) {
    SweepRow row;
    row.eps = o.at("eps").get<double>();
    row.mass = o.at("mass").get<double>();
    row.m_over_eps2 = o.at("m_over_eps2").get<double>();
    row.sqrt_m_hdot0 = o.at("sqrt_m_hdot0").get<double>();
    row.E0 = o.at("E0").get<double>();
    row.distance = o.at("distance").get<double>();
    row.gap = o.at("gap").get<std::array<double, kBankSize>>();
    row.cutoff_gap = o.at("cutoff_gap").get<std::array<double, kBankSize>>();
    row.sup_eps_hdot = o.at("sup_eps_hdot").get<double>();
    row.energy_residual_max = o.at("energy_residual_max").get<double>();
    row.xi_K = o.at("xi_K").get<double>();
    row.xi_max_ratio = o.at("xi_max_ratio").get<double>();
    row.xi_estimate_C = o.at("xi_estimate_C").get<double>();
    row.max_strain_solid = o.at("max_strain_solid").get<double>();
    row.max_divergence = o.at("max_divergence").get<double>();
    row.flagged = o.at("flagged").get<bool>();
    r.rows.push_back(row);
  }
  evaluate_checks(r);
  return r;
}

/// Writes report.csv, plot.csv and report.json into `dir` (created if missing).
inline void write_report(const ConvergenceReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "report.csv", report_csv(r));
  write_text_atomic(dir / "plot.csv", plot_csv(r));
  write_text_atomic(dir / "report.json", report_json(r).dump(2) + "\n");
}

}  // namespace smallbody
