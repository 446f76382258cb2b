#pragma once

// Rigid body in a viscous fluid on the periodic square, fictitious-domain form: a single
// extended velocity lives on the whole torus, the body is a one-cell mollified mask, and
// each step ends with a momentum-conserving projection onto rigid motion inside the mask.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "smallbody/cutoff.hpp"
#include "smallbody/grid.hpp"
#include "smallbody/ns_solver.hpp"
#include "smallbody/spectral.hpp"
#include "smallbody/stream.hpp"

namespace smallbody {

enum class BodyShape { none, disk, ellipse };

inline std::string to_string(BodyShape s) {
  switch (s) {
    case BodyShape::none: return "none";
    case BodyShape::disk: return "disk";
    case BodyShape::ellipse: return "ellipse";
  }
  return "?";
}

inline BodyShape parse_shape(const std::string& s) {
  if (s == "none") return BodyShape::none;
  if (s == "disk") return BodyShape::disk;
  if (s == "ellipse") return BodyShape::ellipse;
  throw std::invalid_argument("unknown body shape '" + s + "' (expected disk, ellipse or none)");
}

/// Body mass as a function of eps: either m = pi eps^p or a fixed density.
struct MassRule {
  enum class Kind { eps_power, density };
  Kind kind = Kind::eps_power;
  double value = 1.5;

  /// Parses "eps_pow=<p>" or "density=<rho>".
  static MassRule parse(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("mass rule must be key=value: " + text);
    const std::string key = text.substr(0, eq);
    const double v = std::stod(text.substr(eq + 1));
    if (key == "eps_pow") return {Kind::eps_power, v};
    if (key == "density") return {Kind::density, v};
    throw std::invalid_argument("unknown mass rule '" + key + "' (expected eps_pow or density)");
  }
  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    os.precision(17);
    os << (kind == Kind::eps_power ? "eps_pow=" : "density=") << value;
    return os.str();
  }
  [[nodiscard]] double mass(double eps, double area) const {
    return kind == Kind::eps_power ? std::numbers::pi * std::pow(eps, value) : value * area;
  }
};

struct RigidBodyState {
  BodyShape shape = BodyShape::none;
  double eps = 0.0;
  double semi_a = 0.0;  // body-frame x semi-axis
  double semi_b = 0.0;  // body-frame y semi-axis
  double density = 1.0;
  double mass = 0.0;
  double inertia = 0.0;
  Vec2 h{};
  Vec2 hdot{};
  double theta = 0.0;
  double thetadot = 0.0;

  [[nodiscard]] bool empty() const { return shape == BodyShape::none; }
  [[nodiscard]] double area() const { return std::numbers::pi * semi_a * semi_b; }

  /// Signed distance to the body boundary for a body-frame point (exact for the disk,
  /// first-order accurate near the boundary for the ellipse).
  [[nodiscard]] double signed_distance(Vec2 p) const {
    if (shape == BodyShape::disk) return p.norm() - semi_a;
    const double k0 = std::hypot(p.x / semi_a, p.y / semi_b);
    const double k1 = std::hypot(p.x / (semi_a * semi_a), p.y / (semi_b * semi_b));
    if (k1 == 0.0) return -std::min(semi_a, semi_b);
    return k0 * (k0 - 1.0) / k1;
  }
};

/// Body at the origin at rest with the given initial velocities. Shapes sit inside D(0, eps):
/// the disk has radius eps, the ellipse semi-axes eps and eps/2.
inline RigidBodyState make_body(BodyShape shape, double eps, const MassRule& rule,
                                Vec2 hdot0 = {}, double thetadot0 = 0.0) {
  RigidBodyState b;
  b.shape = shape;
  if (shape == BodyShape::none) return b;
  if (!(eps > 0.0)) throw ValidationError("body size eps must be positive", eps);
  b.eps = eps;
  b.semi_a = eps;
  b.semi_b = shape == BodyShape::ellipse ? 0.5 * eps : eps;
  b.mass = rule.mass(eps, b.area());
  b.density = b.mass / b.area();
  b.inertia = b.density * b.area() * (b.semi_a * b.semi_a + b.semi_b * b.semi_b) / 4.0;
  b.hdot = hdot0;
  b.thetadot = thetadot0;
  return b;
}

/// One-cell mollified indicator clamp(1/2 - sd/dx, 0, 1) of the body at its current pose.
inline ScalarField body_mask(const Grid& g, const RigidBodyState& body) {
  ScalarField chi(g);
  if (body.empty()) return chi;
  const double c = std::cos(body.theta);
  const double s = std::sin(body.theta);
  const double dx = g.dx();
  for (int j = 0; j < g.N; ++j)
    for (int i = 0; i < g.N; ++i) {
      const Vec2 r = g.displacement(body.h, g.point(i, j));
      const Vec2 local{c * r.x + s * r.y, -s * r.x + c * r.y};
      chi(i, j) = std::clamp(0.5 - body.signed_distance(local) / dx, 0.0, 1.0);
    }
  return chi;
}

inline ScalarField extended_density(const ScalarField& chi, double density) {
  ScalarField rho = chi;
  for (double& v : rho.data()) v = 1.0 + (density - 1.0) * v;
  return rho;
}

struct ExtendedState {
  double time = 0.0;
  VectorField w;
  ScalarField chi;
  ScalarField rho_tilde;
  RigidBodyState body;
  /// Last pressures of the two projections per step; warm starts for the next solve.
  std::array<ScalarField, 2> pressure;
};

struct ProjectionStats {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Projection onto divergence-free fields orthogonal in the rho-weighted inner product:
/// w = u - grad(p) / rho with div(grad(p) / rho) = div u. Solved by conjugate gradients
/// preconditioned with the inverse Laplacian; `p` holds the initial guess and the result.
inline VectorField weighted_leray_project(Spectral& sp, const VectorField& u,
                                          const ScalarField& rho, ScalarField& p,
                                          ProjectionStats* stats = nullptr,
                                          double tolerance = 1e-12, int max_iterations = 5000) {
  const Grid& g = sp.grid();
  if (p.grid() != g) p = ScalarField(g);
  auto flux = [&](const ScalarField& f) {
    const SpectralField fh = sp.forward(f);
    VectorField gp(sp.inverse(d_dx(sp, fh)), sp.inverse(d_dy(sp, fh)));
    for (std::size_t k = 0; k < rho.data().size(); ++k) {
      gp.x[k] /= rho[k];
      gp.y[k] /= rho[k];
    }
    return gp;
  };
  auto apply = [&](const ScalarField& f) {
    ScalarField out = divergence(sp, flux(f));
    out *= -1.0;
    return out;
  };
  auto precondition = [&](const ScalarField& r) {
    SpectralField rh = sp.forward(r);
    sp.apply(rh, [&](double kx, double ky, int c, int row) {
      const double k2 = kx * kx + ky * ky;
      return (k2 == 0.0 || sp.is_nyquist(c, row)) ? Complex{} : Complex{1.0 / k2, 0.0};
    });
    return sp.inverse(rh);
  };
  auto dot = [](const ScalarField& a, const ScalarField& b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k) acc += a[k] * b[k];
    return acc;
  };

  ScalarField b = divergence(sp, u);
  b *= -1.0;
  const double bnorm = std::sqrt(dot(b, b));
  ProjectionStats st;
  if (bnorm == 0.0) {
    p = ScalarField(g);
    if (stats) *stats = st;
    return u;
  }
  ScalarField r = b - apply(p);
  ScalarField z = precondition(r);
  ScalarField d = z;
  double rz = dot(r, z);
  double rnorm = std::sqrt(dot(r, r));
  while (rnorm > tolerance * bnorm && st.iterations < max_iterations) {
    const ScalarField ad = apply(d);
    const double step = rz / dot(d, ad);
    for (std::size_t k = 0; k < r.data().size(); ++k) {
      p[k] += step * d[k];
      r[k] -= step * ad[k];
    }
    z = precondition(r);
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t k = 0; k < d.data().size(); ++k) d[k] = z[k] + beta * d[k];
    rnorm = std::sqrt(dot(r, r));
    ++st.iterations;
  }
  st.relative_residual = rnorm / bnorm;
  if (stats) *stats = st;
  if (rnorm > tolerance * bnorm)
    throw ValidationError("weighted projection did not converge", st.relative_residual);
  return u - flux(p);
}

struct RigidMotion {
  Vec2 V{};
  double omega = 0.0;
  [[nodiscard]] Vec2 at(Vec2 r) const { return V + omega * r.perp(); }
};

struct SolidMomentum {
  Vec2 linear{};
  double angular = 0.0;
};

/// Linear and angular momentum of rho~ w over the cells the body touches (chi > 0).
inline SolidMomentum solid_momentum(const VectorField& w, const ScalarField& chi,
                                    const ScalarField& rho_tilde, Vec2 h) {
  const Grid& g = w.grid();
  SolidMomentum m;
  for (int j = 0; j < g.N; ++j)
    for (int i = 0; i < g.N; ++i) {
      const std::size_t k = g.index(i, j);
      if (chi[k] == 0.0) continue;
      const double mu = rho_tilde[k];
      const Vec2 r = g.displacement(h, g.point(i, j));
      m.linear = m.linear + mu * w.at(k);
      m.angular += mu * r.perp().dot(w.at(k));
    }
  m.linear = g.cell_area() * m.linear;
  m.angular *= g.cell_area();
  return m;
}

/// Rigid motion U minimising sum rho~ chi |U - q|^2. The blend q + chi (U - q) then keeps
/// the solid momenta and cannot raise integral rho~ |w|^2.
inline RigidMotion rigid_fit(const VectorField& q, const ScalarField& chi,
                             const ScalarField& rho_tilde, Vec2 h) {
  const Grid& g = q.grid();
  double m00 = 0.0, m02 = 0.0, m12 = 0.0, m22 = 0.0;
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  for (int j = 0; j < g.N; ++j)
    for (int i = 0; i < g.N; ++i) {
      const std::size_t k = g.index(i, j);
      if (chi[k] == 0.0) continue;
      const double a = rho_tilde[k] * chi[k];
      const Vec2 rp = g.displacement(h, g.point(i, j)).perp();
      const Vec2 v = q.at(k);
      m00 += a;
      m02 += a * rp.x;
      m12 += a * rp.y;
      m22 += a * rp.dot(rp);
      b0 += a * v.x;
      b1 += a * v.y;
      b2 += a * rp.dot(v);
    }
  if (m00 == 0.0) return {};
  // [m00 0 m02; 0 m00 m12; m02 m12 m22] [Vx Vy W] = [b0 b1 b2]; eliminate Vx, Vy.
  const double schur = m22 - (m02 * m02 + m12 * m12) / m00;
  const double rhs = b2 - (m02 * b0 + m12 * b1) / m00;
  const double omega = schur > 0.0 ? rhs / schur : 0.0;
  return {{(b0 - m02 * omega) / m00, (b1 - m12 * omega) / m00}, omega};
}

/// Largest |D(w)| over cells whose four neighbours lie fully inside the mask, by central
/// differences.
inline double max_strain_on_eroded_mask(const VectorField& w, const ScalarField& chi) {
  const Grid& g = w.grid();
  const int n = g.N;
  const double inv = 1.0 / (2.0 * g.dx());
  auto id = [&](int i, int j) { return g.index((i + n) % n, (j + n) % n); };
  double worst = 0.0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (chi[id(i, j)] < 1.0 || chi[id(i + 1, j)] < 1.0 || chi[id(i - 1, j)] < 1.0 ||
          chi[id(i, j + 1)] < 1.0 || chi[id(i, j - 1)] < 1.0)
        continue;
      const double ux = (w.x[id(i + 1, j)] - w.x[id(i - 1, j)]) * inv;
      const double uy = (w.x[id(i, j + 1)] - w.x[id(i, j - 1)]) * inv;
      const double vx = (w.y[id(i + 1, j)] - w.y[id(i - 1, j)]) * inv;
      const double vy = (w.y[id(i, j + 1)] - w.y[id(i, j - 1)]) * inv;
      const double off = 0.5 * (uy + vx);
      worst = std::max(worst, std::sqrt(ux * ux + vy * vy + 2.0 * off * off));
    }
  return worst;
}

struct StepDiagnostics {
  SolidMomentum momentum_before;      // entering the rigid overwrite
  SolidMomentum momentum_after;       // right after it
  double total_energy_before = 0.0;   // integral rho~ |w|^2 around the overwrite
  double total_energy_after = 0.0;
  double max_strain_solid = 0.0;      // eroded mask, before the final projection
  double relative_divergence = 0.0;   // after the final projection
  int projection_iterations = 0;      // conjugate-gradient iterations, both projections
  RigidMotion rigid;
};

struct FsiConfig {
  FluidConfig fluid;
  BodyShape shape = BodyShape::disk;
  double eps = 0.1;
  MassRule mass_rule;
  int guard_cells = 2;
};

class FsiSolver {
 public:
  explicit FsiSolver(FsiConfig cfg) : cfg_(std::move(cfg)), ns_(cfg_.fluid) {}

  [[nodiscard]] const FsiConfig& config() const { return cfg_; }
  [[nodiscard]] const Grid& grid() const { return ns_.grid(); }
  [[nodiscard]] Spectral& spectral() { return ns_.spectral(); }
  [[nodiscard]] NsSolver& fluid() { return ns_; }

  /// Refuses bodies below four cells per eps or inside the boundary guard band.
  void check_body(const RigidBodyState& b) const {
    if (b.empty()) return;
    const Grid& g = grid();
    if (b.eps < 4.0 * g.dx() * (1.0 - 1e-12)) {
      std::ostringstream os;
      os << "body below the resolution floor: eps = " << b.eps << " < 4 L/N = " << 4.0 * g.dx();
      throw ValidationError(os.str(), b.eps / g.dx());
    }
    const double reach = std::max(std::abs(b.h.x), std::abs(b.h.y)) + b.eps;
    const double limit = 0.5 * g.L - cfg_.guard_cells * g.dx();
    if (reach > limit) {
      std::ostringstream os;
      os << "body mask reaches the boundary guard band: extent " << reach << " > " << limit;
      throw ValidationError(os.str(), reach);
    }
  }

  /// Normal-trace mismatch of u0 against the body's rigid motion, in the weak sense:
  /// integral |(u0 - U) . grad chi| / (scale * integral |grad chi|).
  double trace_mismatch(const VectorField& u0, const RigidBodyState& body) {
    if (body.empty()) return 0.0;
    const Grid& g = grid();
    const ScalarField chi = body_mask(g, body);
    const VectorField gc = gradient(spectral(), chi);
    const RigidMotion U{body.hdot, body.thetadot};
    double num = 0.0, den = 0.0, scale = 0.0;
    for (int j = 0; j < g.N; ++j)
      for (int i = 0; i < g.N; ++i) {
        const std::size_t k = g.index(i, j);
        const Vec2 r = g.displacement(body.h, g.point(i, j));
        const Vec2 u = u0.at(k);
        const Vec2 rigid = U.at(r);
        if (chi[k] < 1.0) scale = std::max(scale, u.norm());
        if (chi[k] > 0.0) scale = std::max(scale, rigid.norm());
        const Vec2 grad = gc.at(k);
        if (chi[k] > 0.0 && chi[k] < 1.0) {
          num += std::abs((u - rigid).dot(grad));
          den += grad.norm();
        }
      }
    if (den == 0.0 || scale == 0.0) return 0.0;
    return num / (scale * den);
  }

  /// Checks compatibility of u0 with the body's initial motion and builds the extended
  /// velocity: u0 outside, the rigid motion inside, then projected to divergence-free.
  ExtendedState validate_initial_data(const VectorField& u0, RigidBodyState body,
                                      double tolerance = 0.1) {
    require_same_grid(u0.grid(), grid());
    check_body(body);
    const double mismatch = trace_mismatch(u0, body);
    if (mismatch > tolerance) {
      std::ostringstream os;
      os << "initial data incompatible with the body motion: relative normal flux mismatch "
         << mismatch;
      throw ValidationError(os.str(), mismatch);
    }
    return assemble(u0, body, RigidMotion{body.hdot, body.thetadot});
  }

  /// Extended initial data with the rigid motion taken from the solid momenta of u0.
  ExtendedState extend_by_projection(const VectorField& u0, RigidBodyState body) {
    require_same_grid(u0.grid(), grid());
    check_body(body);
    const ScalarField chi = body_mask(grid(), body);
    const RigidMotion U =
        body.empty() ? RigidMotion{}
                     : rigid_fit(u0, chi, extended_density(chi, body.density), body.h);
    body.hdot = U.V;
    body.thetadot = U.omega;
    return assemble(u0, body, U);
  }

  /// One coupled step. (a) momentum step with the density at time t; (c) the body moves
  /// with its current rigid velocity, so mask and field describe the same instant;
  /// (b) divergence-free projection, rigid fit and overwrite on the moved mask, and a final
  /// projection. The fitted motion becomes the body velocity for the next step.
  StepDiagnostics step(ExtendedState& s) {
    StepDiagnostics d;
    Spectral& sp = spectral();
    VectorField q = ns_.step_velocity(s.w);
    if (!s.body.empty()) {
      // (a) density rho~ = 1 + (rho~ - 1): the unit part takes the fluid increment, the
      // excess mass keeps its rigid motion, whose Eulerian change is -dt Omega V^perp.
      const Vec2 drift = -cfg_.fluid.dt * s.body.thetadot * s.body.hdot.perp();
      for (std::size_t k = 0; k < q.x.data().size(); ++k) {
        const double unit = 1.0 / s.rho_tilde[k];
        q.x[k] = s.w.x[k] + unit * (q.x[k] - s.w.x[k]) + (1.0 - unit) * drift.x;
        q.y[k] = s.w.y[k] + unit * (q.y[k] - s.w.y[k]) + (1.0 - unit) * drift.y;
      }

      // (c) advect the body.
      s.body.h = s.body.h + cfg_.fluid.dt * s.body.hdot;
      s.body.theta += cfg_.fluid.dt * s.body.thetadot;
      check_body(s.body);
      s.chi = body_mask(grid(), s.body);
      s.rho_tilde = extended_density(s.chi, s.body.density);

      ProjectionStats st;
      q = weighted_leray_project(sp, q, s.rho_tilde, s.pressure[0], &st);
      d.projection_iterations += st.iterations;

      // (b) rigid projection on the solid, then back to divergence-free.
      const RigidBodyState& b = s.body;
      d.momentum_before = solid_momentum(q, s.chi, s.rho_tilde, b.h);
      d.total_energy_before = weighted_energy(q, s.rho_tilde);
      d.rigid = rigid_fit(q, s.chi, s.rho_tilde, b.h);
      overwrite(q, s.chi, b.h, d.rigid);
      d.momentum_after = solid_momentum(q, s.chi, s.rho_tilde, b.h);
      d.total_energy_after = weighted_energy(q, s.rho_tilde);
      d.max_strain_solid = max_strain_on_eroded_mask(q, s.chi);
      q = weighted_leray_project(sp, q, s.rho_tilde, s.pressure[1], &st);
      d.projection_iterations += st.iterations;
      s.body.hdot = d.rigid.V;
      s.body.thetadot = d.rigid.omega;
    }
    s.w = std::move(q);
    s.time += cfg_.fluid.dt;
    d.relative_divergence = relative_divergence(sp, s.w);
    return d;
  }

  /// integral rho~ |w|^2
  double energy(const ExtendedState& s) const { return weighted_energy(s.w, s.rho_tilde); }
  /// 4 nu integral |D(w)|^2
  double dissipation_rate(const ExtendedState& s) {
    return 4.0 * cfg_.fluid.nu * strain_norm_sq(spectral(), s.w);
  }
  /// dissipation_rate integrated exactly over one viscous step, per mode, divided by dt.
  double step_dissipation_rate(const ExtendedState& s) {
    return ns_.step_averaged_dissipation(s.w);
  }

  static double weighted_energy(const VectorField& w, const ScalarField& rho) {
    double acc = 0.0;
    for (std::size_t k = 0; k < rho.data().size(); ++k)
      acc += rho[k] * (w.x[k] * w.x[k] + w.y[k] * w.y[k]);
    return acc * w.grid().cell_area();
  }


 private:
  void overwrite(VectorField& q, const ScalarField& chi, Vec2 h, const RigidMotion& U) const {
    const Grid& g = grid();
    for (int j = 0; j < g.N; ++j)
      for (int i = 0; i < g.N; ++i) {
        const std::size_t k = g.index(i, j);
        if (chi[k] == 0.0) continue;
        const Vec2 u = U.at(g.displacement(h, g.point(i, j)));
        q.x[k] += chi[k] * (u.x - q.x[k]);
        q.y[k] += chi[k] * (u.y - q.y[k]);
      }
  }

  ExtendedState assemble(const VectorField& u0, const RigidBodyState& body, const RigidMotion& U) {
    ExtendedState s;
    s.body = body;
    s.chi = body_mask(grid(), body);
    s.rho_tilde = extended_density(s.chi, body.density);
    VectorField w = u0;
    if (!body.empty()) {
      overwrite(w, s.chi, body.h, U);
      ScalarField p;
      w = weighted_leray_project(spectral(), w, s.rho_tilde, p);
    }
    const double div = relative_divergence(spectral(), w);
    if (div > 1e-10) throw ValidationError("extended initial velocity is not divergence-free", div);
    s.w = std::move(w);
    return s;
  }

  FsiConfig cfg_;
  NsSolver ns_;
};

// ---- Energy ledger -----------------------------------------------------------------------

struct LedgerRow {
  double t = 0.0;
  double E = 0.0;
  double D = 0.0;
  double residual = 0.0;
  Vec2 h{};
  Vec2 hdot{};
  double theta = 0.0;
  double thetadot = 0.0;
};

/// E(t) = integral rho~ |w|^2, D(t) = 4 nu integral_0^t integral |D(w)|^2 (trapezoid in time
/// over the rates passed to update), r = E + D - E(0).
class EnergyLedger {
 public:
  void update(const ExtendedState& s, double dissipation_rate) {
    LedgerRow row;
    row.t = s.time;
    row.E = FsiSolver::weighted_energy(s.w, s.rho_tilde);
    if (rows_.empty()) {
      row.D = 0.0;
    } else {
      const LedgerRow& prev = rows_.back();
      row.D = prev.D + 0.5 * (row.t - prev.t) * (last_rate_ + dissipation_rate);
    }
    last_rate_ = dissipation_rate;
    row.residual = rows_.empty() ? 0.0 : row.E + row.D - rows_.front().E;
    row.h = s.body.h;
    row.hdot = s.body.hdot;
    row.theta = s.body.theta;
    row.thetadot = s.body.thetadot;
    rows_.push_back(row);
  }

  [[nodiscard]] const std::vector<LedgerRow>& rows() const { return rows_; }
  [[nodiscard]] double max_residual() const {
    double m = 0.0;
    for (const auto& r : rows_) m = std::max(m, r.residual);
    return m;
  }

  [[nodiscard]] std::string csv() const {
    std::string out = "t,E,D,residual,h_x,h_y,hdot_x,hdot_y,theta,thetadot\n";
    char buf[512];
    for (const auto& r : rows_) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    r.t, r.E, r.D, r.residual, r.h.x, r.h.y, r.hdot.x, r.hdot.y, r.theta,
                    r.thetadot);
      out += buf;
    }
    return out;
  }

 private:
  std::vector<LedgerRow> rows_;
  double last_rate_ = 0.0;
};

/// Feeds the step-averaged rate: the overwrite re-creates interface modes every step and the
/// integrating factor damps them within one step, so instantaneous rates over-count.
inline void energy_ledger_update(FsiSolver& solver, const ExtendedState& s, EnergyLedger& ledger) {
  ledger.update(s, solver.step_dissipation_rate(s));
}

// ---- Runs ------------------------------------------------------------------------------

struct Frame {
  double time = 0.0;
  VectorField w;
  RigidBodyState body;
};

struct RunRecord {
  FsiConfig config;
  std::vector<Frame> frames;
  EnergyLedger ledger;
  double max_strain_solid = 0.0;
  double max_divergence = 0.0;
};

/// Steps to the configured horizon, keeping a frame every `record_every` steps (and the last).
inline RunRecord run_fsi(FsiSolver& solver, ExtendedState s, int record_every,
                         const std::function<void(const ExtendedState&)>& on_frame = {}) {
  RunRecord rec;
  rec.config = solver.config();
  const long steps = solver.config().fluid.steps();
  auto keep = [&] {
    rec.frames.push_back({s.time, s.w, s.body});
    if (on_frame) on_frame(s);
  };
  energy_ledger_update(solver, s, rec.ledger);
  keep();
  for (long n = 1; n <= steps; ++n) {
    const StepDiagnostics d = solver.step(s);
    rec.max_strain_solid = std::max(rec.max_strain_solid, d.max_strain_solid);
    rec.max_divergence = std::max(rec.max_divergence, d.relative_divergence);
    energy_ledger_update(solver, s, rec.ledger);
    if (n % record_every == 0 || n == steps) keep();
  }
  return rec;
}

/// sup over recorded steps of eps |h'(t)|.
inline double body_speed_supremum(const RunRecord& rec) {
  double m = 0.0;
  for (const auto& r : rec.ledger.rows()) m = std::max(m, rec.config.eps * r.hdot.norm());
  if (rec.config.shape == BodyShape::none) return 0.0;
  return m;
}

// ---- Weak-form residual ----------------------------------------------------------------

/// A test field phi(t, x) with its time derivative.
struct TimeDependentField {
  std::function<VectorField(double)> value;
  std::function<VectorField(double)> time_derivative;

  /// phi(t, x) = a(t) phi0(x)
  static TimeDependentField separable(VectorField phi0, std::function<double(double)> a,
                                      std::function<double(double)> da) {
    auto shared = std::make_shared<VectorField>(std::move(phi0));
    return {[shared, a](double t) { return a(t) * *shared; },
            [shared, da](double t) { return da(t) * *shared; }};
  }
};

/// Composite Simpson over uniformly spaced samples (trapezoid on a trailing odd interval).
inline double simpson(const std::vector<double>& t, const std::vector<double>& f) {
  const std::size_t n = f.size();
  if (n < 2) return 0.0;
  double acc = 0.0;
  std::size_t k = 0;
  for (; k + 2 < n; k += 2) acc += (t[k + 2] - t[k]) / 6.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
  if (k + 1 < n) acc += 0.5 * (t[k + 1] - t[k]) * (f[k] + f[k + 1]);
  return acc;
}

/// Signed weak-form pairing
///   -int int rho~ w . (d_t phi_e + (w . grad) phi_e) + 2 nu int int D(w) : D(phi_e)
///   - int rho~(0) w(0) . phi_e(0)
/// over the recorded frames. With `cutoff`, phi_e is the cut-off modification of phi around
/// the body's centre (using the recorded h'); otherwise phi_e = phi.
inline double weak_form_pairing(Spectral& sp, const std::vector<Frame>& frames,
                                const TimeDependentField& phi, double nu,
                                const std::optional<SmoothCutoffSpec>& cutoff = std::nullopt) {
  if (frames.empty()) return 0.0;
  const Grid& g = sp.grid();
  const VectorField last = phi.value(frames.back().time);
  const VectorField first = phi.value(frames.front().time);
  const double scale = std::max(first.max_abs(), 1e-300);
  if (first.max_abs() > 0.0 && last.max_abs() > 1e-12 * scale)
    throw ValidationError("test field does not vanish at the final time", last.max_abs() / scale);

  std::vector<double> times;
  std::vector<double> integrand;
  double initial = 0.0;
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const Frame& f = frames[n];
    require_same_grid(g, f.w.grid());
    VectorField p = phi.value(f.time);
    if (p.max_abs() > 0.0 && relative_divergence(sp, p) > 1e-8)
      throw ValidationError("test field is not divergence-free", relative_divergence(sp, p));
    VectorField dp = phi.time_derivative(f.time);
    if (cutoff && !f.body.empty()) {
      const ScalarField psi = biot_savart_stream(sp, p);
      const ScalarField dpsi = biot_savart_stream(sp, dp);
      const SpectralField psi_hat = sp.forward(psi);
      const Vec2 h = f.body.h;
      const Vec2 hdot = f.body.hdot;
      const double psi_h = interpolate(sp, psi_hat, h);
      const Vec2 grad_psi_h{interpolate(sp, d_dx(sp, psi_hat), h),
                            interpolate(sp, d_dy(sp, psi_hat), h)};
      const double dpsi_h = interpolate(sp, sp.forward(dpsi), h);
      ScalarField q(g), dq(g);
      for (int j = 0; j < g.N; ++j)
        for (int i = 0; i < g.N; ++i) {
          const std::size_t k = g.index(i, j);
          const Vec2 r = g.displacement(h, g.point(i, j));
          const double eta = (*cutoff)(r);
          const double deta = -hdot.dot(cutoff->gradient(r));
          const double pe = psi[k] - psi_h;
          const double dpe = dpsi[k] - dpsi_h - hdot.dot(grad_psi_h);
          q[k] = eta * pe;
          dq[k] = deta * pe + eta * dpe;
        }
      p = perp_gradient(sp, q);
      dp = perp_gradient(sp, dq);
    }
    const ScalarField rho = f.body.empty() ? ScalarField(g, 1.0)
                                           : extended_density(body_mask(g, f.body), f.body.density);
    const ScalarField px = derivative_x(sp, p.x), py = derivative_y(sp, p.x);
    const ScalarField qx = derivative_x(sp, p.y), qy = derivative_y(sp, p.y);
    const ScalarField ux = derivative_x(sp, f.w.x), uy = derivative_y(sp, f.w.x);
    const ScalarField vx = derivative_x(sp, f.w.y), vy = derivative_y(sp, f.w.y);
    double transport = 0.0;
    double viscous = 0.0;
    for (std::size_t k = 0; k < rho.data().size(); ++k) {
      const Vec2 w = f.w.at(k);
      const Vec2 adv{w.x * px[k] + w.y * py[k], w.x * qx[k] + w.y * qy[k]};
      transport += rho[k] * w.dot(dp.at(k) + adv);
      const double dw12 = 0.5 * (uy[k] + vx[k]);
      const double dp12 = 0.5 * (py[k] + qx[k]);
      viscous += ux[k] * px[k] + vy[k] * qy[k] + 2.0 * dw12 * dp12;
    }
    times.push_back(f.time);
    integrand.push_back((-transport + 2.0 * nu * viscous) * g.cell_area());
    if (n == 0) {
      double acc = 0.0;
      for (std::size_t k = 0; k < rho.data().size(); ++k) acc += rho[k] * f.w.at(k).dot(p.at(k));
      initial = acc * g.cell_area();
    }
  }
  return simpson(times, integrand) - initial;
}

/// |weak_form_pairing|
inline double weak_form_residual(Spectral& sp, const std::vector<Frame>& frames,
                                 const TimeDependentField& phi, double nu,
                                 const std::optional<SmoothCutoffSpec>& cutoff = std::nullopt) {
  return std::abs(weak_form_pairing(sp, frames, phi, nu, cutoff));
}

}  // namespace smallbody
