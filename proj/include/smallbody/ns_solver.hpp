#pragma once

// Pseudo-spectral 2D Navier-Stokes on the periodic square in vorticity form.
// Time stepping: three-stage strong-stability-preserving Runge-Kutta on the advection
// term with an integrating factor that treats viscosity exactly.

#include <cmath>
#include <sstream>

#include "smallbody/grid.hpp"
#include "smallbody/spectral.hpp"
#include "smallbody/stream.hpp"

namespace smallbody {

enum class Dealias { two_thirds, none };

/// Raised when dt max|u| N / L exceeds the CFL bound; `measured()` is max|u|.
class CflError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct FluidConfig {
  double nu = 0.01;
  double L = 2.0 * std::numbers::pi;
  int N = 64;
  double dt = 1e-3;
  double T = 1.0;
  Dealias dealias = Dealias::two_thirds;
  double cfl_limit = 0.5;

  [[nodiscard]] Grid grid() const { return Grid::make(L, N); }
  [[nodiscard]] long steps() const { return std::lround(T / dt); }

  void validate() const {
    if (!(nu > 0.0)) throw ValidationError("viscosity must be positive", nu);
    if (!(dt > 0.0)) throw ValidationError("time step must be positive", dt);
    if (!(T >= 0.0)) throw ValidationError("horizon must be non-negative", T);
    (void)grid();
  }
};

struct FluidState {
  double time = 0.0;
  SpectralField omega_hat;  // zero-mean vorticity
  Vec2 mean_flow{};         // spatial mean of u, conserved
  ScalarField omega;
  VectorField u;
};

struct Energy {
  double kinetic = 0.0;           // integral |u|^2
  double dissipation_rate = 0.0;  // 2 nu integral |D(u)|^2
};

/// integral |D(u)|^2 with D(u) the symmetric gradient.
inline double strain_norm_sq(Spectral& sp, const VectorField& u) {
  const ScalarField ux = derivative_x(sp, u.x);
  const ScalarField uy = derivative_y(sp, u.x);
  const ScalarField vx = derivative_x(sp, u.y);
  const ScalarField vy = derivative_y(sp, u.y);
  double acc = 0.0;
  for (std::size_t k = 0; k < ux.data().size(); ++k) {
    const double off = 0.5 * (uy[k] + vx[k]);
    acc += ux[k] * ux[k] + vy[k] * vy[k] + 2.0 * off * off;
  }
  return acc * u.grid().cell_area();
}

class NsSolver {
 public:
  explicit NsSolver(FluidConfig cfg) : cfg_(std::move(cfg)), sp_((cfg_.validate(), cfg_.grid())) {}

  [[nodiscard]] const FluidConfig& config() const { return cfg_; }
  [[nodiscard]] Spectral& spectral() { return sp_; }
  [[nodiscard]] const Grid& grid() const { return sp_.grid(); }

  /// State at t = 0 with omega = curl v0; v0 must be divergence-free.
  FluidState initialize(const VectorField& v0, double tolerance = 1e-8) {
    require_same_grid(v0.grid(), grid());
    const double div = relative_divergence(sp_, v0);
    if (div > tolerance) {
      std::ostringstream os;
      os << "initial velocity is not divergence-free: relative divergence " << div;
      throw ValidationError(os.str(), div);
    }
    FluidState s;
    s.omega_hat = sp_.forward(curl(sp_, v0));
    s.omega_hat(0, 0) = {};
    s.mean_flow = v0.mean();
    refresh(s);
    return s;
  }

  /// Throws CflError naming max|u| when the CFL number exceeds the limit.
  void check_cfl(const VectorField& u) const {
    const double umax = u.max_abs();
    const double cfl = cfg_.dt * umax * cfg_.N / cfg_.L;
    if (cfl > cfg_.cfl_limit) {
      std::ostringstream os;
      os << "CFL violation: max|u| = " << umax << " gives dt*max|u|*N/L = " << cfl << " > "
         << cfg_.cfl_limit;
      throw CflError(os.str(), umax);
    }
  }

  /// Advances the state by one time step.
  void step(FluidState& s) {
    check_cfl(s.u);
    s.omega_hat = advance(s.omega_hat, s.mean_flow, cfg_.dt);
    s.time += cfg_.dt;
    refresh(s);
  }

  /// One step applied to a velocity field: its vorticity is advanced and the velocity
  /// rebuilt with the same mean flow.
  VectorField step_velocity(const VectorField& w) {
    check_cfl(w);
    SpectralField oh = sp_.forward(curl(sp_, w));
    oh(0, 0) = {};
    const Vec2 mean = w.mean();
    return velocity_from_vorticity(sp_, advance(oh, mean, cfg_.dt), mean);
  }

  Energy energy(const VectorField& u) {
    return {inner(u, u), 2.0 * cfg_.nu * strain_norm_sq(sp_, u)};
  }
  Energy energy(const FluidState& s) { return energy(s.u); }

  /// Viscous energy loss over one step of the heat semigroup started from u, divided by dt:
  /// (1/dt) integral_0^dt 2 nu ||grad e^{nu s Laplacian} u||^2 ds, mode by mode. Equals the
  /// instantaneous rate for resolved modes and stays bounded by |u_k|^2 / dt for stiff ones.
  double step_averaged_dissipation(const VectorField& u) {
    const Grid& g = grid();
    const double nu = cfg_.nu;
    const double dt = cfg_.dt;
    double acc = 0.0;
    for (const ScalarField* c : {&u.x, &u.y}) {
      const SpectralField s = sp_.forward(*c);
      for (int row = 0; row < g.N; ++row)
        for (int col = 0; col < s.columns(); ++col) {
          const double k2 = sp_.kx(col) * sp_.kx(col) + sp_.ky(row) * sp_.ky(row);
          const double w = (col == 0 || col == g.N / 2) ? 1.0 : 2.0;
          acc -= w * std::norm(s(col, row)) * std::expm1(-2.0 * nu * k2 * dt);
        }
    }
    const double n2 = static_cast<double>(g.size());
    return acc * g.L * g.L / (n2 * n2) / dt;
  }

 private:
  // -(u . grad omega) for the mean flow plus the induced velocity, dealiased.
  SpectralField advection(const SpectralField& omega_hat, Vec2 mean) {
    SpectralField oh = omega_hat;
    if (cfg_.dealias == Dealias::two_thirds) dealias(sp_, oh);
    const VectorField u = velocity_from_vorticity(sp_, oh, mean);
    const ScalarField wx = sp_.inverse(d_dx(sp_, oh));
    const ScalarField wy = sp_.inverse(d_dy(sp_, oh));
    ScalarField n(grid());
    for (std::size_t k = 0; k < n.data().size(); ++k) n[k] = -(u.x[k] * wx[k] + u.y[k] * wy[k]);
    SpectralField nh = sp_.forward(n);
    if (cfg_.dealias == Dealias::two_thirds) dealias(sp_, nh);
    nh(0, 0) = {};
    return nh;
  }

  // Multiplies by exp(-nu k^2 tau).
  void decay(SpectralField& s, double tau) const {
    const double nu = cfg_.nu;
    sp_.apply(s, [&](double kx, double ky, int, int) {
      return Complex{std::exp(-nu * (kx * kx + ky * ky) * tau), 0.0};
    });
  }

  static void axpy(SpectralField& y, double a, const SpectralField& x) {
    for (std::size_t k = 0; k < y.coeffs.size(); ++k) y.coeffs[k] += a * x.coeffs[k];
  }

  SpectralField advance(const SpectralField& w0, Vec2 mean, double dt) {
    // Stage 1: w1 = E(dt) (w0 + dt N(w0))
    SpectralField w1 = w0;
    axpy(w1, dt, advection(w0, mean));
    decay(w1, dt);
    // Stage 2: w2 = 3/4 E(dt/2) w0 + 1/4 E(-dt/2) (w1 + dt N(w1))
    SpectralField t1 = w1;
    axpy(t1, dt, advection(w1, mean));
    decay(t1, -0.5 * dt);
    SpectralField w2 = w0;
    decay(w2, 0.5 * dt);
    for (std::size_t k = 0; k < w2.coeffs.size(); ++k)
      w2.coeffs[k] = 0.75 * w2.coeffs[k] + 0.25 * t1.coeffs[k];
    // Stage 3: w = 1/3 E(dt) w0 + 2/3 E(dt/2) (w2 + dt N(w2))
    SpectralField t2 = w2;
    axpy(t2, dt, advection(w2, mean));
    decay(t2, 0.5 * dt);
    SpectralField out = w0;
    decay(out, dt);
    for (std::size_t k = 0; k < out.coeffs.size(); ++k)
      out.coeffs[k] = out.coeffs[k] / 3.0 + 2.0 / 3.0 * t2.coeffs[k];
    out(0, 0) = {};
    return out;
  }

  void refresh(FluidState& s) {
    s.omega = sp_.inverse(s.omega_hat);
    s.u = velocity_from_vorticity(sp_, s.omega_hat, s.mean_flow);
  }

  FluidConfig cfg_;
  Spectral sp_;
};

}  // namespace smallbody
