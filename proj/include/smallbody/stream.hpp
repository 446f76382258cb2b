#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

#include "smallbody/cutoff.hpp"
#include "smallbody/grid.hpp"
#include "smallbody/quadrature.hpp"
#include "smallbody/spectral.hpp"

namespace smallbody {

/// Relative divergence ||div u||_{L2} / ||grad u||_{L2}; zero for constant fields.
inline double relative_divergence(Spectral& sp, const VectorField& u) {
  const double g = gradient_l2_norm(sp, u);
  if (g == 0.0) return 0.0;
  return l2_norm(divergence(sp, u)) / g;
}

/// Stream function psi with grad^perp psi = phi, normalised to zero mean on the torus.
/// Rejects fields that are not perpendicular gradients (divergence or net mean flow).
inline ScalarField biot_savart_stream(Spectral& sp, const VectorField& phi,
                                      double tolerance = 1e-8) {
  const double div = relative_divergence(sp, phi);
  if (div > tolerance) {
    std::ostringstream os;
    os << "field is not divergence-free: relative divergence " << div;
    throw ValidationError(os.str(), div);
  }
  const double scale = std::max(phi.max_abs(), 1e-300);
  const double drift = phi.mean().norm() / scale;
  if (phi.max_abs() > 0.0 && drift > tolerance) {
    std::ostringstream os;
    os << "field has a mean flow (relative " << drift << ") and has no periodic stream function";
    throw ValidationError(os.str(), drift);
  }
  return sp.inverse(inverse_laplacian(sp, sp.forward(curl(sp, phi))));
}

struct ModifiedStream {
  ScalarField psi_eps;
  double value_at_center = 0.0;  // psi(h), by trigonometric interpolation
};

/// psi_eps(x) = psi(x) - psi(h).
inline ModifiedStream modify_stream(Spectral& sp, const ScalarField& psi, Vec2 center) {
  const double c = interpolate(sp, sp.forward(psi), center);
  ScalarField out = psi;
  for (double& v : out.data()) v -= c;
  return {std::move(out), c};
}

/// Largest |f| over grid nodes within periodic distance R of `center`.
inline double local_sup(const ScalarField& f, Vec2 center, double radius) {
  const Grid& g = f.grid();
  double m = 0.0;
  for (int j = 0; j < g.N; ++j)
    for (int i = 0; i < g.N; ++i)
      if (g.displacement(center, g.point(i, j)).norm() <= radius) m = std::max(m, std::abs(f(i, j)));
  return m;
}

/// Samples eta(t, .) = f_eps(. - h(t)) on the grid using periodic displacements.
inline ScalarField sample_cutoff(const Grid& g, const SmoothCutoffSpec& spec, Vec2 center) {
  return ScalarField::sample(g, [&](Vec2 x) { return spec(g.displacement(center, x)); });
}

/// The cut-off test-function assembly at one time.
struct TestFunctionBundle {
  double time = 0.0;
  Vec2 center{};
  VectorField phi;
  ScalarField psi;
  ScalarField psi_eps;
  ScalarField eta;
  /// grad^perp(eta psi_eps) taken spectrally: a discrete perpendicular gradient, so its
  /// spectral divergence vanishes to round-off.
  VectorField phi_eps;
  /// Product-rule form grad^perp(eta) psi_eps + eta phi evaluated node by node: exactly
  /// zero where eta vanishes and exactly phi where eta == 1.
  VectorField phi_eps_pointwise;
};

/// Builds phi_eps = grad^perp(eta_eps psi_eps) at time t. `psi` may be passed when the
/// stream of `phi` is already known.
inline TestFunctionBundle build_test_function(Spectral& sp, const VectorField& phi,
                                              const MovingCutoff& cutoff, double t,
                                              std::optional<ScalarField> psi = std::nullopt) {
  const Grid& g = phi.grid();
  require_same_grid(sp.grid(), g);
  TestFunctionBundle b;
  b.time = t;
  b.center = cutoff.path().position(t);
  b.phi = phi;
  b.psi = psi ? std::move(*psi) : biot_savart_stream(sp, phi);
  b.psi_eps = modify_stream(sp, b.psi, b.center).psi_eps;
  b.eta = sample_cutoff(g, cutoff.spec(), b.center);

  ScalarField q = b.eta;
  for (std::size_t k = 0; k < q.data().size(); ++k) q[k] *= b.psi_eps[k];
  b.phi_eps = perp_gradient(sp, q);

  b.phi_eps_pointwise = VectorField(g);
  for (int j = 0; j < g.N; ++j)
    for (int i = 0; i < g.N; ++i) {
      const std::size_t k = g.index(i, j);
      const double eta = b.eta[k];
      if (eta == 0.0) continue;  // eta and its gradient vanish together inside 2 eps
      const Vec2 grad = cutoff.spec().gradient(g.displacement(b.center, g.point(i, j)));
      const Vec2 gp = grad.perp();
      b.phi_eps_pointwise.set(k, b.psi_eps[k] * gp + eta * phi.at(k));
    }
  return b;
}

struct H1Distance {
  double l2 = 0.0;
  double gradient_l2 = 0.0;
  [[nodiscard]] double h1() const { return std::hypot(l2, gradient_l2); }
};

/// ||a - b||_{L2} and ||grad(a - b)||_{L2} on a common grid (spectral).
inline H1Distance h1_distance(Spectral& sp, const VectorField& a, const VectorField& b) {
  require_same_grid(a.grid(), b.grid());
  const VectorField d = a - b;
  return {l2_norm(d), gradient_l2_norm(sp, d)};
}

/// Stream value, gradient and Hessian at a point.
struct StreamJet {
  double value = 0.0;
  Vec2 grad{};
  double hxx = 0.0, hxy = 0.0, hyy = 0.0;
};

/// A * exp(-|x - c|^2 / (2 sigma^2)).
struct GaussianStream {
  Vec2 center{};
  double sigma = 1.0;
  double amplitude = 1.0;

  [[nodiscard]] StreamJet operator()(Vec2 x) const {
    const Vec2 d = x - center;
    const double s2 = sigma * sigma;
    const double v = amplitude * std::exp(-d.dot(d) / (2.0 * s2));
    return {v, {-v * d.x / s2, -v * d.y / s2}, v * (d.x * d.x / (s2 * s2) - 1.0 / s2),
            v * d.x * d.y / (s2 * s2), v * (d.y * d.y / (s2 * s2) - 1.0 / s2)};
  }
  /// phi = grad^perp psi
  [[nodiscard]] Vec2 velocity(Vec2 x) const { return (*this)(x).grad.perp(); }
};

/// H1 distance between phi_eps = grad^perp(f_eps(. - h) psi_eps) and phi = grad^perp psi in
/// the plane, by polar quadrature around h with the analytic jets of f_eps and psi. Used
/// where the cut-off spans too many scales for a uniform grid.
template <class Stream>
H1Distance h1_distance_polar(const Stream& psi, const SmoothCutoffSpec& spec, Vec2 center,
                             int radial_refinement = 24, int angular_points = 256) {
  const double psi_h = psi(center).value;
  auto integrand = [&](double r, double theta, double& l2, double& h1) {
    const Vec2 n{std::cos(theta), std::sin(theta)};
    const Vec2 x = center + r * n;
    const StreamJet s = psi(x);
    const RadialJet f = spec.radial(r);
    const double pe = s.value - psi_h;
    const double fm = f.value - 1.0;
    const Vec2 grad_q = f.d1 * pe * n + fm * s.grad;
    const double t = f.d1 / r;
    const double hf_xx = f.d2 * n.x * n.x + t * (1.0 - n.x * n.x);
    const double hf_xy = (f.d2 - t) * n.x * n.y;
    const double hf_yy = f.d2 * n.y * n.y + t * (1.0 - n.y * n.y);
    const double qxx = pe * hf_xx + 2.0 * f.d1 * n.x * s.grad.x + fm * s.hxx;
    const double qxy = pe * hf_xy + f.d1 * (n.x * s.grad.y + n.y * s.grad.x) + fm * s.hxy;
    const double qyy = pe * hf_yy + 2.0 * f.d1 * n.y * s.grad.y + fm * s.hyy;
    l2 = grad_q.dot(grad_q);
    h1 = qxx * qxx + 2.0 * qxy * qxy + qyy * qyy;
  };
  auto ring = [&](double r, bool want_grad) {
    double acc = 0.0;
    const double dtheta = 2.0 * std::numbers::pi / angular_points;
    for (int k = 0; k < angular_points; ++k) {
      double l2 = 0.0;
      double h1 = 0.0;
      integrand(r, k * dtheta, l2, h1);
      acc += want_grad ? h1 : l2;
    }
    return acc * dtheta * r;
  };
  const auto bp = spec.breakpoints();
  double l2 = 0.0;
  double gr = 0.0;
  l2 += quadrature::integrate([&](double r) { return ring(r, false); }, 0.0, bp[0],
                              radial_refinement);
  gr += quadrature::integrate([&](double r) { return ring(r, true); }, 0.0, bp[0],
                              radial_refinement);
  for (std::size_t p = 0; p + 1 < bp.size(); ++p) {
    l2 += quadrature::integrate_log([&](double r) { return ring(r, false); }, bp[p], bp[p + 1],
                                    radial_refinement);
    gr += quadrature::integrate_log([&](double r) { return ring(r, true); }, bp[p], bp[p + 1],
                                    radial_refinement);
  }
  return {std::sqrt(l2), std::sqrt(gr)};
}

/// Integral of w . (d_t phi_eps - d_t phi) at time t, evaluated in the curl form
/// -integral curl(w) d_t((eta - 1) psi_eps). `dphi_dt` is d_t phi (absent for static phi).
/// The body velocity comes from the cut-off path, which must be differentiable at t.
inline double timeder_pairing(Spectral& sp, const VectorField& w, const TestFunctionBundle& b,
                              const MovingCutoff& cutoff,
                              const std::optional<VectorField>& dphi_dt = std::nullopt) {
  const Grid& g = w.grid();
  require_same_grid(g, b.phi.grid());
  const Vec2 hdot = cutoff.path().velocity(b.time);
  const ScalarField vort = curl(sp, w);

  // d_t psi_eps = d_t psi - d_t psi(h) - h' . grad psi(h), grad psi = (phi_y, -phi_x).
  ScalarField dpsi(g);
  double dpsi_h = 0.0;
  if (dphi_dt) {
    dpsi = biot_savart_stream(sp, *dphi_dt);
    dpsi_h = interpolate(sp, sp.forward(dpsi), b.center);
  }
  const Vec2 phi_h{interpolate(sp, sp.forward(b.phi.x), b.center),
                   interpolate(sp, sp.forward(b.phi.y), b.center)};
  const double shift = dpsi_h + hdot.dot(Vec2{phi_h.y, -phi_h.x});

  double acc = 0.0;
  for (int j = 0; j < g.N; ++j)
    for (int i = 0; i < g.N; ++i) {
      const std::size_t k = g.index(i, j);
      const Vec2 rel = g.displacement(b.center, g.point(i, j));
      if (rel.norm() >= cutoff.spec().outer_radius()) continue;  // (eta - 1) and d_t eta vanish
      const double deta = -hdot.dot(cutoff.spec().gradient(rel));
      const double dpsi_eps = dpsi[k] - shift;
      acc += vort[k] * (deta * b.psi_eps[k] + (b.eta[k] - 1.0) * dpsi_eps);
    }
  return -acc * g.cell_area();
}

/// Bracket of the time-derivative bound (without the universal constant):
/// ||curl w|| (eps^2 alpha^2 / ln alpha ||d_t phi||_inf + eps alpha / sqrt(ln alpha) |h'| ||phi||_inf).
inline double timeder_envelope(double curl_l2, const SmoothCutoffSpec& spec, double dphi_inf,
                               double hdot, double phi_inf) {
  const double ea = spec.eps() * spec.alpha();
  const double la = spec.log_alpha();
  return curl_l2 * (ea * ea / la * dphi_inf + ea / std::sqrt(la) * std::abs(hdot) * phi_inf);
}

}  // namespace smallbody
