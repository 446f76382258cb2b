#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "smallbody/grid.hpp"
#include "smallbody/quadrature.hpp"

namespace smallbody {

/// Value and first two radial derivatives of a radial profile F(r).
struct RadialJet {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Squared norms of a cut-off f: ||f - 1||^2, ||grad f||^2, || |x| grad^2 f ||^2.
struct CutoffNormsSq {
  double minus_one_l2_sq = 0.0;
  double gradient_l2_sq = 0.0;
  double weighted_hessian_l2_sq = 0.0;
};

// ---- Harmonic annulus cut-off ---------------------------------------------------------

/// f_{A,B}: 0 inside radius A, 1 outside radius B, logarithmic (harmonic) in between.
class AnnulusCutoffSpec {
 public:
  static AnnulusCutoffSpec make(double inner_radius, double outer_radius) {
    if (!(inner_radius > 0.0))
      throw ValidationError("annulus inner radius must be positive", inner_radius);
    if (!(outer_radius > inner_radius))
      throw ValidationError("annulus needs inner radius < outer radius", outer_radius);
    return AnnulusCutoffSpec(inner_radius, outer_radius);
  }

  [[nodiscard]] double inner_radius() const { return a_; }
  [[nodiscard]] double outer_radius() const { return b_; }
  [[nodiscard]] double ratio() const { return b_ / a_; }
  [[nodiscard]] double log_ratio() const { return std::log(b_) - std::log(a_); }

  [[nodiscard]] double radial(double r) const {
    if (r <= a_) return 0.0;
    if (r >= b_) return 1.0;
    return (std::log(r) - std::log(a_)) / log_ratio();
  }
  [[nodiscard]] double operator()(Vec2 x) const { return radial(x.norm()); }

 private:
  AnnulusCutoffSpec(double a, double b) : a_(a), b_(b) {}
  double a_;
  double b_;
};

/// Closed-form squared norms of f_{A,B} (the Hessian norm is over A < |x| < B).
inline CutoffNormsSq annulus_closed_form_norms(const AnnulusCutoffSpec& spec) {
  const double a = spec.inner_radius();
  const double alpha = spec.ratio();
  const double la = spec.log_ratio();
  const double pi = std::numbers::pi;
  return {pi * a * a * (alpha * alpha / (2.0 * la * la) - 1.0 / (2.0 * la * la) - 1.0 / la),
          2.0 * pi / la, 4.0 * pi / la};
}

/// Radial quadrature of the same three norms from the explicit derivative formulas
/// grad f = x / (|x|^2 ln a), |grad^2 f| = sqrt(2) / (|x|^2 ln a). Independent of the
/// closed forms; `refinement` is the panel count per radial piece.
inline CutoffNormsSq annulus_quadrature_norms(const AnnulusCutoffSpec& spec, int refinement) {
  const double a = spec.inner_radius();
  const double b = spec.outer_radius();
  const double la = spec.log_ratio();
  const double two_pi = 2.0 * std::numbers::pi;
  CutoffNormsSq out;
  out.minus_one_l2_sq =
      quadrature::integrate([&](double r) { return two_pi * r; }, 0.0, a, refinement) +
      quadrature::integrate_log(
          [&](double r) {
            const double g = 1.0 - std::log(r / a) / la;
            return two_pi * r * g * g;
          },
          a, b, refinement);
  out.gradient_l2_sq = quadrature::integrate_log(
      [&](double r) {
        const double g = 1.0 / (r * la);
        return two_pi * r * g * g;
      },
      a, b, refinement);
  out.weighted_hessian_l2_sq = quadrature::integrate_log(
      [&](double r) {
        const double h = std::sqrt(2.0) / (r * r * la);
        return two_pi * r * r * r * h * h;
      },
      a, b, refinement);
  return out;
}

// ---- alpha schedule -------------------------------------------------------------------

struct AlphaChoice {
  double alpha = 100.0;
  bool clamped = false;  // true when the upper bound 1/eps was enforced
};

/// alpha = max(100, 1 / sqrt(eps + eps * sup|h'|)), kept inside [100, 1/eps].
inline AlphaChoice alpha_schedule(double eps, double sup_body_speed) {
  if (!(eps > 0.0 && eps <= 0.01))
    throw ValidationError("alpha schedule needs 0 < eps <= 1/100", eps);
  if (!(sup_body_speed >= 0.0))
    throw ValidationError("body speed supremum must be non-negative", sup_body_speed);
  double alpha = std::max(100.0, 1.0 / std::sqrt(eps + eps * sup_body_speed));
  AlphaChoice choice{alpha, false};
  if (alpha > 1.0 / eps) {
    choice.alpha = 1.0 / eps;
    choice.clamped = true;
  }
  return choice;
}

// ---- Mollifier ------------------------------------------------------------------------

namespace detail {

// exp(-1/t) and its first two derivatives, zero for t <= 0.
inline RadialJet flat_exponential(double t) {
  if (t <= 1.0 / 700.0) return {};
  const double e = std::exp(-1.0 / t);
  const double t2 = t * t;
  return {e, e / t2, e * (1.0 / (t2 * t2) - 2.0 / (t2 * t))};
}

}  // namespace detail

/// Monotone C-infinity step: 0 for t <= 0, 1 for t >= 1.
inline RadialJet smooth_step(double t) {
  if (t <= 0.0) return {0.0, 0.0, 0.0};
  if (t >= 1.0) return {1.0, 0.0, 0.0};
  const RadialJet a = detail::flat_exponential(t);
  RadialJet b = detail::flat_exponential(1.0 - t);
  b.d1 = -b.d1;  // chain rule for 1 - t
  const double den = a.value + b.value;
  const double den1 = a.d1 + b.d1;
  const double num = a.d1 * b.value - a.value * b.d1;
  const double num1 = a.d2 * b.value - a.value * b.d2;
  return {a.value / den, num / (den * den), (num1 * den - 2.0 * num * den1) / (den * den * den)};
}

/// Radial mollifier profile g: 0 for s < 2, 1 for s > 4.
inline RadialJet mollifier_profile(double s) {
  const RadialJet st = smooth_step(0.5 * (s - 2.0));
  return {st.value, 0.5 * st.d1, 0.25 * st.d2};
}

// ---- Smooth cut-off f_eps --------------------------------------------------------------

/// Smooth cut-off around D(0, eps): 0 for |x| < 2 eps, harmonic on 4 eps < |x| < eps
/// alpha / 4, 1 for |x| > eps alpha / 2.
class SmoothCutoffSpec {
 public:
  static constexpr double kMinimumRatio = 16.0;  // keeps 4 eps <= eps alpha / 4

  /// Parameters inside the admissible set: eps in (0, 1/100], 100 <= alpha <= 1/eps.
  static SmoothCutoffSpec admissible(double eps, double alpha) {
    if (!(eps > 0.0 && eps <= 0.01)) throw ValidationError("cut-off needs 0 < eps <= 1/100", eps);
    if (!(alpha >= 100.0 && alpha <= 1.0 / eps * (1.0 + 1e-12)))
      throw ValidationError("cut-off needs 100 <= alpha <= 1/eps", alpha);
    return SmoothCutoffSpec(eps, alpha);
  }

  /// Desk-scale construction: any eps > 0 and alpha >= 16 (branch ordering only).
  static SmoothCutoffSpec relaxed(double eps, double alpha) {
    if (!(eps > 0.0)) throw ValidationError("cut-off scale must be positive", eps);
    if (!(alpha >= kMinimumRatio))
      throw ValidationError("cut-off ratio must be >= 16 for the branches to nest", alpha);
    return SmoothCutoffSpec(eps, alpha);
  }

  [[nodiscard]] double eps() const { return eps_; }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] double log_alpha() const { return std::log(alpha_); }
  /// Radius beyond which the cut-off is identically one.
  [[nodiscard]] double outer_radius() const { return 0.5 * eps_ * alpha_; }

  /// Harmonic branch f_{eps, eps alpha}.
  [[nodiscard]] RadialJet harmonic(double r) const {
    const double la = log_alpha();
    return {std::log(r / eps_) / la, 1.0 / (r * la), -1.0 / (r * r * la)};
  }

  [[nodiscard]] RadialJet radial(double r) const {
    const double inner_lo = 2.0 * eps_;
    const double inner_hi = 4.0 * eps_;
    const double outer_lo = 0.25 * eps_ * alpha_;
    const double outer_hi = 0.5 * eps_ * alpha_;
    if (r <= inner_lo) return {0.0, 0.0, 0.0};
    if (r >= outer_hi) return {1.0, 0.0, 0.0};
    const RadialJet f = harmonic(r);
    if (r >= inner_hi && r <= outer_lo) return f;
    if (r < inner_hi) {
      // g1 * f with g1(r) = g(r / eps)
      const RadialJet g = mollifier_profile(r / eps_);
      const double g1 = g.d1 / eps_;
      const double g2 = g.d2 / (eps_ * eps_);
      return {g.value * f.value, g1 * f.value + g.value * f.d1,
              g2 * f.value + 2.0 * g1 * f.d1 + g.value * f.d2};
    }
    // 1 + g2 (f - 1) with g2(r) = 1 - g(8 r / (eps alpha))
    const double c = 8.0 / (eps_ * alpha_);
    const RadialJet g = mollifier_profile(c * r);
    const double m0 = 1.0 - g.value;
    const double m1 = -c * g.d1;
    const double m2 = -c * c * g.d2;
    const double fm = f.value - 1.0;
    return {1.0 + m0 * fm, m1 * fm + m0 * f.d1, m2 * fm + 2.0 * m1 * f.d1 + m0 * f.d2};
  }

  [[nodiscard]] double operator()(Vec2 x) const { return radial(x.norm()).value; }

  [[nodiscard]] Vec2 gradient(Vec2 x) const {
    const double r = x.norm();
    if (r == 0.0) return {};
    const double d1 = radial(r).d1;
    return {d1 * x.x / r, d1 * x.y / r};
  }

  /// Hessian entries (xx, xy, yy) = F'' xhat xhat^T + F'/r (I - xhat xhat^T).
  struct Hessian {
    double xx = 0.0, xy = 0.0, yy = 0.0;
  };
  [[nodiscard]] Hessian hessian(Vec2 x) const {
    const double r = x.norm();
    if (r == 0.0) return {};
    const RadialJet j = radial(r);
    const double nx = x.x / r;
    const double ny = x.y / r;
    const double t = j.d1 / r;
    return {j.d2 * nx * nx + t * (1.0 - nx * nx), (j.d2 - t) * nx * ny,
            j.d2 * ny * ny + t * (1.0 - ny * ny)};
  }

  /// Radial break points of the construction (ascending).
  [[nodiscard]] std::vector<double> breakpoints() const {
    return {2.0 * eps_, 4.0 * eps_, 0.25 * eps_ * alpha_, 0.5 * eps_ * alpha_};
  }

 private:
  SmoothCutoffSpec(double eps, double alpha) : eps_(eps), alpha_(alpha) {}
  double eps_;
  double alpha_;
};

struct SmoothCutoffNorms {
  double linf = 0.0;
  double minus_one_l2 = 0.0;
  double gradient_l2 = 0.0;
  double weighted_hessian_l2 = 0.0;
};

/// Norms of f_eps by piecewise radial quadrature between the break points.
inline SmoothCutoffNorms smooth_cutoff_norms(const SmoothCutoffSpec& spec, int refinement) {
  const double two_pi = 2.0 * std::numbers::pi;
  const std::vector<double> bp = spec.breakpoints();
  double m1 = quadrature::integrate([&](double r) { return two_pi * r; }, 0.0, bp[0], refinement);
  double g = 0.0;
  double h = 0.0;
  double linf = 0.0;
  for (std::size_t p = 0; p + 1 < bp.size(); ++p) {
    m1 += quadrature::integrate_log(
        [&](double r) {
          const double v = spec.radial(r).value - 1.0;
          return two_pi * r * v * v;
        },
        bp[p], bp[p + 1], refinement);
    g += quadrature::integrate_log(
        [&](double r) {
          const double d = spec.radial(r).d1;
          return two_pi * r * d * d;
        },
        bp[p], bp[p + 1], refinement);
    h += quadrature::integrate_log(
        [&](double r) {
          const RadialJet j = spec.radial(r);
          return two_pi * r * r * r * (j.d2 * j.d2 + j.d1 * j.d1 / (r * r));
        },
        bp[p], bp[p + 1], refinement);
  }
  for (double r : bp) linf = std::max(linf, std::abs(spec.radial(r * 1.0000001).value));
  linf = std::max(linf, std::abs(spec.radial(2.0 * bp.back()).value));
  return {linf, std::sqrt(m1), std::sqrt(g), std::sqrt(h)};
}

// ---- Moving cut-off -------------------------------------------------------------------

/// Piecewise-linear body-centre path h(t) on [t_0, t_n].
class PiecewiseLinearPath {
 public:
  PiecewiseLinearPath(std::vector<double> times, std::vector<Vec2> points)
      : times_(std::move(times)), points_(std::move(points)) {
    if (times_.empty() || times_.size() != points_.size())
      throw ValidationError("path needs matching, non-empty time and point lists",
                            static_cast<double>(times_.size()));
    for (std::size_t k = 1; k < times_.size(); ++k)
      if (!(times_[k] > times_[k - 1]))
        throw ValidationError("path times must be strictly increasing", times_[k]);
  }

  static PiecewiseLinearPath constant(Vec2 p, double horizon) {
    return PiecewiseLinearPath({0.0, horizon}, {p, p});
  }

  [[nodiscard]] double start() const { return times_.front(); }
  [[nodiscard]] double horizon() const { return times_.back(); }

  [[nodiscard]] Vec2 position(double t) const {
    check_horizon(t);
    if (times_.size() == 1) return points_.front();
    const std::size_t k = segment(t);
    const double s = (t - times_[k]) / (times_[k + 1] - times_[k]);
    return points_[k] + s * (points_[k + 1] - points_[k]);
  }

  /// h'(t); refused at interior break points where h is not differentiable.
  [[nodiscard]] Vec2 velocity(double t) const {
    check_horizon(t);
    if (times_.size() == 1) return {};
    const double tol = 1e-12 * std::max(1.0, std::abs(horizon()));
    for (std::size_t k = 1; k + 1 < times_.size(); ++k) {
      if (std::abs(t - times_[k]) <= tol) {
        std::ostringstream os;
        os << "path is not differentiable at break point t=" << times_[k]
           << "; perturb t off the break point";
        throw ValidationError(os.str(), t);
      }
    }
    const std::size_t k = segment(t);
    return (1.0 / (times_[k + 1] - times_[k])) * (points_[k + 1] - points_[k]);
  }

 private:
  void check_horizon(double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(horizon()));
    if (t < start() - tol || t > horizon() + tol)
      throw ValidationError("time outside the configured horizon", t);
  }
  [[nodiscard]] std::size_t segment(double t) const {
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    return std::min(k, times_.size() - 2);
  }

  std::vector<double> times_;
  std::vector<Vec2> points_;
};

/// eta(t, x) = f_eps(x - h(t)).
class MovingCutoff {
 public:
  MovingCutoff(SmoothCutoffSpec spec, PiecewiseLinearPath path)
      : spec_(spec), path_(std::move(path)) {}

  [[nodiscard]] const SmoothCutoffSpec& spec() const { return spec_; }
  [[nodiscard]] const PiecewiseLinearPath& path() const { return path_; }

  [[nodiscard]] double value(double t, Vec2 x) const { return spec_(x - path_.position(t)); }

  /// d/dt eta = -h'(t) . grad f_eps(x - h(t)).
  [[nodiscard]] double time_derivative(double t, Vec2 x) const {
    const Vec2 hd = path_.velocity(t);
    return -hd.dot(spec_.gradient(x - path_.position(t)));
  }

 private:
  SmoothCutoffSpec spec_;
  PiecewiseLinearPath path_;
};

}  // namespace smallbody
