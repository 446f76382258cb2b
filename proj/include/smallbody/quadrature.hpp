#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace smallbody::quadrature {

struct Rule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule; nodes found by Newton iteration on P_n.
inline Rule gauss_legendre_rule(int n) {
  if (n < 1) throw std::invalid_argument("Gauss-Legendre order must be >= 1");
  Rule rule{std::vector<double>(n), std::vector<double>(n)};
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = rule.weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return rule;
}

inline const Rule& default_rule() {
  static const Rule rule = gauss_legendre_rule(20);
  return rule;
}

/// Composite Gauss-Legendre over `panels` equal sub-intervals of [a, b].
template <class F>
double integrate(F&& f, double a, double b, int panels, const Rule& rule = default_rule()) {
  if (panels < 1) throw std::invalid_argument("quadrature refinement must be >= 1");
  if (b <= a) return 0.0;
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    double s = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k)
      s += rule.weights[k] * f(mid + 0.5 * h * rule.nodes[k]);
    total += 0.5 * h * s;
  }
  return total;
}

/// Composite rule on panels uniform in ln r; `f` is the integrand in r.
template <class F>
double integrate_log(F&& f, double a, double b, int panels) {
  if (!(a > 0.0)) throw std::invalid_argument("log-spaced quadrature needs a > 0");
  return integrate([&](double s) {
    const double r = std::exp(s);
    return f(r) * r;
  }, std::log(a), std::log(b), panels);
}

}  // namespace smallbody::quadrature
