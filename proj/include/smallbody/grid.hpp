#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smallbody {

/// Raised when an input field or parameter set violates a documented precondition.
/// Carries the measured quantity that triggered the rejection.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& what, double measured)
      : std::runtime_error(what), measured_(measured) {}
  [[nodiscard]] double measured() const noexcept { return measured_; }

 private:
  double measured_;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
  [[nodiscard]] constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  /// x^perp = (-x2, x1)
  [[nodiscard]] constexpr Vec2 perp() const { return {-y, x}; }
  [[nodiscard]] double norm() const { return std::hypot(x, y); }
};

/// Uniform periodic grid on the torus [-L/2, L/2)^2 with N x N nodes.
/// Node (i, j) sits at (-L/2 + i dx, -L/2 + j dx); storage is row-major with
/// rows along y, i.e. index j * N + i.
struct Grid {
  double L = 2.0 * std::numbers::pi;
  int N = 64;

  static Grid make(double side, int n) {
    if (!(side > 0.0)) throw ValidationError("grid side length must be positive", side);
    if (n < 32 || (n & (n - 1)) != 0)
      throw ValidationError("grid resolution must be a power of two >= 32", n);
    return Grid{side, n};
  }

  [[nodiscard]] double dx() const { return L / N; }
  [[nodiscard]] double cell_area() const { return dx() * dx(); }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(N) * N; }
  [[nodiscard]] double coord(int i) const { return -0.5 * L + i * dx(); }
  [[nodiscard]] Vec2 point(int i, int j) const { return {coord(i), coord(j)}; }
  [[nodiscard]] std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * N + i;
  }
  [[nodiscard]] double wavenumber_unit() const { return 2.0 * std::numbers::pi / L; }

  /// Shortest periodic displacement from `from` to `to`.
  [[nodiscard]] Vec2 displacement(Vec2 from, Vec2 to) const {
    auto wrap = [this](double d) { return d - L * std::round(d / L); };
    return {wrap(to.x - from.x), wrap(to.y - from.y)};
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

inline void require_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) {
    std::ostringstream os;
    os << "grid mismatch: (L=" << a.L << ", N=" << a.N << ") vs (L=" << b.L << ", N=" << b.N
       << ")";
    throw ValidationError(os.str(), std::abs(a.L - b.L) + std::abs(a.N - b.N));
  }
}

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(Grid g, double fill = 0.0) : grid_(g), data_(g.size(), fill) {}

  template <class F>
  static ScalarField sample(Grid g, F&& f) {
    ScalarField out(g);
    for (int j = 0; j < g.N; ++j)
      for (int i = 0; i < g.N; ++i) out(i, j) = f(g.point(i, j));
    return out;
  }

  [[nodiscard]] const Grid& grid() const { return grid_; }
  [[nodiscard]] std::vector<double>& data() { return data_; }
  [[nodiscard]] const std::vector<double>& data() const { return data_; }
  double& operator()(int i, int j) { return data_[grid_.index(i, j)]; }
  double operator()(int i, int j) const { return data_[grid_.index(i, j)]; }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  ScalarField& operator+=(const ScalarField& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  ScalarField& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }

  [[nodiscard]] double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  [[nodiscard]] double mean() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s / static_cast<double>(data_.size());
  }

 private:
  Grid grid_{};
  std::vector<double> data_;
};

/// Planar vector field stored as two scalar components.
struct VectorField {
  ScalarField x;
  ScalarField y;

  VectorField() = default;
  explicit VectorField(Grid g) : x(g), y(g) {}
  VectorField(ScalarField a, ScalarField b) : x(std::move(a)), y(std::move(b)) {
    require_same_grid(x.grid(), y.grid());
  }

  template <class F>
  static VectorField sample(Grid g, F&& f) {
    VectorField out(g);
    for (int j = 0; j < g.N; ++j)
      for (int i = 0; i < g.N; ++i) {
        const Vec2 v = f(g.point(i, j));
        out.x(i, j) = v.x;
        out.y(i, j) = v.y;
      }
    return out;
  }

  [[nodiscard]] const Grid& grid() const { return x.grid(); }
  [[nodiscard]] Vec2 at(std::size_t k) const { return {x[k], y[k]}; }
  void set(std::size_t k, Vec2 v) {
    x[k] = v.x;
    y[k] = v.y;
  }

  VectorField& operator+=(const VectorField& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  VectorField& operator-=(const VectorField& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  VectorField& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
  friend VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
  friend VectorField operator*(double s, VectorField a) { return a *= s; }

  [[nodiscard]] double max_abs() const {
    double m = 0.0;
    for (std::size_t k = 0; k < x.data().size(); ++k) m = std::max(m, std::hypot(x[k], y[k]));
    return m;
  }
  [[nodiscard]] Vec2 mean() const { return {x.mean(), y.mean()}; }
};

// Grid quadrature (trapezoid on the torus, spectrally accurate for smooth periodic data).

inline double integrate(const ScalarField& f) {
  double s = 0.0;
  for (double v : f.data()) s += v;
  return s * f.grid().cell_area();
}

inline double inner(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid(), b.grid());
  double s = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) s += a[k] * b[k];
  return s * a.grid().cell_area();
}

inline double inner(const VectorField& a, const VectorField& b) {
  return inner(a.x, b.x) + inner(a.y, b.y);
}

inline double l2_norm(const ScalarField& f) { return std::sqrt(inner(f, f)); }
inline double l2_norm(const VectorField& f) { return std::sqrt(inner(f, f)); }

}  // namespace smallbody
