#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <memory>
#include <mutex>
#include <vector>

#include "smallbody/grid.hpp"

namespace smallbody {

using Complex = std::complex<double>;

/// Half-spectrum of a real N x N field: N rows (ky) by N/2+1 columns (kx).
struct SpectralField {
  Grid grid{};
  std::vector<Complex> coeffs;

  SpectralField() = default;
  explicit SpectralField(Grid g)
      : grid(g), coeffs(static_cast<std::size_t>(g.N) * (g.N / 2 + 1)) {}

  [[nodiscard]] int columns() const { return grid.N / 2 + 1; }
  Complex& operator()(int kx_index, int ky_index) {
    return coeffs[static_cast<std::size_t>(ky_index) * columns() + kx_index];
  }
  Complex operator()(int kx_index, int ky_index) const {
    return coeffs[static_cast<std::size_t>(ky_index) * columns() + kx_index];
  }
};

namespace detail {
// FFTW's planner is not thread-safe; execution on distinct plans is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Owns FFTW plans and aligned work buffers for one grid. Not shareable across
/// threads; give every stepping loop its own instance.
class Spectral {
 public:
  explicit Spectral(Grid g) : grid_(g) {
    const int n = g.N;
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * g.size()));
    cplx_ = static_cast<fftw_complex*>(
        fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(n) * (n / 2 + 1)));
    std::lock_guard lock(detail::planner_mutex());
    forward_ = fftw_plan_dft_r2c_2d(n, n, real_, cplx_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_2d(n, n, cplx_, real_, FFTW_ESTIMATE);
  }
  ~Spectral() {
    std::lock_guard lock(detail::planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(cplx_);
  }
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  [[nodiscard]] const Grid& grid() const { return grid_; }

  [[nodiscard]] SpectralField forward(const ScalarField& f) {
    require_same_grid(grid_, f.grid());
    std::copy(f.data().begin(), f.data().end(), real_);
    fftw_execute(forward_);
    SpectralField out(grid_);
    auto* src = reinterpret_cast<Complex*>(cplx_);
    std::copy(src, src + out.coeffs.size(), out.coeffs.begin());
    return out;
  }

  /// Normalized inverse: inverse(forward(f)) == f.
  [[nodiscard]] ScalarField inverse(const SpectralField& s) {
    require_same_grid(grid_, s.grid);
    auto* dst = reinterpret_cast<Complex*>(cplx_);
    std::copy(s.coeffs.begin(), s.coeffs.end(), dst);
    fftw_execute(inverse_);
    ScalarField out(grid_);
    const double scale = 1.0 / static_cast<double>(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) out[k] = real_[k] * scale;
    return out;
  }

  // Wavenumber helpers.
  [[nodiscard]] int signed_ky(int row) const { return row <= grid_.N / 2 ? row : row - grid_.N; }
  [[nodiscard]] double kx(int col) const { return col * grid_.wavenumber_unit(); }
  [[nodiscard]] double ky(int row) const { return signed_ky(row) * grid_.wavenumber_unit(); }
  [[nodiscard]] bool is_nyquist(int col, int row) const {
    return col == grid_.N / 2 || row == grid_.N / 2;
  }

  /// Applies `mult(kx, ky, col, row)` to every coefficient.
  template <class F>
  void apply(SpectralField& s, F&& mult) const {
    const int cols = s.columns();
    for (int row = 0; row < grid_.N; ++row)
      for (int col = 0; col < cols; ++col) s(col, row) *= mult(kx(col), ky(row), col, row);
  }

 private:
  Grid grid_;
  double* real_ = nullptr;
  fftw_complex* cplx_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

// ---- Spectral differential operators ---------------------------------------------------
// Odd derivatives drop the Nyquist modes so derivatives of real fields stay real.

inline SpectralField d_dx(const Spectral& sp, SpectralField s) {
  sp.apply(s, [&](double kx, double, int c, int r) {
    return sp.is_nyquist(c, r) ? Complex{} : Complex{0.0, kx};
  });
  return s;
}

inline SpectralField d_dy(const Spectral& sp, SpectralField s) {
  sp.apply(s, [&](double, double ky, int c, int r) {
    return sp.is_nyquist(c, r) ? Complex{} : Complex{0.0, ky};
  });
  return s;
}

inline ScalarField derivative_x(Spectral& sp, const ScalarField& f) {
  return sp.inverse(d_dx(sp, sp.forward(f)));
}
inline ScalarField derivative_y(Spectral& sp, const ScalarField& f) {
  return sp.inverse(d_dy(sp, sp.forward(f)));
}

/// curl u = d_x u_y - d_y u_x
inline ScalarField curl(Spectral& sp, const VectorField& u) {
  SpectralField a = d_dx(sp, sp.forward(u.y));
  const SpectralField b = d_dy(sp, sp.forward(u.x));
  for (std::size_t k = 0; k < a.coeffs.size(); ++k) a.coeffs[k] -= b.coeffs[k];
  return sp.inverse(a);
}

inline ScalarField divergence(Spectral& sp, const VectorField& u) {
  SpectralField a = d_dx(sp, sp.forward(u.x));
  const SpectralField b = d_dy(sp, sp.forward(u.y));
  for (std::size_t k = 0; k < a.coeffs.size(); ++k) a.coeffs[k] += b.coeffs[k];
  return sp.inverse(a);
}

/// grad^perp psi = (-d_y psi, d_x psi)
inline VectorField perp_gradient(Spectral& sp, const SpectralField& psi_hat) {
  ScalarField ux = sp.inverse(d_dy(sp, psi_hat));
  ux *= -1.0;
  return VectorField(std::move(ux), sp.inverse(d_dx(sp, psi_hat)));
}
inline VectorField perp_gradient(Spectral& sp, const ScalarField& psi) {
  return perp_gradient(sp, sp.forward(psi));
}

inline VectorField gradient(Spectral& sp, const ScalarField& f) {
  const SpectralField fh = sp.forward(f);
  return VectorField(sp.inverse(d_dx(sp, fh)), sp.inverse(d_dy(sp, fh)));
}

/// Solves Laplacian(psi) = w with zero-mean psi (w's mean is ignored).
inline SpectralField inverse_laplacian(const Spectral& sp, SpectralField w_hat) {
  sp.apply(w_hat, [](double kx, double ky, int, int) {
    const double k2 = kx * kx + ky * ky;
    return k2 == 0.0 ? Complex{} : Complex{-1.0 / k2, 0.0};
  });
  return w_hat;
}

/// Velocity from vorticity on the torus: u = mean + grad^perp Laplacian^{-1} omega.
inline VectorField velocity_from_vorticity(Spectral& sp, const SpectralField& omega_hat,
                                           Vec2 mean) {
  VectorField u = perp_gradient(sp, inverse_laplacian(sp, omega_hat));
  for (double& v : u.x.data()) v += mean.x;
  for (double& v : u.y.data()) v += mean.y;
  return u;
}

/// L2-orthogonal projection onto divergence-free fields; keeps the mean flow.
inline VectorField leray_project(Spectral& sp, const VectorField& u) {
  SpectralField ax = sp.forward(u.x);
  SpectralField ay = sp.forward(u.y);
  const int cols = ax.columns();
  for (int row = 0; row < sp.grid().N; ++row)
    for (int col = 0; col < cols; ++col) {
      double kx = sp.kx(col);
      double ky = sp.ky(row);
      // Nyquist components carry no resolvable divergence direction; drop that axis.
      if (col == sp.grid().N / 2) kx = 0.0;
      if (row == sp.grid().N / 2) ky = 0.0;
      const double k2 = kx * kx + ky * ky;
      if (k2 == 0.0) continue;
      const Complex kdotu = kx * ax(col, row) + ky * ay(col, row);
      ax(col, row) -= kx * kdotu / k2;
      ay(col, row) -= ky * kdotu / k2;
    }
  return VectorField(sp.inverse(ax), sp.inverse(ay));
}

/// 2/3-rule truncation (square filter in index space).
inline void dealias(const Spectral& sp, SpectralField& s) {
  const int cut = sp.grid().N / 3;
  sp.apply(s, [&](double, double, int col, int row) {
    return (col <= cut && std::abs(sp.signed_ky(row)) <= cut) ? Complex{1.0, 0.0} : Complex{};
  });
}

// ---- Spectral norms ------------------------------------------------------------------
// Parseval on the torus: integral |f|^2 = (L^2 / N^4) * sum over the full spectrum.

inline double sobolev_norm_sq(const Spectral& sp, const SpectralField& s, double order) {
  const Grid& g = sp.grid();
  const int cols = s.columns();
  double acc = 0.0;
  for (int row = 0; row < g.N; ++row)
    for (int col = 0; col < cols; ++col) {
      const double k2 = sp.kx(col) * sp.kx(col) + sp.ky(row) * sp.ky(row);
      const double w = (col == 0 || col == g.N / 2) ? 1.0 : 2.0;
      acc += w * std::pow(1.0 + k2, order) * std::norm(s(col, row));
    }
  const double n2 = static_cast<double>(g.size());
  return acc * g.L * g.L / (n2 * n2);
}

/// H^s norm of a vector field (sum over components), computed spectrally.
inline double sobolev_norm(Spectral& sp, const VectorField& u, double order) {
  return std::sqrt(sobolev_norm_sq(sp, sp.forward(u.x), order) +
                   sobolev_norm_sq(sp, sp.forward(u.y), order));
}

/// ||grad u||_{L2}, spectrally.
inline double gradient_l2_norm(Spectral& sp, const VectorField& u) {
  const double h1 = sobolev_norm(sp, u, 1.0);
  const double l2 = sobolev_norm(sp, u, 0.0);
  return std::sqrt(std::max(0.0, h1 * h1 - l2 * l2));
}

/// Trigonometric interpolant of a real field at an arbitrary point.
inline double interpolate(const Spectral& sp, const SpectralField& s, Vec2 p) {
  const Grid& g = sp.grid();
  const double x = p.x + 0.5 * g.L;  // shift to the FFT origin at node (0, 0)
  const double y = p.y + 0.5 * g.L;
  const int cols = s.columns();
  std::vector<Complex> ex(cols);
  for (int col = 0; col < cols; ++col) ex[col] = std::polar(1.0, sp.kx(col) * x);
  double acc = 0.0;
  for (int row = 0; row < g.N; ++row) {
    // The ky Nyquist row is split evenly between +-N/2, which turns it into a cosine.
    const Complex ey = row == g.N / 2 ? Complex{std::cos(sp.ky(row) * y), 0.0}
                                      : std::polar(1.0, sp.ky(row) * y);
    for (int col = 0; col < cols; ++col) {
      const double w = (col == 0 || col == g.N / 2) ? 1.0 : 2.0;
      acc += w * (s(col, row) * ey * ex[col]).real();
    }
  }
  return acc / static_cast<double>(g.size());
}

}  // namespace smallbody
