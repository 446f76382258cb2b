#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "smallbody/snapshot.hpp"
#include "smallbody/stream.hpp"

using namespace smallbody;

namespace {

constexpr double kPi = std::numbers::pi;

// Random band-limited stream: sum of a few low Fourier modes with seeded coefficients.
ScalarField random_band_limited_stream(const Grid& g, std::uint64_t seed, int max_mode) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> coef(0.0, 1.0);
  const double k0 = g.wavenumber_unit();
  struct Mode {
    int mx, my;
    double a, b;
  };
  std::vector<Mode> modes;
  for (int my = -max_mode; my <= max_mode; ++my)
    for (int mx = 0; mx <= max_mode; ++mx)
      if ((mx != 0 || my > 0) && mx * mx + my * my <= max_mode * max_mode)
        modes.push_back({mx, my, coef(rng), coef(rng)});
  return ScalarField::sample(g, [&](Vec2 p) {
    double v = 0.0;
    for (const auto& m : modes) {
      const double ph = k0 * (m.mx * p.x + m.my * p.y);
      v += m.a * std::cos(ph) + m.b * std::sin(ph);
    }
    return v;
  });
}

VectorField sample_velocity(const Grid& g, const GaussianStream& s) {
  return VectorField::sample(g, [&](Vec2 p) { return s.velocity(p); });
}

struct DeskSetup {
  Grid grid = Grid::make(3.2, 256);
  GaussianStream stream{{0.08, -0.05}, 0.15, 0.3};
  SmoothCutoffSpec spec = SmoothCutoffSpec::relaxed(0.1, 16.0);
};

}  // namespace

TEST(BiotSavart, ZeroFieldGivesZeroStream) {
  const Grid g = Grid::make(1.0, 32);
  Spectral sp(g);
  const ScalarField psi = biot_savart_stream(sp, VectorField(g));
  EXPECT_EQ(psi.max_abs(), 0.0);
}

TEST(BiotSavart, RecoversGaussianStreamUpToItsMean) {
  const Grid g = Grid::make(2.0, 128);
  Spectral sp(g);
  const GaussianStream s{{0.1, -0.2}, 0.1, 1.0};
  const ScalarField psi0 = ScalarField::sample(g, [&](Vec2 p) { return s(p).value; });
  const ScalarField psi = biot_savart_stream(sp, sample_velocity(g, s));
  const double m = psi0.mean();
  double err = 0.0;
  for (std::size_t k = 0; k < psi.data().size(); ++k) err = std::max(err, std::abs(psi[k] - (psi0[k] - m)));
  EXPECT_LT(err, 1e-10);
}

TEST(BiotSavart, PerpGradientIdentityOnRandomFields) {
  const Grid g = Grid::make(2.0 * kPi, 64);
  Spectral sp(g);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const VectorField phi = perp_gradient(sp, random_band_limited_stream(g, seed, 8));
    const VectorField back = perp_gradient(sp, biot_savart_stream(sp, phi));
    EXPECT_LT(l2_norm(back - phi) / l2_norm(phi), 1e-10) << "seed " << seed;
  }
}

TEST(BiotSavart, RejectsDivergentInputWithMeasuredDivergence) {
  const Grid g = Grid::make(2.0 * kPi, 32);
  Spectral sp(g);
  const VectorField radial =
      VectorField::sample(g, [](Vec2 p) { return Vec2{std::sin(p.x), 0.0}; });
  try {
    (void)biot_savart_stream(sp, radial);
    FAIL() << "expected rejection";
  } catch (const ValidationError& e) {
    EXPECT_NEAR(e.measured(), 1.0, 1e-10);
  }
  const VectorField drift = VectorField::sample(g, [](Vec2) { return Vec2{1.0, 0.0}; });
  EXPECT_THROW((void)biot_savart_stream(sp, drift), ValidationError);
}

TEST(ModifiedStream, VanishesAtTheCentre) {
  const Grid g = Grid::make(2.0 * kPi, 64);
  Spectral sp(g);
  const ScalarField constant(g, 3.5);
  EXPECT_LT(modify_stream(sp, constant, {0.3, 0.1}).psi_eps.max_abs(), 1e-14);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ScalarField psi = random_band_limited_stream(g, seed, 6);
    const Vec2 h{coord(rng), coord(rng)};
    const ModifiedStream m = modify_stream(sp, psi, h);
    EXPECT_LT(std::abs(interpolate(sp, sp.forward(m.psi_eps), h)), 1e-12);
  }
}

TEST(ModifiedStream, InterpolationReproducesSmoothFunctions) {
  const Grid g = Grid::make(2.0 * kPi, 64);
  Spectral sp(g);
  const auto f = [](Vec2 p) { return std::sin(2 * p.x) * std::cos(3 * p.y) + 0.2 * std::cos(p.x - p.y); };
  const SpectralField fh = sp.forward(ScalarField::sample(g, f));
  for (Vec2 p : {Vec2{0.123, -1.7}, Vec2{2.9, 0.4}, Vec2{-3.0, 3.0}})
    EXPECT_NEAR(interpolate(sp, fh, p), f(p), 1e-12);
}

TEST(ModifiedStream, LocalBoundByRadiusTimesSupNorm) {
  DeskSetup d;
  Spectral sp(d.grid);
  const VectorField phi = sample_velocity(d.grid, d.stream);
  const ScalarField psi = biot_savart_stream(sp, phi);
  for (Vec2 h : {Vec2{0.0, 0.0}, Vec2{0.2, 0.1}, Vec2{-0.3, 0.25}}) {
    const ScalarField pe = modify_stream(sp, psi, h).psi_eps;
    for (double R : {d.spec.eps() * d.spec.alpha(), d.grid.L / 8.0})
      EXPECT_LE(local_sup(pe, h, R), R * phi.max_abs() + 1e-10);
  }
}

TEST(ModifiedStream, TimeDerivativeBoundAtDifferentiableTimes) {
  // phi(t) = a(t) phi0 and a moving centre; d_t psi_eps by central differences in time.
  DeskSetup d;
  Spectral sp(d.grid);
  const VectorField phi0 = sample_velocity(d.grid, d.stream);
  const ScalarField psi0 = biot_savart_stream(sp, phi0);
  const PiecewiseLinearPath path({0.0, 1.0}, {{0.0, 0.0}, {0.4, -0.2}});
  auto a = [](double t) { return 1.0 + 0.5 * std::sin(3.0 * t); };
  auto da = [](double t) { return 1.5 * std::cos(3.0 * t); };
  auto psi_eps_at = [&](double t) {
    return modify_stream(sp, a(t) * psi0, path.position(t)).psi_eps;
  };
  const double t = 0.4;
  const double dt = 1e-5;
  ScalarField dpsi = psi_eps_at(t + dt) - psi_eps_at(t - dt);
  dpsi *= 1.0 / (2.0 * dt);
  const Vec2 h = path.position(t);
  for (double R : {0.3, d.grid.L / 8.0}) {
    const double bound = R * std::abs(da(t)) * phi0.max_abs() +
                         path.velocity(t).norm() * a(t) * phi0.max_abs();
    EXPECT_LE(local_sup(dpsi, h, R), bound * (1 + 1e-6));
  }
}

TEST(TestFunction, SupportAndIdentityRegions) {
  DeskSetup d;
  Spectral sp(d.grid);
  const VectorField phi = sample_velocity(d.grid, d.stream);
  const Vec2 h{0.05, 0.02};
  const MovingCutoff mc(d.spec, PiecewiseLinearPath::constant(h, 1.0));
  const TestFunctionBundle b = build_test_function(sp, phi, mc, 0.5);
  const Grid& g = d.grid;
  double inner_max = 0.0;
  double outer_pointwise = 0.0;
  double outer_spectral = 0.0;
  for (int j = 0; j < g.N; ++j)
    for (int i = 0; i < g.N; ++i) {
      const std::size_t k = g.index(i, j);
      const double r = g.displacement(h, g.point(i, j)).norm();
      if (r < 2.0 * d.spec.eps()) inner_max = std::max(inner_max, b.phi_eps_pointwise.at(k).norm());
      if (r >= d.spec.eps() * d.spec.alpha()) {
        outer_pointwise = std::max(outer_pointwise, (b.phi_eps_pointwise.at(k) - phi.at(k)).norm());
        outer_spectral = std::max(outer_spectral, (b.phi_eps.at(k) - phi.at(k)).norm());
      }
    }
  EXPECT_EQ(inner_max, 0.0);
  EXPECT_EQ(outer_pointwise, 0.0);
  EXPECT_LT(outer_spectral, 1e-4 * phi.max_abs());
  EXPECT_LT(relative_divergence(sp, b.phi_eps), 1e-10);
  EXPECT_LT(l2_norm(b.phi_eps - b.phi_eps_pointwise) / l2_norm(phi), 2e-3);
  EXPECT_LT(std::abs(interpolate(sp, sp.forward(b.psi_eps), h)), 1e-12);
}

TEST(TestFunction, SpectralAndPointwiseFormsConvergeUnderRefinement) {
  DeskSetup d;
  const MovingCutoff mc(d.spec, PiecewiseLinearPath::constant({0.05, 0.02}, 1.0));
  auto mismatch = [&](int n) {
    const Grid g = Grid::make(d.grid.L, n);
    Spectral sp(g);
    const VectorField phi = sample_velocity(g, d.stream);
    const auto b = build_test_function(sp, phi, mc, 0.0);
    return l2_norm(b.phi_eps - b.phi_eps_pointwise) / l2_norm(phi);
  };
  const double coarse = mismatch(256);
  const double fine = mismatch(512);
  EXPECT_LT(fine, coarse / 8.0);
}

TEST(TestFunction, StreamIdentityHoldsInBundle) {
  DeskSetup d;
  Spectral sp(d.grid);
  const VectorField phi = sample_velocity(d.grid, d.stream);
  const MovingCutoff mc(d.spec, PiecewiseLinearPath::constant({0.0, 0.0}, 1.0));
  const auto b = build_test_function(sp, phi, mc, 0.0);
  EXPECT_LT(l2_norm(perp_gradient(sp, b.psi) - phi) / l2_norm(phi), 1e-10);
  EXPECT_LT(l2_norm(perp_gradient(sp, b.psi_eps) - phi) / l2_norm(phi), 1e-10);
}

TEST(H1Distance, ZeroFieldAndGridMismatch) {
  const Grid g = Grid::make(1.0, 32);
  Spectral sp(g);
  const auto z = h1_distance(sp, VectorField(g), VectorField(g));
  EXPECT_EQ(z.l2, 0.0);
  EXPECT_EQ(z.gradient_l2, 0.0);
  EXPECT_THROW((void)h1_distance(sp, VectorField(g), VectorField(Grid::make(2.0, 32))),
               ValidationError);
}

TEST(H1Distance, PolarQuadratureAgreesWithGridRoute) {
  DeskSetup d;
  Spectral sp(d.grid);
  const VectorField phi = sample_velocity(d.grid, d.stream);
  const Vec2 h{0.03, -0.02};
  const MovingCutoff mc(d.spec, PiecewiseLinearPath::constant(h, 1.0));
  const auto b = build_test_function(sp, phi, mc, 0.0);
  const H1Distance grid = h1_distance(sp, b.phi_eps, phi);
  const H1Distance polar = h1_distance_polar(d.stream, d.spec, h, 24, 256);
  EXPECT_NEAR(grid.l2, polar.l2, 1e-4 * polar.l2);
  EXPECT_NEAR(grid.gradient_l2, polar.gradient_l2, 1e-3 * polar.gradient_l2);
}

TEST(H1Distance, DoublingTheTorusLeavesTheDistanceUnchanged) {
  DeskSetup d;
  const Grid big = Grid::make(2.0 * d.grid.L, 2 * d.grid.N);
  const Vec2 h{0.03, -0.02};
  const MovingCutoff mc(d.spec, PiecewiseLinearPath::constant(h, 1.0));
  auto distance = [&](const Grid& g) {
    Spectral sp(g);
    const VectorField phi = sample_velocity(g, d.stream);
    return h1_distance(sp, build_test_function(sp, phi, mc, 0.0).phi_eps, phi);
  };
  const auto a = distance(d.grid);
  const auto b = distance(big);
  EXPECT_LT(std::abs(a.h1() - b.h1()) / a.h1(), 1e-6);
}

TEST(H1Distance, DecreasesAlongAnEpsilonFamily) {
  const GaussianStream s{{0.3, 0.1}, 0.5, 1.0};
  const auto coarse = h1_distance_polar(s, SmoothCutoffSpec::admissible(1e-3, 100.0), {0.0, 0.0});
  const auto fine = h1_distance_polar(s, SmoothCutoffSpec::admissible(1e-5, 316.0), {0.0, 0.0});
  EXPECT_LT(fine.h1(), coarse.h1());
}

TEST(H1Distance, FittedConstantAgainstH3NormStaysBounded) {
  // ||phi_eps||_{H1} <= ||phi||_{H1} + ||phi_eps - phi||_{H1}; ||phi||_{H^k} of the plane
  // Gaussian stream via a fine torus grid.
  const GaussianStream s{{0.3, 0.1}, 0.5, 1.0};
  const Grid g = Grid::make(12.0, 256);
  Spectral sp(g);
  const VectorField phi = sample_velocity(g, s);
  const double h1 = sobolev_norm(sp, phi, 1.0);
  const double h3 = sobolev_norm(sp, phi, 3.0);
  std::vector<double> constants;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const auto spec = SmoothCutoffSpec::admissible(eps, alpha_schedule(eps, 0.0).alpha);
    const auto dist = h1_distance_polar(s, spec, {0.0, 0.0});
    constants.push_back((h1 + dist.h1()) / h3);
  }
  const auto [lo, hi] = std::minmax_element(constants.begin(), constants.end());
  EXPECT_LT(*hi, 2.0 * *lo);
  EXPECT_LT(*hi, 10.0);
}

TEST(TimeDerivativePairing, VanishesForStaticBodyAndStaticField) {
  DeskSetup d;
  Spectral sp(d.grid);
  const VectorField phi = sample_velocity(d.grid, d.stream);
  const MovingCutoff mc(d.spec, PiecewiseLinearPath::constant({0.0, 0.0}, 1.0));
  const auto b = build_test_function(sp, phi, mc, 0.3);
  const VectorField w = perp_gradient(sp, random_band_limited_stream(d.grid, 5, 4));
  EXPECT_LT(std::abs(timeder_pairing(sp, w, b, mc)), 1e-14);
}

TEST(TimeDerivativePairing, VanishesForCurlFreeFields) {
  DeskSetup d;
  Spectral sp(d.grid);
  const VectorField phi = sample_velocity(d.grid, d.stream);
  const MovingCutoff mc(d.spec, PiecewiseLinearPath({0.0, 1.0}, {{0.0, 0.0}, {0.2, 0.1}}));
  const auto b = build_test_function(sp, phi, mc, 0.3);
  const VectorField uniform = VectorField::sample(d.grid, [](Vec2) { return Vec2{0.7, -0.2}; });
  EXPECT_LT(std::abs(timeder_pairing(sp, uniform, b, mc)), 1e-12);
}

TEST(TimeDerivativePairing, MatchesTimeDifferenceOracle) {
  // Independent route: central difference of integral w . phi_eps(t) in time.
  DeskSetup d;
  Spectral sp(d.grid);
  const VectorField phi = sample_velocity(d.grid, d.stream);
  const ScalarField psi = biot_savart_stream(sp, phi);
  const MovingCutoff mc(d.spec, PiecewiseLinearPath({0.0, 1.0}, {{0.0, 0.0}, {0.3, 0.1}}));
  const VectorField w = sample_velocity(d.grid, GaussianStream{{-0.05, 0.1}, 0.2, 0.5});
  const double t = 0.4;
  const double dt = 1e-4;
  const double plus = inner(w, build_test_function(sp, phi, mc, t + dt, psi).phi_eps);
  const double minus = inner(w, build_test_function(sp, phi, mc, t - dt, psi).phi_eps);
  const double oracle = (plus - minus) / (2.0 * dt);
  const double pairing = timeder_pairing(sp, w, build_test_function(sp, phi, mc, t, psi), mc);
  EXPECT_NEAR(pairing, oracle, 1e-5 * std::abs(oracle) + 1e-10);
  EXPECT_GT(std::abs(oracle), 1e-4);
}

TEST(TimeDerivativePairing, RefusesBreakPointTimes) {
  DeskSetup d;
  Spectral sp(d.grid);
  const VectorField phi = sample_velocity(d.grid, d.stream);
  const MovingCutoff mc(d.spec,
                        PiecewiseLinearPath({0.0, 0.5, 1.0}, {{0.0, 0.0}, {0.1, 0.0}, {0.1, 0.1}}));
  const auto b = build_test_function(sp, phi, mc, 0.5);
  EXPECT_THROW((void)timeder_pairing(sp, phi, b, mc), ValidationError);
}

TEST(TimeDerivativePairing, StaysWithinTheEnvelopeAcrossEpsilon) {
  // w = phi, |h'| = 1: the pairing follows eps alpha / sqrt(ln alpha) up to a fitted constant.
  const Grid g = Grid::make(3.2, 256);
  Spectral sp(g);
  const GaussianStream s{{0.08, -0.05}, 0.15, 0.3};
  const VectorField phi = sample_velocity(g, s);
  const ScalarField psi = biot_savart_stream(sp, phi);
  const double curl_l2 = l2_norm(curl(sp, phi));
  std::vector<double> constants;
  for (double eps : {0.08, 0.04, 0.02}) {
    const auto spec = SmoothCutoffSpec::relaxed(eps, 16.0);
    const MovingCutoff mc(spec, PiecewiseLinearPath({0.0, 1.0}, {{0.0, 0.0}, {1.0, 0.0}}));
    const auto b = build_test_function(sp, phi, mc, 0.05, psi);
    const double p = std::abs(timeder_pairing(sp, phi, b, mc));
    constants.push_back(p / timeder_envelope(curl_l2, spec, 0.0, 1.0, phi.max_abs()));
  }
  for (double c : constants) EXPECT_LT(c, 10.0);
  const auto [lo, hi] = std::minmax_element(constants.begin(), constants.end());
  EXPECT_LT(*hi, 4.0 * *lo);
}

TEST(Snapshot, EncodeDecodePreservesFieldsBitExactly) {
  const Grid g = Grid::make(1.5, 32);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int comps : {1, 2}) {
    Snapshot s;
    s.time = 0.125;
    ScalarField a = ScalarField::sample(g, [&](Vec2) { return n(rng); });
    if (comps == 1) {
      s.field = a;
    } else {
      s.field = VectorField(a, ScalarField::sample(g, [&](Vec2) { return n(rng); }));
    }
    const auto bytes = encode_snapshot(s);
    EXPECT_EQ(bytes.size(), kSnapshotHeaderBytes + 8 * g.size() * comps);
    EXPECT_EQ(bytes[12], comps);
    const Snapshot back = decode_snapshot(bytes);
    EXPECT_EQ(back.time, 0.125);
    EXPECT_EQ(back.grid(), g);
    EXPECT_EQ(encode_snapshot(back), bytes);
  }
}

TEST(Snapshot, HeaderIsLittleEndian) {
  Snapshot s;
  s.field = ScalarField(Grid::make(1.0, 32));
  const auto bytes = encode_snapshot(s);
  // uint32 N = 32 at byte offset 8, least significant byte first.
  EXPECT_EQ(bytes[8], 32);
  EXPECT_EQ(bytes[9], 0);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW((void)decode_snapshot(truncated), ValidationError);
}
