#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qlmpa/model.hpp"

using namespace qlmpa;

namespace {

Problem power_problem(double p, double V, double delta = 2.0) {
  Problem pb;
  pb.nonlinearity = Nonlinearity::power(p);
  pb.potential = Potential::constant(V);
  pb.delta = delta;
  return pb;
}

/// Smooth random conforming function: a few sine modes with random amplitudes.
FeFunction random_smooth(const SpacePtr& s, std::mt19937& rng, double amplitude) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double R = s->mesh().R;
  double a[3][3];
  for (auto& row : a)
    for (double& x : row) x = u(rng);
  const double pi = std::numbers::pi;
  return interpolate(s, [&](const Point& x) {
    double v = 0.0;
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        v += a[k][l] / ((k + 1) * (l + 1)) * std::sin((k + 1) * pi * (x[0] / R + 0.5)) *
             std::sin((l + 1) * pi * (x[1] / R + 0.5));
    return amplitude * v;
  });
}

FeFunction transformed(const Problem& pb, const FeFunction& v) {
  Vector u = v.values();
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = r_eval(u[i], pb.delta);
  return FeFunction(v.space(), u);
}

double max_identity_gap(int n, int samples, unsigned seed) {
  const SpacePtr s = make_space(build_mesh(1.0, n));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> amp(0.1, 4.0);
  std::uniform_real_distribution<double> pick(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double p = pick(rng) < 0.5 ? 4.0 : 6.0;
    const double V = pick(rng) < 0.5 ? 0.0 : 10.0;
    Problem pb = power_problem(p, V);
    if (pick(rng) < 0.25) pb.eps_sc = 0.25;
    const FeFunction v = random_smooth(s, rng, amp(rng));
    const double T = energy_T(pb, v);
    const double E = energy_E(pb, transformed(pb, v));
    worst = std::max(worst, std::abs(E - T) / std::max(1.0, std::abs(T)));
  }
  return worst;
}

}  // namespace

TEST(Nonlinearity, PowerValidation) {
  EXPECT_THROW(Nonlinearity::power(1.0), InvalidArgument);
  EXPECT_THROW(Nonlinearity::power(0.5), InvalidArgument);
  try {
    Nonlinearity::power(0.5);
  } catch (const InvalidArgument& e) {
    EXPECT_STREQ(e.what(), "p must exceed 1");
  }
}

TEST(Nonlinearity, OddAndPrimitive) {
  for (const auto& g : {Nonlinearity::power(4.0), Nonlinearity::power(5.5), Nonlinearity::exponential()}) {
    EXPECT_EQ(g.g(0.0), 0.0);
    for (double u : {0.1, 0.9, 1.7, 2.5}) {
      EXPECT_EQ(g.g(-u), -g.g(u));
      // Simpson check of G' = g.
      const double h = 1e-4;
      const double dG = (g.primitive(u + h) - g.primitive(u - h)) / (2 * h);
      EXPECT_NEAR(dG, g.g(u), 1e-6 * std::max(1.0, g.g(u)));
      const double dg = (g.g(u + h) - g.g(u - h)) / (2 * h);
      EXPECT_NEAR(dg, g.dg(u), 1e-6 * std::max(1.0, g.dg(u)));
    }
  }
  EXPECT_NEAR(Nonlinearity::exponential().g(1.0), std::exp(1.0) - 1.0, 1e-15);
  EXPECT_THROW(Nonlinearity::exponential().primitive(8.5), Error);
}

TEST(Potential, DoubleWellPositiveOnUnitSquare) {
  const Potential V = Potential::standard_double_well();
  for (double x = -0.5; x <= 0.5; x += 0.01)
    for (double y = -0.5; y <= 0.5; y += 0.01) EXPECT_GT(V.value({x, y}), 0.0);
  EXPECT_NEAR(V.value({-0.2, 0.2}), 10.0 - 8.0 - 5.0 * std::exp(-30.0 * (0.25 + 0.16)), 1e-12);
  EXPECT_THROW(Potential::constant(-1.0), InvalidArgument);
}

TEST(Potential, Tabulated) {
  const SpacePtr s = make_space(build_mesh(2.0, 4));
  const FeFunction lin = interpolate(s, [](const Point& x) { return 3.0 + x[0] - 2 * x[1]; }, false);
  const Potential V = Potential::tabulated(s, lin.values());
  EXPECT_NEAR(V.value({0.13, -0.71}), 3.0 + 0.13 + 1.42, 1e-12);
  EXPECT_EQ(V.label(), "tabulated");
}

TEST(Problem, Validation) {
  Problem pb;
  pb.eps_sc = 0.0;
  pb.delta = -1.0;
  pb.R = 0.0;
  try {
    pb.validate();
    FAIL();
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("eps_sc"), std::string::npos);
    EXPECT_NE(msg.find("delta"), std::string::npos);
    EXPECT_NE(msg.find("R must"), std::string::npos);
  }
}

TEST(PointwiseF, Examples) {
  const Point x{0.0, 0.0};
  const double v = r_inverse(1.0, 2.0);
  EXPECT_NEAR(v, 1.27128, 1e-5);
  EXPECT_EQ(f_eval(power_problem(4, 0), x, 0.0), 0.0);
  EXPECT_NEAR(f_eval(power_problem(4, 0), x, 1.27128), 0.57735, 1e-4);
  EXPECT_NEAR(f_eval(power_problem(4, 10), x, 1.27128), -5.1962, 1e-3);
  EXPECT_EQ(F_eval(power_problem(4, 0), x, 0.0), 0.0);
  EXPECT_NEAR(F_eval(power_problem(4, 0), x, 1.27128), 0.2, 1e-4);
  EXPECT_NEAR(F_eval(power_problem(4, 10), x, 1.27128), -4.8, 1e-3);
}

TEST(PointwiseF, OddEvenSymmetry) {
  const Point x{0.1, 0.2};
  Problem exp_pb = power_problem(4, 3);
  exp_pb.nonlinearity = Nonlinearity::exponential();
  for (const Problem& pb : {power_problem(4, 0), power_problem(6, 10), power_problem(4.5, 2, 1.0), exp_pb})
    for (double v = 0.01; v < 5.0; v *= 1.37) {
      EXPECT_NEAR(f_eval(pb, x, -v), -f_eval(pb, x, v), 1e-13 * std::max(1.0, std::abs(f_eval(pb, x, v))));
      EXPECT_NEAR(F_eval(pb, x, -v), F_eval(pb, x, v), 1e-13 * std::max(1.0, std::abs(F_eval(pb, x, v))));
    }
}

TEST(PointwiseF, DerivativesConsistent) {
  const Point x{0.0, 0.0};
  for (const Problem& pb : {power_problem(4, 0), power_problem(6, 10), power_problem(5, 1, 1.0)})
    for (double v = 0.05; v < 20.0; v *= 1.6) {
      const double h = 1e-5 * std::max(1.0, v);
      EXPECT_NEAR((F_eval(pb, x, v + h) - F_eval(pb, x, v - h)) / (2 * h), f_eval(pb, x, v),
                  1e-6 * std::max(1.0, std::abs(f_eval(pb, x, v))));
      EXPECT_NEAR((f_eval(pb, x, v + h) - f_eval(pb, x, v - h)) / (2 * h), df_eval(pb, x, v),
                  1e-5 * std::max(1.0, std::abs(df_eval(pb, x, v))));
    }
}

TEST(PointwiseF, MonotoneQuotient) {
  // f(v)/v nondecreasing on (1e-4, 50] for p in {3, 4, 6}, delta = 2, V >= 0.
  for (double p : {3.0, 4.0, 6.0})
    for (double V : {0.0, 1.0, 10.0}) {
      const Problem pb = power_problem(p, V);
      double prev = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < 10000; ++i) {
        const double v = 1e-4 + (50.0 - 1e-4) * (i + 1) / 10000.0;
        const double q = f_local(pb, V, v) / v;
        EXPECT_GE(q, prev - 1e-12 * std::abs(prev)) << "p=" << p << " V=" << V << " v=" << v;
        prev = q;
      }
    }
}

TEST(Energies, ZeroFunction) {
  const SpacePtr s = make_space(build_mesh(1.0, 8));
  const FeFunction z(s);
  const Problem pb = power_problem(4, 10);
  EXPECT_EQ(energy_T(pb, z), 0.0);
  EXPECT_EQ(energy_E(pb, z), 0.0);
  EXPECT_TRUE(gradient_T(pb, z).is_zero());
  EXPECT_EQ(pohozaev_diag(pb, z), 0.0);
}

TEST(Energies, LaneEmdenAtDeltaZero) {
  const SpacePtr s = make_space(build_mesh(2.0, 16));
  std::mt19937 rng(4);
  const FeFunction v = random_smooth(s, rng, 2.0);
  const Problem pb = power_problem(4, 0, 0.0);
  const double direct = 0.5 * dirichlet_energy(v) -
                        integrate(s->mesh(), [](const Point&, double x) { return std::pow(std::abs(x), 5) / 5; },
                                  v.values());
  EXPECT_NEAR(energy_T(pb, v), direct, 1e-12 * std::abs(direct));
}

TEST(Energies, RejectNonConforming) {
  const SpacePtr s = make_space(build_mesh(1.0, 4));
  const FeFunction one = interpolate(s, [](const Point&) { return 1.0; }, false);
  EXPECT_THROW(energy_T(power_problem(4, 0), one), InvalidArgument);
  EXPECT_THROW(gradient_T(power_problem(4, 0), one), InvalidArgument);
}

TEST(Energies, IdentityAtN64) { EXPECT_LE(max_identity_gap(64, 200, 64), 2e-3); }

TEST(Energies, IdentityAtN128) { EXPECT_LE(max_identity_gap(128, 200, 128), 5e-4); }

TEST(Gradient, CentralDifferences) {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> amp(0.2, 3.0);
  const SpacePtr s = make_space(build_mesh(5.0, 24));
  Problem exp_pb = power_problem(4, 0);
  exp_pb.nonlinearity = Nonlinearity::exponential();
  Problem dw = power_problem(4, 0);
  dw.potential = Potential::standard_double_well();
  dw.eps_sc = 0.3;
  const std::vector<Problem> problems{power_problem(4, 0), power_problem(6, 10), power_problem(4, 10, 1.0), exp_pb, dw};
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Problem& pb = problems[i % problems.size()];
    const FeFunction v = random_smooth(s, rng, amp(rng));
    const FeFunction phi = random_smooth(s, rng, 1.0);
    const double h = 1e-5 * std::sqrt(dirichlet_energy(v));
    const FeFunction vp(s, v.values() + h * phi.values());
    const FeFunction vm(s, v.values() - h * phi.values());
    const double fd = (energy_T(pb, vp) - energy_T(pb, vm)) / (2 * h);
    const double an = h10_inner(pb, gradient_T(pb, v), phi);
    const double rel = std::abs(fd - an) / std::max(std::abs(an), 1e-12);
    worst = std::max(worst, rel);
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Gradient, JacobianMatchesLoadDerivative) {
  std::mt19937 rng(5);
  const SpacePtr s = make_space(build_mesh(5.0, 12));
  const Problem pb = power_problem(4, 10);
  const FeFunction v = random_smooth(s, rng, 2.0);
  const FeFunction phi = random_smooth(s, rng, 1.0);
  const double h = 1e-6;
  auto residual = [&](const FeFunction& w) {
    return Vector(s->stiffness().matrix() * s->restrict_to_free(w.values()) - nonlinear_load(pb, w));
  };
  const Vector fd = (residual(FeFunction(s, v.values() + h * phi.values())) -
                     residual(FeFunction(s, v.values() - h * phi.values()))) /
                    (2 * h);
  const Vector an = residual_jacobian(pb, v) * s->restrict_to_free(phi.values());
  EXPECT_LE((fd - an).norm(), 1e-6 * an.norm());
}

TEST(Pohozaev, SignForZeroPotential) {
  std::mt19937 rng(8);
  const SpacePtr s = make_space(build_mesh(1.0, 16));
  const FeFunction v = random_smooth(s, rng, 1.0);
  const double d = pohozaev_diag(power_problem(4, 0), v);
  EXPECT_LT(d, 0.0);
  Problem dw = power_problem(4, 0);
  dw.potential = Potential::standard_double_well();
  EXPECT_THROW(pohozaev_diag(dw, v), InvalidArgument);
}

TEST(Transform, DisabledEqualsIdentityAtDeltaZero) {
  std::mt19937 rng(12);
  const SpacePtr s = make_space(build_mesh(3.0, 16));
  const FeFunction v = random_smooth(s, rng, 2.0);
  Problem a = power_problem(5, 2, 0.0);
  Problem b = a;
  b.transform = false;
  EXPECT_EQ(energy_T(a, v), energy_T(b, v));
  EXPECT_EQ((gradient_T(a, v).values() - gradient_T(b, v).values()).norm(), 0.0);
  b.delta = 1.0;
  EXPECT_THROW(b.validate(), InvalidArgument);
}
