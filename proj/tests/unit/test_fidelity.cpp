#include "fpdrift/fidelity.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace fpdrift;

namespace {

const Mesh kMesh(-1.0, 1.0, 64);
const FemSpacePtr kSpace = make_space(kMesh);

// exp of a random cosine series, normalised to unit mass.
FemFunction random_density(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double a[3], p[3];
  for (int k = 0; k < 3; ++k) {
    a[k] = u(rng);
    p[k] = std::numbers::pi * u(rng);
  }
  FemFunction f = interpolate(kMesh, [&](double x) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += a[k] * std::cos((k + 1) * x + p[k]);
    return std::exp(s);
  });
  f.coeffs /= integrate(f);
  return f;
}

EmpiricalMeasure random_obs(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  std::vector<double> pts(n);
  for (auto& y : pts) y = u(rng);
  return EmpiricalMeasure(pts);
}

Vector random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector d(kMesh.dofs());
  for (Index i = 0; i < d.size(); ++i) d(i) = g(rng);
  return d / d.norm();
}

FemFunction shifted(const FemFunction& f, double eps, const Vector& d) {
  return FemFunction(f.mesh, f.coeffs + eps * d);
}

}  // namespace

TEST(NegLogLikelihood, UniformDensity) {
  const EmpiricalMeasure obs({-0.5, 0.1, 0.7});
  EXPECT_NEAR(neg_log_likelihood(obs, FemFunction::constant(kMesh, 0.5)).value, std::log(2.0), 1e-15);
}

TEST(NegLogLikelihood, ZeroAtAnObservationIsInfinite) {
  const FemFunction v = interpolate(kMesh, [](double x) { return x * x; });
  const FidelityValue r = neg_log_likelihood(EmpiricalMeasure({0.0, 0.5}), v);
  EXPECT_FALSE(r.finite());
  EXPECT_EQ(r.value, std::numeric_limits<double>::infinity());
  EXPECT_FALSE(r.gradient.has_value());
}

TEST(NegLogLikelihood, GaussianOracle) {
  const Mesh fine(-1.0, 1.0, 4000);
  const double z = integrate_on(fine, -1.0, 1.0, [](double x) { return std::exp(-4.0 * x * x); });
  const FemFunction v = interpolate(kMesh, [z](double x) { return std::exp(-4.0 * x * x) / z; });
  EXPECT_NEAR(neg_log_likelihood(EmpiricalMeasure({0.0, 0.5}), v).value, std::log(z) + 0.5, 1e-7);
}

TEST(ShiftedFidelity, ConstantDensity) {
  const double tau = 0.1;
  const FidelityValue r =
      shifted_fidelity(EmpiricalMeasure({-0.3, 0.2}), FemFunction::constant(kMesh, 0.5), {tau});
  EXPECT_NEAR(r.value, 1.0 - 1.2 * std::log(0.6), 1e-13);
}

TEST(ShiftedFidelity, DomainConstraint) {
  const double tau = 0.1;
  const EmpiricalMeasure obs({0.5});
  const FemFunction below = interpolate(kMesh, [&](double x) { return x * x - 0.6 * tau; });
  EXPECT_FALSE(shifted_fidelity(obs, below, {tau}).finite());
  const FemFunction above = interpolate(kMesh, [&](double x) { return x * x - 0.4 * tau; });
  EXPECT_TRUE(shifted_fidelity(obs, above, {tau}).finite());
}

TEST(ShiftedFidelity, RejectsNonPositiveTau) {
  EXPECT_THROW(shifted_fidelity(EmpiricalMeasure({0.0}), FemFunction::constant(kMesh, 0.5), {0.0}),
               PreconditionError);
}

TEST(ShiftedFidelity, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const EmpiricalMeasure obs = random_obs(rng, 50);
  const FemFunction v = random_density(rng);
  const ShiftParam tau{1e-3};
  const Vector grad = *shifted_fidelity(obs, v, tau).gradient;
  for (int trial = 0; trial < 10; ++trial) {
    const Vector d = random_direction(rng);
    const double eps = 1e-5;
    const double fd = (shifted_fidelity(obs, shifted(v, eps, d), tau).value -
                       shifted_fidelity(obs, shifted(v, -eps, d), tau).value) / (2.0 * eps);
    EXPECT_LT(std::abs(fd - grad.dot(d)), 1e-6 * std::abs(grad.dot(d)));
  }
}

TEST(ShiftedFidelity, ConvexAlongSegments) {
  std::mt19937_64 rng(7);
  const EmpiricalMeasure obs = random_obs(rng, 30);
  const ShiftParam tau{1e-3};
  for (int trial = 0; trial < 100; ++trial) {
    const FemFunction a = random_density(rng);
    const FemFunction b = random_density(rng);
    const FemFunction mid(kMesh, 0.5 * (a.coeffs + b.coeffs));
    const double fa = shifted_fidelity(obs, a, tau).value;
    const double fb = shifted_fidelity(obs, b, tau).value;
    EXPECT_LE(shifted_fidelity(obs, mid, tau).value, 0.5 * (fa + fb) + 1e-12);
  }
}

TEST(ShiftedLikelihood, MatchesFreeFunctionAndHessian) {
  std::mt19937_64 rng(11);
  const EmpiricalMeasure obs = random_obs(rng, 40);
  const ShiftParam tau{1e-3};
  const ShiftedLikelihood s(kSpace, obs, tau);
  const FemFunction v = random_density(rng);
  const FidelityValue ref = shifted_fidelity(obs, v, tau);
  EXPECT_NEAR(s.value(v.coeffs), ref.value, 1e-13);
  EXPECT_LT((s.gradient(v.coeffs) - *ref.gradient).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT((s.hessian(v.coeffs) - Matrix(s.hessian_sparse(v.coeffs))).cwiseAbs().maxCoeff(), 1e-12);

  const Matrix h = s.hessian(v.coeffs);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector d = random_direction(rng);
    const double eps = 1e-6;
    const Vector fd = (s.gradient(v.coeffs + eps * d) - s.gradient(v.coeffs - eps * d)) / (2.0 * eps);
    EXPECT_LT((fd - h * d).norm(), 1e-6 * (h * d).norm());
  }
  EXPECT_TRUE(s.feasible(v.coeffs));
  EXPECT_FALSE(s.feasible(Vector::Constant(kMesh.dofs(), -0.6 * tau.tau)));
  EXPECT_EQ(s.value(Vector::Constant(kMesh.dofs(), -0.6 * tau.tau)), std::numeric_limits<double>::infinity());
}

TEST(KullbackLeibler, IdentityIsZero) {
  std::mt19937_64 rng(13);
  const FemFunction u = random_density(rng);
  EXPECT_NEAR(kullback_leibler(u, u, {0.0}).value, 0.0, 1e-15);
  EXPECT_NEAR(kullback_leibler(u, u, {1e-3}).value, 0.0, 1e-15);
}

TEST(KullbackLeibler, LinearPerturbationOfUniform) {
  // -0.5 ∫ ln(1 + x/2) dx = -0.5 (3 ln 1.5 - ln 0.5 - 2).
  const FemFunction u = FemFunction::constant(kMesh, 0.5);
  const FemFunction v = interpolate(kMesh, [](double x) { return 0.5 + 0.25 * x; });
  const double exact = -0.5 * (3.0 * std::log(1.5) - std::log(0.5) - 2.0);
  EXPECT_NEAR(exact, 0.0452287, 1e-7);
  EXPECT_NEAR(kullback_leibler(u, v, {0.0}).value, exact, 1e-12);
}

TEST(KullbackLeibler, NonnegativeOnDensityPairs) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial)
    EXPECT_GE(kullback_leibler(random_density(rng), random_density(rng), {0.0}).value, 0.0);
}

TEST(KullbackLeibler, ZeroLogZeroConvention) {
  const FemFunction u = FemFunction::zero(kMesh);
  const FemFunction v = FemFunction::constant(kMesh, 0.5);
  EXPECT_NEAR(kullback_leibler(u, v, {0.0}).value, 1.0, 1e-14);
}

TEST(KullbackLeibler, ConstrainedVariant) {
  const double tau = 0.01;
  const FemFunction u = FemFunction::constant(kMesh, 0.5);
  const FemFunction bad = interpolate(kMesh, [&](double x) { return x - 0.6 * tau + 1.0; });
  EXPECT_TRUE(kullback_leibler(u, bad, {tau}).finite());
  EXPECT_FALSE(constrained_kullback_leibler(u, bad, {tau}).finite());
  const FemFunction ok = interpolate(kMesh, [&](double x) { return 0.5 + 0.25 * x; });
  EXPECT_NEAR(constrained_kullback_leibler(u, ok, {tau}).value, kullback_leibler(u, ok, {tau}).value, 0.0);
}

TEST(L2Fidelity, Values) {
  std::mt19937_64 rng(19);
  const FemFunction u = random_density(rng);
  EXPECT_EQ(l2_fidelity(u, u).value, 0.0);
  const FemFunction shifted_u(kMesh, u.coeffs.array() + 0.3);
  EXPECT_NEAR(l2_fidelity(u, shifted_u).value, 0.09, 1e-14);
}

TEST(L2Fidelity, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  const FemFunction u = random_density(rng);
  const FemFunction v = random_density(rng);
  const Vector grad = *l2_fidelity(u, v).gradient;
  for (int trial = 0; trial < 10; ++trial) {
    const Vector d = random_direction(rng);
    const double eps = 1e-4;
    const double fd = (l2_fidelity(u, shifted(v, eps, d)).value - l2_fidelity(u, shifted(v, -eps, d)).value) / (2.0 * eps);
    EXPECT_LT(std::abs(fd - grad.dot(d)), 1e-8 * std::max(1e-3, std::abs(grad.dot(d))));
  }
}

TEST(KernelDensity, SilvermanBandwidth) {
  const std::vector<double> pts{-1.0, -0.5, 0.0, 0.5, 1.0};
  // sd = sqrt(0.625), IQR = 1.0 (linear interpolation of quartiles), n^{-1/5}.
  const double sd = std::sqrt(0.625);
  const double expected = 0.9 * std::min(sd, 1.0 / 1.34) * std::pow(5.0, -0.2);
  EXPECT_NEAR(silverman_bandwidth(pts, 0.0), expected, 1e-12);
  EXPECT_EQ(silverman_bandwidth({0.1, 0.1, 0.1}, 0.05), 0.05);
}

TEST(KernelDensity, UnitMassAndPositive) {
  std::mt19937_64 rng(29);
  const FemFunction kde = kernel_density_estimate(kMesh, random_obs(rng, 200));
  EXPECT_NEAR(integrate(kde), 1.0, 1e-12);
  EXPECT_GT(kde.coeffs.minCoeff(), 0.0);
}
