//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "spinmap/error.h"
#include "spinmap/spin_model.h"
#include "testing.h"

namespace spinmap {
namespace {

using testing::carbon_table;
using testing::reference_carbons;

// Oracle values below come from mu0 = 1.25663706212e-6, hbar =
// 1.054571817e-34 and the point-dipole formula evaluated independently.
TEST(DipolarCoupling, MatchesIndependentOracle) {
  const PhysicalConstants pc;
  EXPECT_NEAR(dipolar_coupling(Vec3::Zero(), Vec3(-1.26, 2.18, 0.0),
                               pc.gamma_c, pc.gamma_c),
              237.9804698885, 1e-6);
  EXPECT_NEAR(dipolar_coupling(Vec3::Zero(), Vec3(1, 2, 3), pc.gamma_c,
                               pc.gamma_c),
              67.3439316514, 1e-6);
  EXPECT_NEAR(dipolar_coupling(Vec3::Zero(), Vec3(0, 0, 5), pc.gamma_c,
                               pc.gamma_n),
              17.4661866965, 1e-6);
}

TEST(DipolarCoupling, NearestCarbonPairNearMeasuredValue) {
  // C1-C4 measured at 236.0(2) Hz.
  const PhysicalConstants pc;
  const double f = dipolar_coupling(Vec3::Zero(), Vec3(-1.26, 2.18, 0.0),
                                    pc.gamma_c, pc.gamma_c);
  EXPECT_LT(std::abs(f - 236.0), 2.0);
}

TEST(DipolarCoupling, MagicAngleVanishes) {
  const PhysicalConstants pc;
  const double theta = std::acos(1 / std::sqrt(3.0));
  const Vec3 r(3 * std::sin(theta), 0, 3 * std::cos(theta));
  EXPECT_NEAR(dipolar_coupling(Vec3::Zero(), r, pc.gamma_c, pc.gamma_c), 0.0,
              1e-9);
}

TEST(DipolarCoupling, SymmetricAndScalesWithInverseCube) {
  const PhysicalConstants pc;
  const Vec3 a(0.3, -1.2, 0.7), b(2.1, 0.4, -1.9);
  const double f = dipolar_coupling(a, b, pc.gamma_c, pc.gamma_c);
  EXPECT_DOUBLE_EQ(f, dipolar_coupling(b, a, pc.gamma_c, pc.gamma_c));
  EXPECT_NEAR(dipolar_coupling(2 * a, 2 * b, pc.gamma_c, pc.gamma_c), f / 8,
              1e-12 * f);
}

TEST(DipolarCoupling, CoincidentPositionsThrow) {
  const PhysicalConstants pc;
  EXPECT_THROW(dipolar_coupling(Vec3(1, 2, 3), Vec3(1, 2, 3), pc.gamma_c,
                                pc.gamma_c),
               DegenerateGeometryError);
}

TEST(DipolarCoupling, NucleusFromLabel) {
  EXPECT_EQ(nucleus_of("N"), Nucleus::nitrogen14);
  EXPECT_EQ(nucleus_of("C12"), Nucleus::carbon13);
  const PhysicalConstants pc;
  EXPECT_DOUBLE_EQ(spin_pair_coupling("C1", Vec3::Zero(), "N", Vec3(0, 0, 5)),
                   dipolar_coupling(Vec3::Zero(), Vec3(0, 0, 5), pc.gamma_c,
                                    pc.gamma_n));
}

TEST(Hyperfine, TabulatedRows) {
  const HyperfineEstimate c9 =
      hyperfine_from_frequencies(218.828, 645.123, 431.960);
  EXPECT_NEAR(c9.a_par, 213.154, 5e-3);
  EXPECT_FALSE(c9.imaginary);

  const HyperfineEstimate c27 =
      hyperfine_from_frequencies(435.990, 427.910, 431.960);
  EXPECT_TRUE(c27.imaginary);
  EXPECT_EQ(c27.a_perp, 0.0);
}

TEST(Hyperfine, RoundTripFromForwardModel) {
  // omega_pm = sqrt((omega_0 -+ a_par)^2 + a_perp^2) inverts exactly.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> par(-200, 200), perp(0, 80);
  const double w0 = 431.96;
  for (int k = 0; k < 200; ++k) {
    const double a = par(rng), b = perp(rng);
    const double wp = std::hypot(w0 + a, b), wm = std::hypot(w0 - a, b);
    const HyperfineEstimate h = hyperfine_from_frequencies(wm, wp, w0);
    EXPECT_NEAR(h.a_par, a, 1e-9);
    EXPECT_NEAR(h.a_perp, b, 1e-6);
  }
}

TEST(Hyperfine, RejectsNonPositiveFrequencies) {
  EXPECT_THROW(hyperfine_from_frequencies(400, 450, 0), InputError);
  EXPECT_THROW(hyperfine_from_frequencies(-1, 450, 431.96), InputError);
}

TEST(CouplingTable, SymmetricSparseStorage) {
  CouplingTable t({ "A", "B", "C" });
  t.set("A", "C", { 12.5, 0.1 });
  ASSERT_NE(t.find("C", "A"), nullptr);
  EXPECT_EQ(t.find("C", "A")->frequency_hz, 12.5);
  EXPECT_EQ(t.find("A", "B"), nullptr);
  EXPECT_EQ(t.entry_count(), 1u);
  EXPECT_THROW(t.set("A", "A", { 1.0 }), InputError);
  EXPECT_THROW(t.set("A", "D", { 1.0 }), InputError);

  const CouplingTable s = t.subset({ "C", "A" });
  EXPECT_EQ(s.spins(), (std::vector<std::string>{ "C", "A" }));
  EXPECT_EQ(s.find("A", "C")->frequency_hz, 12.5);
}

TEST(CouplingTable, WeakEntriesUseWeakValue) {
  CouplingEntry e;
  e.frequency_hz = 1;
  e.weak_upper_bound = true;
  EXPECT_EQ(e.effective_hz(0.5), 0.5);
  e.weak_upper_bound = false;
  EXPECT_EQ(e.effective_hz(0.5), 1.0);
}

TEST(Residuals, SolutionRegression) {
  // Recomputed from the bundled tables and the lattice-snapped solution.
  const ResidualReport r = residuals_and_xi(reference_carbons(), carbon_table());
  EXPECT_EQ(r.pairs.size(), 171u);
  EXPECT_NEAR(r.xi, 14.1926285155, 1e-8);
  // Only C19-C20 exceeds 1.1 Hz.
  int violations = 0;
  for (const auto &p: r.pairs)
    violations += std::abs(p.delta) >= 1.1;
  EXPECT_EQ(violations, 1);
  EXPECT_TRUE(std::isnan(r.matrix(0, 0)));
}

TEST(Residuals, SynthesizedTableHasZeroXi) {
  const Structure s = reference_carbons();
  const CouplingTable t = synthesize_table(s);
  // Two lattice pairs sit on the magic angle and stay unmeasured.
  EXPECT_EQ(t.entry_count(), s.size() * (s.size() - 1) / 2 - 2);
  EXPECT_NEAR(residuals_and_xi(s, t).xi, 0.0, 1e-18);
}

TEST(Residuals, MissingSpinIsNamed) {
  Structure s;
  s.ids = { "A" };
  s.coordinates = { Vec3::Zero() };
  CouplingTable t({ "A", "B" });
  t.set("A", "B", { 3.0 });
  try {
    residuals_and_xi(s, t);
    FAIL();
  } catch (const InputError &e) {
    EXPECT_NE(std::string(e.what()).find("'B'"), std::string::npos);
  }
}

TEST(Residuals, XiIsGaugeInvariant) {
  const Structure base = reference_carbons();
  const CouplingTable t = carbon_table();
  const double xi0 = residuals_and_xi(base, t).xi;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 50; ++k) {
    const double angle = std::numbers::pi * u(rng);
    Eigen::Matrix3d m =
        Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
    if (k % 2)
      m = m * Eigen::Vector3d(1, -1, 1).asDiagonal();
    if (k % 3 == 0)
      m = m * Eigen::Vector3d(1, 1, -1).asDiagonal();
    const Vec3 shift(10 * u(rng), 10 * u(rng), 10 * u(rng));
    Structure s = base;
    for (auto &p: s.coordinates)
      p = m * p + shift;
    EXPECT_NEAR(residuals_and_xi(s, t).xi, xi0, 1e-9);
  }
}

TEST(SpinCount, MatchesBruteForceCount) {
  // Oracle: explicit enumeration of diamond sites inside the closed box.
  const SpinCountEstimate e = expected_spin_count(reference_carbons(), 0.011);
  EXPECT_NEAR(e.volume_nm3, 17.9995638, 1e-6);
  EXPECT_EQ(e.lattice_sites, 3573u);
  EXPECT_NEAR(e.expected_spins, 3573 * 0.011, 1e-12);
}

TEST(SpinCount, NanometreBoxDensity) {
  // Diamond holds 8 / a0^3 = 176 sites per nm^3.
  Structure s;
  s.ids = { "C1", "C2" };
  s.coordinates = { Vec3::Zero(), Vec3(20, 20, 40) };
  const SpinCountEstimate e = expected_spin_count(s, 0.011);
  EXPECT_DOUBLE_EQ(e.volume_nm3, 16.0);
  EXPECT_NEAR(e.lattice_sites / 16.0, 8 / std::pow(0.35668, 3), 10.0);
}

TEST(SpinCount, Preconditions) {
  Structure s;
  s.ids = { "C1" };
  s.coordinates = { Vec3::Zero() };
  EXPECT_THROW(expected_spin_count(s, 0.011), InputError);
  s.ids.push_back("C2");
  s.coordinates.emplace_back(1, 1, 1);
  EXPECT_THROW(expected_spin_count(s, 0.0), InputError);
  EXPECT_THROW(expected_spin_count(s, 1.5), InputError);
}

} // namespace
} // namespace spinmap
