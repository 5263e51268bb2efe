//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "spinmap/error.h"
#include "spinmap/refine.h"
#include "spinmap/solver.h"
#include "testing.h"

namespace spinmap {
namespace {

using testing::carbon_table;
using testing::reference_carbons;

CouplingTable first_spins(std::size_t m) {
  const CouplingTable full = carbon_table();
  const auto order = greedy_order(full, "C1");
  return full.subset({ order.begin(), order.begin() + m });
}

Structure reference_for(const std::vector<std::string> &ids) {
  const Structure pub = reference_carbons();
  Structure s;
  for (const auto &id: ids) {
    s.ids.push_back(id);
    s.coordinates.push_back(pub.position(id));
  }
  return s;
}

TEST(Solver, ModeNames) {
  EXPECT_EQ(solve_mode_from_string("diamond"), SolveMode::diamond);
  EXPECT_EQ(solve_mode_from_string(to_string(SolveMode::cubic)),
            SolveMode::cubic);
  EXPECT_THROW(solve_mode_from_string("hexagonal"), InputError);
}

TEST(Solver, GreedyOrderFollowsStrongestCoupling) {
  const auto order = greedy_order(carbon_table(), "C1");
  ASSERT_EQ(order.size(), 27u);
  // C1-C4 (236 Hz), then C3 via C4 and C2 via C3 (236 Hz).
  EXPECT_EQ(order[0], "C1");
  EXPECT_EQ(order[1], "C4");
  EXPECT_EQ(order[2], "C3");
  EXPECT_EQ(order[3], "C2");
}

TEST(Solver, DisconnectedSpinIsRejected) {
  CouplingTable t({ "A", "B", "C" });
  t.set("A", "B", { 10.0 });
  EXPECT_THROW(greedy_order(t, "A"), InputError);
}

TEST(Solver, ReduceSymmetryDiamondKeepsOnePerOrbit) {
  // The six crystal permutations of a generic crystal vector.
  const double a0 = PhysicalConstants{}.a0;
  const std::array<int, 3> base{ 2, 4, -2 };
  std::vector<Vec3> orbit;
  std::array<int, 3> p{ 0, 1, 2 };
  do {
    orbit.push_back(
        crystal_to_lab({ base[p[0]], base[p[1]], base[p[2]] }, a0));
  } while (std::next_permutation(p.begin(), p.end()));
  EXPECT_EQ(reduce_symmetry(orbit, SolveMode::diamond).size(), 1u);
}

TEST(Solver, ReduceSymmetryCubic) {
  std::vector<Vec3> ring;
  for (int k = 0; k < 8; ++k) {
    const double a = k * std::numbers::pi / 4;
    ring.emplace_back(2 * std::cos(a), 2 * std::sin(a), 1.0);
  }
  const auto kept = reduce_symmetry(ring, SolveMode::cubic);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_NEAR(kept[0].y(), 0.0, 1e-12);
  EXPECT_GT(kept[0].x(), 0.0);
}

TEST(Solver, SubclusterReproducesReferenceSites) {
  const CouplingTable t = first_spins(10);
  SolverParams p;
  const SolveResult r = solve(t, p);
  ASSERT_FALSE(r.structures.empty());
  EXPECT_EQ(r.placed, 10u);
  EXPECT_FALSE(r.timed_out);
  const auto cmp =
      compare_structures(reference_for(r.order), r.structures.front(), true);
  for (double d: cmp.delta_r)
    EXPECT_LT(d, 1e-6);
  // The first eight spins form a rigid sub-cluster.
  for (std::size_t k = 0; k < 8; ++k)
    EXPECT_TRUE(r.unique[k]) << r.order[k];
  EXPECT_EQ(r.steps.size(), 9u);
  EXPECT_EQ(r.steps.front().spin, r.order[1]);
}

TEST(Solver, RankingIsByXi) {
  const SolveResult r = solve(first_spins(12), SolverParams{});
  ASSERT_GT(r.configurations.size(), 1u);
  for (std::size_t i = 1; i < r.configurations.size(); ++i)
    EXPECT_FALSE(config_less(r.configurations[i], r.configurations[i - 1]));
  for (const auto &s: r.structures)
    EXPECT_NEAR(s.xi, residuals_and_xi(s, first_spins(12)).xi, 1e-9);
}

TEST(Solver, UnmeasuredPairsArePredicted) {
  const CouplingTable t = first_spins(10);
  const SolveResult r = solve(t, SolverParams{});
  std::size_t measured = t.entry_count();
  EXPECT_EQ(r.unmeasured.size() + measured, 10u * 9 / 2);
  for (const auto &u: r.unmeasured)
    EXPECT_EQ(t.find(u.a, u.b), nullptr);
}

TEST(Solver, DeterministicUnderParallelism) {
  const CouplingTable t = first_spins(17);
  SolverParams p;
  p.cutoff = 300;
  const SolveResult one = solve(t, p);
  for (unsigned w: { 2u, 3u, 5u }) {
    p.workers = w;
    const SolveResult many = solve(t, p);
    ASSERT_EQ(one.configurations.size(), many.configurations.size());
    for (std::size_t i = 0; i < one.configurations.size(); ++i) {
      EXPECT_EQ(one.configurations[i].xi, many.configurations[i].xi);
      EXPECT_EQ(one.configurations[i].coordinates,
                many.configurations[i].coordinates);
    }
  }
}

TEST(Solver, CutoffBoundsEveryStep) {
  SolverParams p;
  p.cutoff = 25;
  const SolveResult r = solve(first_spins(17), p);
  for (const auto &s: r.steps)
    EXPECT_LE(s.kept, 25u);
  EXPECT_LE(r.configurations.size(), 25u);
}

TEST(Solver, ExhaustionNamesSpin) {
  // Three spins with mutually inconsistent strong couplings.
  CouplingTable t({ "A", "B", "C" });
  t.set("A", "B", { 236.0 });
  t.set("A", "C", { 236.0 });
  t.set("B", "C", { 500.0 });
  SolverParams p;
  p.n_l = 3;
  try {
    solve(t, p);
    FAIL();
  } catch (const ExhaustionError &e) {
    EXPECT_EQ(e.spin(), "C");
  }
}

TEST(Solver, TimeoutReturnsPartialResult) {
  SolverParams p;
  p.timeout_s = 1e-9;
  const SolveResult r = solve(first_spins(12), p);
  EXPECT_TRUE(r.timed_out);
  EXPECT_LT(r.placed, 12u);
  EXPECT_FALSE(r.configurations.empty());
}

TEST(Solver, CheckpointResumeMatchesFullRun) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "spinmap_solver_test";
  fs::create_directories(dir);
  const std::string path = (dir / "run.json").string();

  const CouplingTable t = first_spins(12);
  const SolveResult full = solve(t, SolverParams{});

  SolverParams p;
  p.checkpoint_path = path;
  p.order = full.order;
  p.order.resize(7);
  const SolverParams partial = p;
  solve(t.subset(p.order), partial);
  Checkpoint cp = read_checkpoint(path);
  EXPECT_EQ(cp.placed, 7u);
  // Extend the stored order to the full run and continue from it.
  cp.order = full.order;
  write_checkpoint(path, cp);
  const Checkpoint again = read_checkpoint(path);
  EXPECT_EQ(again.configurations.size(), cp.configurations.size());
  EXPECT_EQ(again.configurations.front().coordinates,
            cp.configurations.front().coordinates);

  SolverParams q;
  const SolveResult resumed = resume(t, q, path);
  ASSERT_EQ(resumed.configurations.size(), full.configurations.size());
  for (std::size_t i = 0; i < full.configurations.size(); ++i) {
    EXPECT_EQ(resumed.configurations[i].coordinates,
              full.configurations[i].coordinates);
    EXPECT_EQ(resumed.configurations[i].xi, full.configurations[i].xi);
  }
  fs::remove_all(dir);
}

TEST(Solver, SyntheticLatticeRoundTrip) {
  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 8; ++trial) {
    const Structure truth = testing::random_lattice_cluster(rng, 7, 6);
    const CouplingTable t = synthesize_table(truth);
    SolverParams p;
    p.n_l = 8;
    const SolveResult r = solve(t, p);
    ASSERT_FALSE(r.structures.empty());
    EXPECT_NEAR(r.structures.front().xi, 0.0, 1e-12);
    Structure ordered;
    for (const auto &id: r.order) {
      ordered.ids.push_back(id);
      ordered.coordinates.push_back(truth.position(id));
    }
    const auto cmp = compare_structures(ordered, r.structures.front(), true);
    EXPECT_LT(cmp.mean, 1e-6) << "trial " << trial;
  }
}

Structure random_continuous_cluster(std::mt19937_64 &rng, std::size_t m) {
  std::uniform_real_distribution<double> u(-4.5, 4.5);
  Structure s;
  s.ids = { "C1" };
  s.coordinates = { Vec3::Zero() };
  while (s.size() < m) {
    const Vec3 p(u(rng), u(rng), u(rng));
    bool ok = true;
    for (const Vec3 &q: s.coordinates)
      ok = ok && (p - q).norm() > 2.5 && (p - q).norm() < 6.0;
    if (ok) {
      s.ids.push_back("C" + std::to_string(s.size() + 1));
      s.coordinates.push_back(p);
    }
  }
  return s;
}

SolverParams cubic_params(std::size_t cutoff) {
  SolverParams p;
  p.mode = SolveMode::cubic;
  p.cutoff = cutoff;
  // Off-grid positions: allow for the grid discretization error.
  p.tol = 3.0;
  return p;
}

TEST(Solver, CubicSolutionsSatisfyTolerance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    const CouplingTable t = synthesize_table(random_continuous_cluster(rng, 5));
    const SolverParams p = cubic_params(300);
    const SolveResult r = solve(t, p);
    ASSERT_FALSE(r.structures.empty());
    for (const auto &s: r.structures) {
      EXPECT_DOUBLE_EQ(s.coordinates[1].y(), 0.0);
      EXPECT_GE(s.coordinates[1].x(), 0.0);
      for (const auto &pr: residuals_and_xi(s, t).pairs)
        EXPECT_LT(std::abs(pr.delta), p.tol);
    }
  }
}

TEST(Solver, SyntheticContinuousRoundTripCubic) {
  std::mt19937_64 rng(99);
  Structure truth;
  for (int k = 0; k < 3; ++k)
    truth = random_continuous_cluster(rng, 5);
  const SolveResult r = solve(synthesize_table(truth), cubic_params(20000));
  Structure ordered;
  for (const auto &id: r.order) {
    ordered.ids.push_back(id);
    ordered.coordinates.push_back(truth.position(id));
  }
  // A few spins admit many tolerance-consistent geometries; the true one
  // must be among them to within the grid resolution.
  double best = std::numeric_limits<double>::infinity();
  for (const auto &s: r.structures) {
    double worst = 0;
    for (double d: compare_structures(ordered, s, true).delta_r)
      worst = std::max(worst, d);
    best = std::min(best, worst);
  }
  EXPECT_LT(best, 0.25);
}

TEST(Solver, FullCarbonClusterRegression) {
  const SolveResult r = solve(carbon_table(), SolverParams{});
  ASSERT_EQ(r.placed, 27u);
  const auto cmp =
      compare_structures(reference_for(r.order), r.structures.front(), true);
  EXPECT_LT(cmp.mean, 1e-6);
  EXPECT_NEAR(r.structures.front().xi, 14.1926285155, 1e-8);
  std::set<std::string> loose;
  for (std::size_t i = 0; i < r.order.size(); ++i)
    if (!r.unique[i])
      loose.insert(r.order[i]);
  EXPECT_EQ(loose, (std::set<std::string>{ "C18", "C19", "C23", "C25", "C26",
                                           "C27" }));
}

} // namespace
} // namespace spinmap
