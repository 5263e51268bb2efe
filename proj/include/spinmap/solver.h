//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_SOLVER_H_
#define SPINMAP_SOLVER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <tuple>
#include <string>
#include <vector>

#include "spinmap/constants.h"
#include "spinmap/lattice.h"
#include "spinmap/spin_model.h"

namespace spinmap {

enum class SolveMode { diamond, cubic };

const char *to_string(SolveMode m);
SolveMode solve_mode_from_string(std::string_view s);

struct SolverParams {
  SolveMode mode = SolveMode::diamond;
  int n_l = 11;
  double tol = 1.1;        // Hz
  double tol_single = 3.0; // Hz, single-projection entries
  // Apply tol_single to single-projection "<1 Hz" entries as well.
  bool single_tolerance_for_weak = false;
  double weak_value = 0.5;  // Hz
  std::size_t cutoff = 5000;
  double n_tilde = 2e-8;
  std::vector<std::string> order; // empty: greedy order from the table
  unsigned workers = 1;
  std::optional<double> timeout_s;
  std::string checkpoint_path; // written after every step when non-empty
  PhysicalConstants constants;
};

/**
 * @brief Partial placement: positions of the first k spins of the order.
 *
 * sym is a bitmask of the point-group elements that still map the placed
 * set onto itself; the search only keeps the canonical member of each orbit
 * under them.
 */
struct CandidateConfiguration {
  std::vector<Vec3> coordinates;
  std::vector<std::uint8_t> sublattice; // diamond mode only
  double xi = 0;
  std::uint8_t sym = 0;
};

// Ascending xi, ties broken lexicographically on the coordinates.
bool config_less(const CandidateConfiguration &a,
                 const CandidateConfiguration &b);

struct StepLog {
  std::string spin;
  std::string anchor;
  std::size_t parents = 0;
  std::size_t candidates = 0; // anchor vectors tried over all parents
  std::size_t survivors = 0;  // passed every tolerance test
  std::size_t kept = 0;       // after the cutoff
  std::size_t dead_parents = 0;
  double seconds = 0;
};

/**
 * @brief Precomputed per-problem data shared by every placement step.
 */
class SearchContext {
public:
  SearchContext(const CouplingTable &table, const SolverParams &params);

  const CouplingTable &table() const { return table_; }
  const SolverParams &params() const { return params_; }
  const std::vector<std::string> &order() const { return order_; }

  double tolerance_for(const CouplingEntry &e) const;
  double kappa(std::size_t i, std::size_t j) const; // table indices

  // Diamond-mode lookup (vectors from an A-site origin).
  const CouplingLookup &diamond_lookup() const;
  // Cubic-mode candidate vectors for a measured anchor coupling, cached.
  const std::vector<LatticeVector> &cubic_candidates(double f_hz,
                                                     double tol,
                                                     double kappa) const;

private:
  const CouplingTable &table_;
  SolverParams params_;
  std::vector<std::string> order_;
  std::unique_ptr<CouplingLookup> diamond_;
  mutable std::map<std::tuple<double, double, double>,
                   std::vector<LatticeVector>> cubic_cache_;
};

/**
 * @brief Greedy addition order: start from `first`, then repeatedly take the
 * unplaced spin with the strongest measured coupling into the placed set
 * (ties to the lower table index).
 *
 * @throws InputError if a spin has no measured coupling to the others.
 */
std::vector<std::string> greedy_order(const CouplingTable &table,
                                      const std::string &first,
                                      double weak_value = 0.5);

// Solution set holding only the first spin of the order at the origin.
std::vector<CandidateConfiguration> initial_configurations(
    const SearchContext &ctx);

/**
 * @brief Add the next spin of the order to every configuration.
 *
 * placed is the number of spins already in each configuration. Returns at
 * most params.cutoff configurations, ranked by config_less.
 *
 * @throws ExhaustionError if no configuration survives.
 */
std::vector<CandidateConfiguration> place_next_spin(
    const std::vector<CandidateConfiguration> &solutions, std::size_t placed,
    const SearchContext &ctx, StepLog *log = nullptr);

/**
 * @brief Keep one canonical representative per orbit of the point group
 * fixing the first spin: the six crystal-axis permutations (C3v about z) in
 * diamond mode; in cubic mode rotation about z (second spin: y = 0, x >= 0)
 * and the y -> -y reflection (third spin: y >= 0).
 *
 * Candidates are positions of the second spin with the first at the origin.
 */
std::vector<Vec3> reduce_symmetry(const std::vector<Vec3> &candidates,
                                  SolveMode mode);

struct PredictedCoupling {
  std::string a, b;
  double predicted_hz;
};

struct SolveResult {
  std::vector<std::string> order;
  std::vector<CandidateConfiguration> configurations;
  std::vector<Structure> structures; // ranked, spins in order
  std::vector<StepLog> steps;
  std::vector<PredictedCoupling> unmeasured; // for the best structure
  // Per spin of the order: same coordinates in every final configuration.
  std::vector<bool> unique;
  bool timed_out = false;
  std::size_t placed = 0;
};

/**
 * @brief Sequential lattice-constrained reconstruction.
 *
 * On timeout the result holds the configurations of the last completed step
 * and timed_out is set.
 * @throws ExhaustionError naming the spin whose placement killed every
 * branch.
 */
SolveResult solve(const CouplingTable &table, const SolverParams &params,
                  const std::function<void(const StepLog &)> &progress = {});

// Continue a run from a checkpoint written by solve.
SolveResult resume(const CouplingTable &table, const SolverParams &params,
                   const std::string &checkpoint_path,
                   const std::function<void(const StepLog &)> &progress = {});

struct Checkpoint {
  SolveMode mode = SolveMode::diamond;
  std::vector<std::string> order;
  std::size_t placed = 0;
  std::vector<CandidateConfiguration> configurations;
};

void write_checkpoint(const std::string &path, const Checkpoint &cp);
Checkpoint read_checkpoint(const std::string &path);

} // namespace spinmap

#endif // SPINMAP_SOLVER_H_
