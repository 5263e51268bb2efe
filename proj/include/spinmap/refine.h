//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_REFINE_H_
#define SPINMAP_REFINE_H_

#include <optional>
#include <string>
#include <vector>

#include "spinmap/lattice.h"
#include "spinmap/least_squares.h"
#include "spinmap/spin_model.h"

namespace spinmap {

struct GaugeSpec {
  std::string origin_spin;
  std::string plane_spin;
  double pre_rotation_deg = 0;
};

struct RefineOptions {
  ResidualOptions residual;
  // Divide residuals by sigma (weak entries: weak_sigma_hz).
  bool weighted = false;
  double weak_sigma_hz = 0.5;
  // Report coordinates in the input frame instead of the rotated gauge frame.
  bool rotate_back = true;
  // Also fit from the end point of a squared-coupling pre-fit and keep the
  // lower xi; widens the basin when a guess sits across the magic angle.
  bool smooth_start = true;
  LsqOptions lsq;
};

struct FreeCoordinate {
  std::string spin;
  int axis; // 0 x, 1 y, 2 z, in the gauge frame
  double value;
  double sigma;
};

struct RefinementResult {
  Structure structure;           // with uncertainties
  std::vector<double> delta_r;   // per spin, vs the initial guess
  std::vector<FreeCoordinate> free_coordinates;
  std::vector<std::string> flagged; // coordinates without curvature
  bool converged = false;
  int iterations = 0;
  double initial_xi = 0;
  double final_xi = 0;
  double gradient_norm = 0;
};

// z rotation (deg) that puts the plane spin at y = 0, x >= 0 relative to the
// origin spin.
double gauge_rotation_deg(const Structure &s, const std::string &origin_spin,
                          const std::string &plane_spin);

/**
 * @brief Gauge-fixed least-squares refinement of all spin coordinates.
 *
 * The guess is translated so the origin spin sits at zero and rotated about
 * z by pre_rotation_deg; the origin spin and the y coordinate of the plane
 * spin are then held fixed, leaving 3M - 4 free coordinates. Uncertainties
 * come from the residual variance and the Gauss-Newton curvature.
 *
 * @throws InputError for unknown gauge spins or too few couplings.
 */
RefinementResult refine(const Structure &initial, const CouplingTable &table,
                        const GaugeSpec &gauge, const RefineOptions &opts = {},
                        const PhysicalConstants &pc = {});

struct RigidTransform {
  bool reflect_y = false;
  bool invert_z = false;
  double rotation_deg = 0; // about z, applied after the reflections
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3 &p) const;
};

Structure transform_structure(const Structure &s, const RigidTransform &t);

struct AlignOptions {
  bool translation = true;
  bool reflect_y = true;
  bool invert_z = true;
};

struct StructureComparison {
  std::vector<double> delta_r;
  double mean = 0;
  RigidTransform transform; // applied to b
};

/**
 * @brief Per-spin distances between two structures over the same spins,
 * optionally after moving b by the gauge transform that minimises the mean
 * distance.
 *
 * @throws InputError if the spin sets differ.
 */
StructureComparison compare_structures(const Structure &a, const Structure &b,
                                       bool align,
                                       const AlignOptions &opts = {});

struct SensorOptions {
  std::string nitrogen_id = "N";
  double tol = 1.1;
  double tol_single = 3.0;
  double weak_value = 0.5;
  bool refine = true;
};

struct SensorCandidate {
  Vec3 nitrogen;
  double xi;
};

struct SensorPlacement {
  std::vector<SensorCandidate> ranked;
  Vec3 nitrogen = Vec3::Zero();
  Vec3 vacancy = Vec3::Zero();
  bool unique = false;
  std::optional<Vec3> refined;
  std::optional<Vec3> refined_sigma;
  double refined_xi = 0;
};

/**
 * @brief Place the sensor nitrogen on the carbon cluster's lattice from the
 * N-C couplings, and the vacancy at its nearest neighbour along -z.
 *
 * Only sites with a lattice neighbour along -z (the B sublattice) qualify.
 *
 * The carbon structure must sit on lattice sites with its first spin on the
 * origin sublattice.
 * @throws InputError with fewer than 4 measured N-C couplings.
 * @throws ExhaustionError if no lattice site satisfies the tolerances.
 */
SensorPlacement position_sensor(const CouplingTable &table,
                                const Structure &carbons,
                                const DiamondLattice &lattice,
                                const SensorOptions &opts = {},
                                const PhysicalConstants &pc = {});

struct ReferenceSite {
  std::string label;
  Vec3 position; // angstrom
  double a_par;  // kHz
  double a_perp; // kHz
};

struct HyperfineComparisonOptions {
  bool flip_sign = false;      // compare -A_par of the measurement
  double scale = 1.02;         // applied to reference coordinates
  double match_radius = 0.3;   // angstrom
};

struct HyperfineDifference {
  std::string id;
  std::string site; // matched reference label, empty if none
  double distance = 0;
  double d_par = 0;
  double d_perp = 0;
};

// Differences for records whose reference carries the same label.
std::vector<HyperfineDifference>
hyperfine_comparison(const std::vector<SpinRecord> &records,
                     const std::vector<ReferenceSite> &reference,
                     const HyperfineComparisonOptions &opts = {});

// Differences after matching each spin to the nearest reference site.
std::vector<HyperfineDifference>
hyperfine_comparison(const std::vector<SpinRecord> &records,
                     const Structure &structure,
                     const std::vector<ReferenceSite> &reference,
                     const HyperfineComparisonOptions &opts = {});

} // namespace spinmap

#endif // SPINMAP_REFINE_H_
