//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_LATTICE_H_
#define SPINMAP_LATTICE_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "spinmap/constants.h"
#include "spinmap/spin_model.h"

namespace spinmap {

// Integer crystal coordinates in units of a0/4.
using Crystal = std::array<int, 3>;

/**
 * Rotation taking crystal axes to the lab frame: x = [1,-1,0]/sqrt2,
 * y = [1,1,-2]/sqrt6, z = [1,1,1]/sqrt3 (rows).
 */
const Eigen::Matrix3d &lattice_rotation();

Vec3 crystal_to_lab(const Crystal &c, double a0);

// Nearest integer crystal coordinates; nullopt if the point is further than
// tol (angstrom) from them.
std::optional<Crystal> lab_to_crystal(const Vec3 &p, double a0,
                                      double tol = 0.05);

// 0 for the sublattice containing the origin, 1 for the shifted one, -1 if
// the point is not a diamond site.
int sublattice_of(const Crystal &c);

struct DiamondLattice {
  int n_l = 0;
  double a0 = 0;
  std::vector<Vec3> sites;
  std::vector<Crystal> crystal;
  std::vector<std::uint8_t> sublattice;

  static double bond_length(double a0) { return std::sqrt(3.0) * a0 / 4; }
  // Volume of the generating parallelepiped, (2 N_L)^3 a0^3 / 4, in nm^3.
  double volume_nm3() const;
};

/**
 * @brief Diamond lattice of 2(2N_L+1)^3 sites spanned by the primitive
 * vectors along [011], [101] and [110], centred on an A site at the origin,
 * with [111] along z.
 *
 * @throws InputError if n_l < 1.
 */
DiamondLattice generate_diamond_lattice(int n_l, double a0);

struct LatticeVector {
  Vec3 v;             // angstrom
  double g;           // |3cos^2 - 1| / r^3, angstrom^-3
  std::uint8_t flip;  // 1 if the vector joins the two sublattices
};

/**
 * @brief Displacement vectors sorted by their dipolar geometry factor.
 *
 * For a diamond lattice the vectors run from the origin A site to every
 * other site; from a B-sublattice anchor the negated vectors apply.
 */
class CouplingLookup {
public:
  static CouplingLookup from_diamond(const DiamondLattice &lattice);
  static CouplingLookup from_vectors(std::vector<LatticeVector> vectors);

  const std::vector<LatticeVector> &vectors() const { return vectors_; }

  // Vectors with lo < g < hi.
  std::span<const LatticeVector> range(double lo, double hi) const;

private:
  std::vector<LatticeVector> vectors_;
};

/**
 * @brief Lookup vectors whose predicted coupling kappa * g lies within tol
 * of f, strictly. kappa is the coupling prefactor in Hz A^3.
 */
std::vector<LatticeVector> candidate_vectors(double f_hz,
                                             const CouplingLookup &lookup,
                                             double tol_hz, double kappa);

// Convenience overload: nucleus pair and weak-entry value resolved here.
std::vector<LatticeVector> candidate_vectors(const CouplingEntry &entry,
                                             const CouplingLookup &lookup,
                                             double tol_hz,
                                             double gamma_i, double gamma_j,
                                             const PhysicalConstants &pc = {},
                                             double weak_value = 0.5);

struct CubicLatticeSpec {
  double coupling_hz = 0;
  double dr_max = 0;  // angstrom
  double edge = 0;    // L = 2 dr_max, angstrom
  int n_l = 0;
  double spacing = 0; // L / 2N_L, angstrom
  double n_tilde = 2e-8;

  std::size_t site_count() const {
    const std::size_t k = 2 * static_cast<std::size_t>(n_l) + 1;
    return k * k * k;
  }
};

/**
 * @brief Cubic grid sized so that a pair with coupling f lies inside it:
 * dr_max = (2 alpha / 4 pi f)^(1/3), N_L = round(n_tilde / dr_max[m]) >= 1.
 *
 * @throws InputError if coupling_hz <= 0.
 */
CubicLatticeSpec cubic_lattice_for_coupling(double coupling_hz,
                                            double gamma_i, double gamma_j,
                                            const PhysicalConstants &pc = {},
                                            double n_tilde = 2e-8);

// All nonzero grid vectors of a cubic spec, as a sorted lookup.
CouplingLookup cubic_lookup(const CubicLatticeSpec &spec);

/**
 * @brief Snap every coordinate to the nearest diamond site, with the first
 * spin as the lattice origin.
 *
 * @throws InputError if a spin is more than tol from any site.
 */
Structure snap_to_lattice(const Structure &s, double a0, double tol = 0.05);

} // namespace spinmap

#endif // SPINMAP_LATTICE_H_
