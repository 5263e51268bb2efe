//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_SPIN_MODEL_H_
#define SPINMAP_SPIN_MODEL_H_

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "spinmap/constants.h"

namespace spinmap {

using Vec3 = Eigen::Vector3d;

enum class Nucleus { carbon13, nitrogen14 };

// Labels starting with 'N' denote the nitrogen of the sensor.
Nucleus nucleus_of(std::string_view id);
double gyromagnetic_ratio(Nucleus nucleus, const PhysicalConstants &pc);

struct HyperfineEstimate {
  double a_par;   // kHz
  double a_perp;  // kHz, >= 0
  bool imaginary; // radicand was negative, a_perp clamped to 0
};

/**
 * @brief Parallel and perpendicular hyperfine components from the nuclear
 * precession frequencies in the m_s = -1, +1 and 0 states (all kHz).
 *
 * @throws InputError if any frequency is not positive.
 */
HyperfineEstimate hyperfine_from_frequencies(double omega_minus1,
                                             double omega_plus1,
                                             double omega_0);

struct SpinRecord {
  std::string id;
  double omega_minus1 = 0; // kHz
  double omega_plus1 = 0;  // kHz
  double omega_0 = kDefaultOmega0kHz;
  double a_par = 0;  // kHz
  double a_perp = 0; // kHz
  bool a_perp_imaginary = false;

  // Record with a_par / a_perp derived from the three frequencies.
  static SpinRecord from_frequencies(std::string id, double omega_minus1,
                                     double omega_plus1,
                                     double omega_0 = kDefaultOmega0kHz);
};

enum class MsProjection { minus1, plus1, averaged };

const char *to_string(MsProjection p);
MsProjection projection_from_string(std::string_view s);

struct CouplingEntry {
  double frequency_hz = 0;
  double sigma_hz = 0;
  MsProjection ms_projection = MsProjection::averaged;
  bool weak_upper_bound = false;
  bool single_projection_only = false;

  // Value used in fits: the measured frequency, or weak_value for "<1 Hz".
  double effective_hz(double weak_value = 0.5) const {
    return weak_upper_bound ? weak_value : frequency_hz;
  }
};

/**
 * @brief Sparse symmetric matrix of measured pair couplings.
 *
 * Entries are keyed by the unordered pair of spin indices; (i, j) and (j, i)
 * address the same entry and the diagonal is never stored.
 */
class CouplingTable {
public:
  struct Pair {
    std::size_t i, j; // i < j
    CouplingEntry entry;
  };

  CouplingTable() = default;
  explicit CouplingTable(std::vector<std::string> spins,
                         MsProjection projection = MsProjection::averaged);

  const std::vector<std::string> &spins() const { return spins_; }
  std::size_t spin_count() const { return spins_.size(); }
  MsProjection projection() const { return projection_; }

  std::optional<std::size_t> index_of(std::string_view id) const;
  std::size_t require_index(std::string_view id) const;

  void set(std::size_t i, std::size_t j, const CouplingEntry &e);
  void set(std::string_view a, std::string_view b, const CouplingEntry &e);
  const CouplingEntry *find(std::size_t i, std::size_t j) const;
  const CouplingEntry *find(std::string_view a, std::string_view b) const;

  std::size_t entry_count() const { return entries_.size(); }
  std::vector<Pair> pairs() const;

  // Table restricted to the given spins, in the given order.
  CouplingTable subset(const std::vector<std::string> &ids) const;

private:
  std::vector<std::string> spins_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::map<std::pair<std::size_t, std::size_t>, CouplingEntry> entries_;
  MsProjection projection_ = MsProjection::averaged;
};

struct Gauge {
  std::string origin_spin;
  std::string plane_spin;
  double rotation_deg = 0;
};

struct Structure {
  std::vector<std::string> ids;
  std::vector<Vec3> coordinates; // angstrom
  std::optional<std::vector<Vec3>> uncertainties;
  Gauge gauge;
  double xi = 0; // Hz^2

  std::size_t size() const { return ids.size(); }
  std::optional<std::size_t> index_of(std::string_view id) const;
  const Vec3 &position(std::string_view id) const;
};

/**
 * @brief Point-dipole zz coupling frequency |C_ij| / 4pi in Hz.
 *
 * Positions are in angstrom, gyromagnetic ratios in rad s^-1 T^-1.
 * @throws DegenerateGeometryError for coincident positions.
 */
double dipolar_coupling(const Vec3 &pos_i, const Vec3 &pos_j, double gamma_i,
                        double gamma_j, const PhysicalConstants &pc = {});

// Signed C_ij in rad s^-1.
double dipolar_coupling_signed(const Vec3 &pos_i, const Vec3 &pos_j,
                               double gamma_i, double gamma_j,
                               const PhysicalConstants &pc = {});

// |3 dz^2 / r^2 - 1| / r^3 for a displacement in angstrom.
inline double dipolar_geometry_factor(double dx, double dy, double dz) {
  const double r2 = dx * dx + dy * dy + dz * dz;
  const double u = 3 * dz * dz - r2;
  return (u < 0 ? -u : u) / (r2 * r2 * std::sqrt(r2));
}

// Coupling between two labelled spins, nucleus inferred from the labels.
double spin_pair_coupling(std::string_view id_i, const Vec3 &pos_i,
                          std::string_view id_j, const Vec3 &pos_j,
                          const PhysicalConstants &pc = {});

struct ResidualOptions {
  double weak_value_hz = 0.5;
};

struct PairResidual {
  std::size_t i, j; // indices into the table spin list
  double measured, predicted, delta;
};

struct ResidualReport {
  std::vector<PairResidual> pairs;
  Eigen::MatrixXd matrix; // NaN where unmeasured
  double xi = 0;
};

/**
 * @brief Residuals f_ij - |C_ij|/4pi over measured pairs and their sum of
 * squares.
 *
 * @throws InputError naming the first table spin without coordinates.
 */
ResidualReport residuals_and_xi(const Structure &s, const CouplingTable &t,
                                const ResidualOptions &opts = {},
                                const PhysicalConstants &pc = {});

// Table with every pair measured exactly as predicted by the structure.
// Pairs at the magic angle have no coupling and stay unmeasured.
CouplingTable synthesize_table(const Structure &s,
                               const PhysicalConstants &pc = {});

struct SpinCountEstimate {
  double volume_nm3;
  std::size_t lattice_sites;
  double expected_spins;
};

/**
 * @brief Diamond lattice sites and expected 13C count inside the closed
 * axis-aligned bounding box of a structure.
 *
 * The structure must be in the lattice frame, with its first spin on an
 * A-sublattice site.
 */
SpinCountEstimate expected_spin_count(const Structure &s, double abundance,
                                      const PhysicalConstants &pc = {});

} // namespace spinmap

#endif // SPINMAP_SPIN_MODEL_H_
