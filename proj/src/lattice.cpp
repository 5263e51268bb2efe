//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include "spinmap/lattice.h"

#include <algorithm>
#include <cmath>

#include "spinmap/error.h"

namespace spinmap {

const Eigen::Matrix3d &lattice_rotation() {
  static const Eigen::Matrix3d R = [] {
    Eigen::Matrix3d m;
    m.row(0) = Vec3(1, -1, 0) / std::sqrt(2.0);
    m.row(1) = Vec3(1, 1, -2) / std::sqrt(6.0);
    m.row(2) = Vec3(1, 1, 1) / std::sqrt(3.0);
    return m;
  }();
  return R;
}

Vec3 crystal_to_lab(const Crystal &c, double a0) {
  return lattice_rotation() * Vec3(c[0], c[1], c[2]) * (a0 / 4);
}

std::optional<Crystal> lab_to_crystal(const Vec3 &p, double a0, double tol) {
  const Vec3 n = lattice_rotation().transpose() * p * (4 / a0);
  const Crystal c{ static_cast<int>(std::lround(n.x())),
                   static_cast<int>(std::lround(n.y())),
                   static_cast<int>(std::lround(n.z())) };
  if ((crystal_to_lab(c, a0) - p).norm() > tol)
    return std::nullopt;
  return c;
}

namespace {

int mod(int a, int m) {
  const int r = a % m;
  return r < 0 ? r + m : r;
}

bool fcc(int a, int b, int c) {
  return mod(a, 2) == 0 && mod(b, 2) == 0 && mod(c, 2) == 0
         && mod(a + b + c, 4) == 0;
}

} // namespace

int sublattice_of(const Crystal &c) {
  if (fcc(c[0], c[1], c[2]))
    return 0;
  if (fcc(c[0] - 1, c[1] - 1, c[2] - 1))
    return 1;
  return -1;
}

double DiamondLattice::volume_nm3() const {
  const double edge = 2.0 * n_l;
  return edge * edge * edge * a0 * a0 * a0 / 4 * 1e-3;
}

DiamondLattice generate_diamond_lattice(int n_l, double a0) {
  if (n_l < 1)
    throw InputError("generate_diamond_lattice: N_L must be >= 1");
  if (!(a0 > 0))
    throw InputError("generate_diamond_lattice: a0 must be > 0");

  DiamondLattice lat;
  lat.n_l = n_l;
  lat.a0 = a0;
  const std::size_t k = 2 * static_cast<std::size_t>(n_l) + 1;
  lat.sites.reserve(2 * k * k * k);
  lat.crystal.reserve(2 * k * k * k);
  lat.sublattice.reserve(2 * k * k * k);
  // Primitive vectors (0,2,2), (2,0,2), (2,2,0) in units of a0/4.
  for (int i = -n_l; i <= n_l; ++i) {
    for (int j = -n_l; j <= n_l; ++j) {
      for (int l = -n_l; l <= n_l; ++l) {
        const Crystal a{ 2 * (j + l), 2 * (i + l), 2 * (i + j) };
        for (std::uint8_t sub = 0; sub < 2; ++sub) {
          const Crystal c{ a[0] + sub, a[1] + sub, a[2] + sub };
          lat.crystal.push_back(c);
          lat.sites.push_back(crystal_to_lab(c, a0));
          lat.sublattice.push_back(sub);
        }
      }
    }
  }
  return lat;
}

CouplingLookup CouplingLookup::from_vectors(std::vector<LatticeVector> vectors) {
  std::sort(vectors.begin(), vectors.end(),
            [](const LatticeVector &a, const LatticeVector &b) {
              if (a.g != b.g)
                return a.g < b.g;
              return std::lexicographical_compare(
                  a.v.data(), a.v.data() + 3, b.v.data(), b.v.data() + 3);
            });
  CouplingLookup l;
  l.vectors_ = std::move(vectors);
  return l;
}

CouplingLookup CouplingLookup::from_diamond(const DiamondLattice &lattice) {
  std::vector<LatticeVector> v;
  v.reserve(lattice.sites.size());
  for (std::size_t i = 0; i < lattice.sites.size(); ++i) {
    const Vec3 &p = lattice.sites[i];
    if (p.squaredNorm() == 0)
      continue;
    v.push_back({ p, dipolar_geometry_factor(p.x(), p.y(), p.z()),
                  lattice.sublattice[i] });
  }
  return from_vectors(std::move(v));
}

std::span<const LatticeVector> CouplingLookup::range(double lo,
                                                     double hi) const {
  auto first = std::upper_bound(
      vectors_.begin(), vectors_.end(), lo,
      [](double x, const LatticeVector &v) { return x < v.g; });
  auto last = std::lower_bound(
      first, vectors_.end(), hi,
      [](const LatticeVector &v, double x) { return v.g < x; });
  return { first, last };
}

std::vector<LatticeVector> candidate_vectors(double f_hz,
                                             const CouplingLookup &lookup,
                                             double tol_hz, double kappa) {
  std::vector<LatticeVector> out;
  // Widen the index query slightly, then apply the exact strict test.
  const double lo = (f_hz - tol_hz) / kappa, hi = (f_hz + tol_hz) / kappa;
  const double pad = 1e-12 * std::max(std::abs(lo), std::abs(hi));
  for (const LatticeVector &v: lookup.range(lo - pad, hi + pad)) {
    if (std::abs(f_hz - kappa * v.g) < tol_hz)
      out.push_back(v);
  }
  return out;
}

std::vector<LatticeVector> candidate_vectors(const CouplingEntry &entry,
                                             const CouplingLookup &lookup,
                                             double tol_hz, double gamma_i,
                                             double gamma_j,
                                             const PhysicalConstants &pc,
                                             double weak_value) {
  return candidate_vectors(entry.effective_hz(weak_value), lookup, tol_hz,
                           pc.kappa_hz_a3(gamma_i, gamma_j));
}

CubicLatticeSpec cubic_lattice_for_coupling(double coupling_hz, double gamma_i,
                                            double gamma_j,
                                            const PhysicalConstants &pc,
                                            double n_tilde) {
  if (!(coupling_hz > 0))
    throw InputError("cubic_lattice_for_coupling: coupling must be > 0");
  if (!(n_tilde > 0))
    throw InputError("cubic_lattice_for_coupling: n_tilde must be > 0");
  CubicLatticeSpec s;
  s.coupling_hz = coupling_hz;
  s.n_tilde = n_tilde;
  const double c = 4 * std::numbers::pi * coupling_hz;
  const double dr_m = std::cbrt(2 * pc.alpha(gamma_i, gamma_j) / c);
  s.dr_max = dr_m * 1e10;
  s.edge = 2 * s.dr_max;
  s.n_l = std::max(1, static_cast<int>(std::lround(n_tilde / dr_m)));
  s.spacing = s.edge / (2 * s.n_l);
  return s;
}

CouplingLookup cubic_lookup(const CubicLatticeSpec &spec) {
  std::vector<LatticeVector> v;
  v.reserve(spec.site_count());
  const int n = spec.n_l;
  for (int i = -n; i <= n; ++i) {
    for (int j = -n; j <= n; ++j) {
      for (int k = -n; k <= n; ++k) {
        if (i == 0 && j == 0 && k == 0)
          continue;
        const Vec3 p(i * spec.spacing, j * spec.spacing, k * spec.spacing);
        v.push_back({ p, dipolar_geometry_factor(p.x(), p.y(), p.z()), 0 });
      }
    }
  }
  return CouplingLookup::from_vectors(std::move(v));
}

Structure snap_to_lattice(const Structure &s, double a0, double tol) {
  Structure out = s;
  if (s.size() == 0)
    return out;
  const Vec3 origin = s.coordinates.front();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec3 rel = s.coordinates[i] - origin;
    auto c = lab_to_crystal(rel, a0, tol);
    if (!c || sublattice_of(*c) < 0)
      throw InputError("spin '" + s.ids[i] + "' is not within "
                       + std::to_string(tol) + " A of a lattice site");
    out.coordinates[i] = origin + crystal_to_lab(*c, a0);
  }
  return out;
}

} // namespace spinmap
