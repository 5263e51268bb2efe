//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include "spinmap/spin_model.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spinmap/error.h"
#include "spinmap/lattice.h"

namespace spinmap {

Nucleus nucleus_of(std::string_view id) {
  return !id.empty() && id.front() == 'N' ? Nucleus::nitrogen14
                                          : Nucleus::carbon13;
}

double gyromagnetic_ratio(Nucleus nucleus, const PhysicalConstants &pc) {
  return nucleus == Nucleus::nitrogen14 ? pc.gamma_n : pc.gamma_c;
}

HyperfineEstimate hyperfine_from_frequencies(double omega_minus1,
                                             double omega_plus1,
                                             double omega_0) {
  if (omega_0 == 0)
    throw InputError("hyperfine_from_frequencies: omega_0 is zero");
  if (!(omega_minus1 > 0) || !(omega_plus1 > 0) || !(omega_0 > 0))
    throw InputError("hyperfine_from_frequencies: frequencies must be > 0");

  HyperfineEstimate h;
  h.a_par = (omega_plus1 * omega_plus1 - omega_minus1 * omega_minus1)
            / (4 * omega_0);
  const double rad = (omega_plus1 * omega_plus1 + omega_minus1 * omega_minus1
                      - 2 * omega_0 * omega_0 - 2 * h.a_par * h.a_par)
                     / 2;
  h.imaginary = rad < 0;
  h.a_perp = h.imaginary ? 0.0 : std::sqrt(rad);
  return h;
}

SpinRecord SpinRecord::from_frequencies(std::string id, double omega_minus1,
                                        double omega_plus1, double omega_0) {
  const HyperfineEstimate h =
      hyperfine_from_frequencies(omega_minus1, omega_plus1, omega_0);
  return { std::move(id), omega_minus1, omega_plus1, omega_0,
           h.a_par,       h.a_perp,     h.imaginary };
}

const char *to_string(MsProjection p) {
  switch (p) {
  case MsProjection::minus1:
    return "minus1";
  case MsProjection::plus1:
    return "plus1";
  case MsProjection::averaged:
    break;
  }
  return "averaged";
}

MsProjection projection_from_string(std::string_view s) {
  if (s == "minus1" || s == "-1")
    return MsProjection::minus1;
  if (s == "plus1" || s == "+1" || s == "1")
    return MsProjection::plus1;
  if (s == "averaged" || s == "average")
    return MsProjection::averaged;
  throw InputError("unknown m_s projection '" + std::string(s) + "'");
}

CouplingTable::CouplingTable(std::vector<std::string> spins,
                             MsProjection projection)
    : spins_(std::move(spins)), projection_(projection) {
  for (std::size_t i = 0; i < spins_.size(); ++i) {
    if (!index_.emplace(spins_[i], i).second)
      throw InputError("duplicate spin label '" + spins_[i] + "'");
  }
}

std::optional<std::size_t> CouplingTable::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    return std::nullopt;
  return it->second;
}

std::size_t CouplingTable::require_index(std::string_view id) const {
  auto i = index_of(id);
  if (!i)
    throw InputError("unknown spin label '" + std::string(id) + "'");
  return *i;
}

void CouplingTable::set(std::size_t i, std::size_t j, const CouplingEntry &e) {
  if (i == j)
    throw InputError("coupling table: diagonal entry for '" + spins_.at(i)
                     + "'");
  if (i >= spins_.size() || j >= spins_.size())
    throw InputError("coupling table: index out of range");
  if (!e.weak_upper_bound && !(e.frequency_hz > 0))
    throw InputError("coupling table: non-positive frequency for "
                     + spins_[i] + "-" + spins_[j]);
  entries_[{ std::min(i, j), std::max(i, j) }] = e;
}

void CouplingTable::set(std::string_view a, std::string_view b,
                        const CouplingEntry &e) {
  set(require_index(a), require_index(b), e);
}

const CouplingEntry *CouplingTable::find(std::size_t i, std::size_t j) const {
  auto it = entries_.find({ std::min(i, j), std::max(i, j) });
  return it == entries_.end() ? nullptr : &it->second;
}

const CouplingEntry *CouplingTable::find(std::string_view a,
                                         std::string_view b) const {
  auto i = index_of(a), j = index_of(b);
  if (!i || !j)
    return nullptr;
  return find(*i, *j);
}

std::vector<CouplingTable::Pair> CouplingTable::pairs() const {
  std::vector<Pair> out;
  out.reserve(entries_.size());
  for (const auto &[k, e]: entries_)
    out.push_back({ k.first, k.second, e });
  return out;
}

CouplingTable CouplingTable::subset(const std::vector<std::string> &ids) const {
  CouplingTable t(ids, projection_);
  std::vector<std::size_t> src;
  src.reserve(ids.size());
  for (const auto &id: ids)
    src.push_back(require_index(id));
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      if (const CouplingEntry *e = find(src[a], src[b]))
        t.set(a, b, *e);
    }
  }
  return t;
}

std::optional<std::size_t> Structure::index_of(std::string_view id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end())
    return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

const Vec3 &Structure::position(std::string_view id) const {
  auto i = index_of(id);
  if (!i)
    throw InputError("structure has no coordinates for spin '"
                     + std::string(id) + "'");
  return coordinates[*i];
}

double dipolar_coupling_signed(const Vec3 &pos_i, const Vec3 &pos_j,
                               double gamma_i, double gamma_j,
                               const PhysicalConstants &pc) {
  const Vec3 d = (pos_j - pos_i) * 1e-10;
  const double r2 = d.squaredNorm();
  if (r2 == 0)
    throw DegenerateGeometryError("dipolar coupling of coincident positions");
  const double r = std::sqrt(r2);
  return pc.alpha(gamma_i, gamma_j) / (r2 * r) * (3 * d.z() * d.z() / r2 - 1);
}

double dipolar_coupling(const Vec3 &pos_i, const Vec3 &pos_j, double gamma_i,
                        double gamma_j, const PhysicalConstants &pc) {
  return std::abs(dipolar_coupling_signed(pos_i, pos_j, gamma_i, gamma_j, pc))
         / (4 * std::numbers::pi);
}

double spin_pair_coupling(std::string_view id_i, const Vec3 &pos_i,
                          std::string_view id_j, const Vec3 &pos_j,
                          const PhysicalConstants &pc) {
  return dipolar_coupling(pos_i, pos_j,
                          gyromagnetic_ratio(nucleus_of(id_i), pc),
                          gyromagnetic_ratio(nucleus_of(id_j), pc), pc);
}

ResidualReport residuals_and_xi(const Structure &s, const CouplingTable &t,
                                const ResidualOptions &opts,
                                const PhysicalConstants &pc) {
  std::vector<const Vec3 *> pos(t.spin_count());
  for (std::size_t i = 0; i < t.spin_count(); ++i) {
    auto k = s.index_of(t.spins()[i]);
    if (!k)
      throw InputError("missing coordinates for spin '" + t.spins()[i] + "'");
    pos[i] = &s.coordinates[*k];
  }

  ResidualReport rep;
  const auto n = static_cast<Eigen::Index>(t.spin_count());
  rep.matrix = Eigen::MatrixXd::Constant(
      n, n, std::numeric_limits<double>::quiet_NaN());
  for (const auto &p: t.pairs()) {
    const double measured = p.entry.effective_hz(opts.weak_value_hz);
    const double predicted = spin_pair_coupling(
        t.spins()[p.i], *pos[p.i], t.spins()[p.j], *pos[p.j], pc);
    const double delta = measured - predicted;
    rep.pairs.push_back({ p.i, p.j, measured, predicted, delta });
    rep.matrix(p.i, p.j) = rep.matrix(p.j, p.i) = delta;
    rep.xi += delta * delta;
  }
  return rep;
}

CouplingTable synthesize_table(const Structure &s,
                               const PhysicalConstants &pc) {
  CouplingTable t(s.ids);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      CouplingEntry e;
      e.frequency_hz = spin_pair_coupling(s.ids[i], s.coordinates[i], s.ids[j],
                                          s.coordinates[j], pc);
      if (e.frequency_hz > 1e-9)
        t.set(i, j, e);
    }
  }
  return t;
}

SpinCountEstimate expected_spin_count(const Structure &s, double abundance,
                                      const PhysicalConstants &pc) {
  if (s.size() < 2)
    throw InputError("expected_spin_count: need at least 2 spins");
  if (!(abundance > 0) || abundance > 1)
    throw InputError("expected_spin_count: abundance must be in (0, 1]");

  // Lattice anchored at the first spin.
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3 &p: s.coordinates) {
    const Vec3 q = p - s.coordinates.front();
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Vec3 extent = hi - lo;

  // Crystal coordinates are R^T lab * 4 / a0; bound each by the box corners.
  const Eigen::Matrix3d &R = lattice_rotation();
  const double scale = 4 / pc.a0;
  Crystal cmin, cmax;
  for (int k = 0; k < 3; ++k) {
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 c(corner & 1 ? hi.x() : lo.x(), corner & 2 ? hi.y() : lo.y(),
                   corner & 4 ? hi.z() : lo.z());
      const double v = R.col(k).dot(c) * scale;
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    cmin[k] = static_cast<int>(std::floor(mn)) - 1;
    cmax[k] = static_cast<int>(std::ceil(mx)) + 1;
  }

  const double eps = 1e-9;
  std::size_t count = 0;
  for (int a = cmin[0]; a <= cmax[0]; ++a) {
    for (int b = cmin[1]; b <= cmax[1]; ++b) {
      for (int c = cmin[2]; c <= cmax[2]; ++c) {
        const Crystal n{ a, b, c };
        if (sublattice_of(n) < 0)
          continue;
        const Vec3 p = crystal_to_lab(n, pc.a0);
        if ((p.array() >= lo.array() - eps).all()
            && (p.array() <= hi.array() + eps).all())
          ++count;
      }
    }
  }

  const double volume_nm3 = extent.prod() * 1e-3;
  return { volume_nm3, count, static_cast<double>(count) * abundance };
}

} // namespace spinmap
