//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include "spinmap/refine.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "spinmap/error.h"

namespace spinmap {

namespace {

Eigen::Matrix3d rot_z(double deg) {
  const double t = deg * std::numbers::pi / 180;
  Eigen::Matrix3d R;
  R << std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t), 0, 0, 0, 1;
  return R;
}

// d pred / d (q_j - q_i) for pred = kappa |3 dz^2 - r^2| / r^5.
Vec3 coupling_gradient(const Vec3 &d, double kappa) {
  const double r2 = d.squaredNorm();
  const double r = std::sqrt(r2);
  const double u = 3 * d.z() * d.z() - r2;
  const double inv5 = 1 / (r2 * r2 * r);
  const double inv7 = inv5 / r2;
  const Vec3 du(-2 * d.x(), -2 * d.y(), 4 * d.z());
  const Vec3 g = du * inv5 - 5 * u * inv7 * d;
  return (u < 0 ? -kappa : kappa) * g;
}

struct PairTerm {
  std::size_t i, j; // structure indices
  double f, weight, kappa;
};

} // namespace

double gauge_rotation_deg(const Structure &s, const std::string &origin_spin,
                          const std::string &plane_spin) {
  const Vec3 d = s.position(plane_spin) - s.position(origin_spin);
  return -std::atan2(d.y(), d.x()) * 180 / std::numbers::pi;
}

RefinementResult refine(const Structure &initial, const CouplingTable &table,
                        const GaugeSpec &gauge, const RefineOptions &opts,
                        const PhysicalConstants &pc) {
  const auto oi = initial.index_of(gauge.origin_spin);
  const auto pi = initial.index_of(gauge.plane_spin);
  if (!oi || !pi)
    throw InputError("gauge spins must be part of the structure");
  if (*oi == *pi)
    throw InputError("origin and plane spin must differ");
  for (const auto &id: table.spins()) {
    if (!initial.index_of(id))
      throw InputError("missing coordinates for spin '" + id + "'");
  }

  const std::size_t M = initial.size();
  const Eigen::Matrix3d R = rot_z(gauge.pre_rotation_deg);
  std::vector<Vec3> guess(M);
  for (std::size_t i = 0; i < M; ++i)
    guess[i] = R * (initial.coordinates[i] - initial.coordinates[*oi]);

  // Free coordinate map: param index per (spin, axis), -1 when fixed.
  std::vector<std::array<int, 3>> pidx(M, { -1, -1, -1 });
  int np = 0;
  for (std::size_t i = 0; i < M; ++i) {
    if (i == *oi)
      continue;
    for (int a = 0; a < 3; ++a) {
      if (i == *pi && a == 1)
        continue;
      pidx[i][a] = np++;
    }
  }

  std::vector<PairTerm> terms;
  for (const auto &p: table.pairs()) {
    const auto a = *initial.index_of(table.spins()[p.i]);
    const auto b = *initial.index_of(table.spins()[p.j]);
    const double kappa = pc.kappa_hz_a3(
        gyromagnetic_ratio(nucleus_of(table.spins()[p.i]), pc),
        gyromagnetic_ratio(nucleus_of(table.spins()[p.j]), pc));
    double w = 1;
    if (opts.weighted) {
      const double s =
          p.entry.weak_upper_bound ? opts.weak_sigma_hz : p.entry.sigma_hz;
      if (!(s > 0))
        throw InputError("weighted refinement needs sigma > 0 for "
                         + table.spins()[p.i] + "-" + table.spins()[p.j]);
      w = 1 / s;
    }
    terms.push_back({ a, b, p.entry.effective_hz(opts.residual.weak_value_hz),
                      w, kappa });
  }
  if (terms.size() < static_cast<std::size_t>(np))
    throw InputError("refine: fewer couplings than free coordinates");

  auto positions = [&](const Eigen::VectorXd &x) {
    std::vector<Vec3> q(M, Vec3::Zero());
    for (std::size_t i = 0; i < M; ++i)
      for (int a = 0; a < 3; ++a)
        q[i][a] = pidx[i][a] >= 0 ? x[pidx[i][a]] : 0.0;
    return q;
  };

  // The smooth stage fits squared couplings, (f^2 - pred^2) / 2f, which has
  // no kink where a pair crosses the magic angle.
  bool smooth = false;
  LsqProblem prob;
  prob.eval = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r,
                  Eigen::MatrixXd *J) {
    const auto q = positions(x);
    r.resize(static_cast<Eigen::Index>(terms.size()));
    if (J)
      J->setZero(static_cast<Eigen::Index>(terms.size()), x.size());
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const PairTerm &pt = terms[t];
      const Vec3 d = q[pt.j] - q[pt.i];
      const double pred =
          pt.kappa * dipolar_geometry_factor(d.x(), d.y(), d.z());
      const bool sq = smooth && pt.f > 0;
      r[static_cast<Eigen::Index>(t)] =
          (sq ? (pt.f * pt.f - pred * pred) / (2 * pt.f) : pt.f - pred)
          * pt.weight;
      if (!J)
        continue;
      const Vec3 g = coupling_gradient(d, pt.kappa) * pt.weight
                     * (sq ? pred / pt.f : 1.0);
      for (int a = 0; a < 3; ++a) {
        if (pidx[pt.j][a] >= 0)
          (*J)(static_cast<Eigen::Index>(t), pidx[pt.j][a]) -= g[a];
        if (pidx[pt.i][a] >= 0)
          (*J)(static_cast<Eigen::Index>(t), pidx[pt.i][a]) += g[a];
      }
    }
  };
  prob.feasible = [&](const Eigen::VectorXd &x) {
    const auto q = positions(x);
    for (const PairTerm &pt: terms) {
      if ((q[pt.j] - q[pt.i]).squaredNorm() < 1e-6)
        return false;
    }
    return true;
  };

  Eigen::VectorXd x0(np);
  for (std::size_t i = 0; i < M; ++i)
    for (int a = 0; a < 3; ++a)
      if (pidx[i][a] >= 0)
        x0[pidx[i][a]] = guess[i][a];

  LsqResult lsq = levenberg_marquardt(prob, x0, opts.lsq);
  if (opts.smooth_start) {
    smooth = true;
    const LsqResult pre = levenberg_marquardt(prob, x0, opts.lsq);
    smooth = false;
    LsqResult alt = levenberg_marquardt(prob, pre.x, opts.lsq);
    if (alt.cost < lsq.cost)
      lsq = std::move(alt);
  }
  const Covariance cov = residual_covariance(lsq.jacobian, lsq.cost);

  RefinementResult res;
  res.converged = lsq.converged;
  res.iterations = lsq.iterations;
  res.gradient_norm = lsq.gradient_norm;

  const auto q = positions(lsq.x);
  const char axes[] = { 'x', 'y', 'z' };
  for (std::size_t i = 0; i < M; ++i) {
    for (int a = 0; a < 3; ++a) {
      const int k = pidx[i][a];
      if (k < 0)
        continue;
      res.free_coordinates.push_back(
          { initial.ids[i], a, q[i][a], std::sqrt(std::max(0.0, cov.matrix(k, k))) });
    }
  }
  for (int k: cov.rank_deficient) {
    for (std::size_t i = 0; i < M; ++i)
      for (int a = 0; a < 3; ++a)
        if (pidx[i][a] == k)
          res.flagged.push_back(initial.ids[i] + "." + axes[a]);
  }

  const Eigen::Matrix3d back =
      opts.rotate_back ? Eigen::Matrix3d(R.transpose())
                       : Eigen::Matrix3d::Identity();
  Structure out;
  out.ids = initial.ids;
  out.gauge = { gauge.origin_spin, gauge.plane_spin, gauge.pre_rotation_deg };
  std::vector<Vec3> sig(M, Vec3::Zero());
  for (std::size_t i = 0; i < M; ++i) {
    out.coordinates.push_back(back * q[i]);
    Eigen::Matrix3d block = Eigen::Matrix3d::Zero();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (pidx[i][a] >= 0 && pidx[i][b] >= 0)
          block(a, b) = cov.matrix(pidx[i][a], pidx[i][b]);
    const Eigen::Matrix3d rb = back * block * back.transpose();
    for (int a = 0; a < 3; ++a)
      sig[i][a] = std::sqrt(std::max(0.0, rb(a, a)));
    res.delta_r.push_back((q[i] - guess[i]).norm());
  }
  out.uncertainties = sig;

  res.initial_xi = residuals_and_xi(initial, table, opts.residual, pc).xi;
  out.xi = residuals_and_xi(out, table, opts.residual, pc).xi;
  res.final_xi = out.xi;
  res.structure = std::move(out);
  return res;
}

Vec3 RigidTransform::apply(const Vec3 &p) const {
  Vec3 q = p;
  if (reflect_y)
    q.y() = -q.y();
  if (invert_z)
    q.z() = -q.z();
  return rot_z(rotation_deg) * q + translation;
}

Structure transform_structure(const Structure &s, const RigidTransform &t) {
  Structure out = s;
  for (auto &p: out.coordinates)
    p = t.apply(p);
  if (out.uncertainties) {
    const Eigen::Matrix3d R = rot_z(t.rotation_deg);
    for (auto &u: *out.uncertainties) {
      const Eigen::Matrix3d C = R * Eigen::Matrix3d(u.cwiseAbs2().asDiagonal())
                                * R.transpose();
      u = C.diagonal().cwiseSqrt();
    }
  }
  return out;
}

namespace {

// Weighted best z-rotation (and translation) of b onto a.
void weighted_fit(const std::vector<Vec3> &a, const std::vector<Vec3> &b,
                  const std::vector<double> &w, bool translation,
                  double &theta, Vec3 &t) {
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  double sw = 0;
  if (translation) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      ca += w[i] * a[i];
      cb += w[i] * b[i];
      sw += w[i];
    }
    ca /= sw;
    cb /= sw;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec3 pa = a[i] - ca, pb = b[i] - cb;
    sxx += w[i] * (pb.x() * pa.x() + pb.y() * pa.y());
    sxy += w[i] * (pb.x() * pa.y() - pb.y() * pa.x());
  }
  theta = std::atan2(sxy, sxx);
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec3 rcb(c * cb.x() - s * cb.y(), s * cb.x() + c * cb.y(), cb.z());
  t = translation ? Vec3(ca - rcb) : Vec3::Zero();
}

double mean_distance(const std::vector<Vec3> &a, const std::vector<Vec3> &b,
                     const RigidTransform &tr, std::vector<double> *d) {
  double sum = 0;
  if (d)
    d->clear();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double di = (a[i] - tr.apply(b[i])).norm();
    sum += di;
    if (d)
      d->push_back(di);
  }
  return sum / static_cast<double>(a.size());
}

} // namespace

StructureComparison compare_structures(const Structure &a, const Structure &b,
                                       bool align, const AlignOptions &opts) {
  if (a.size() != b.size())
    throw InputError("compare_structures: spin sets differ");
  std::vector<Vec3> pa = a.coordinates, pb;
  for (const auto &id: a.ids) {
    auto k = b.index_of(id);
    if (!k)
      throw InputError("compare_structures: spin '" + id
                       + "' missing from second structure");
    pb.push_back(b.coordinates[*k]);
  }

  StructureComparison best;
  best.mean = std::numeric_limits<double>::infinity();
  if (!align || pa.empty()) {
    best.mean = pa.empty() ? 0.0 : mean_distance(pa, pb, {}, &best.delta_r);
    return best;
  }

  for (int ry = 0; ry <= (opts.reflect_y ? 1 : 0); ++ry) {
    for (int iz = 0; iz <= (opts.invert_z ? 1 : 0); ++iz) {
      RigidTransform tr;
      tr.reflect_y = ry;
      tr.invert_z = iz;
      std::vector<Vec3> pbd;
      for (const Vec3 &p: pb)
        pbd.push_back(Vec3(p.x(), ry ? -p.y() : p.y(), iz ? -p.z() : p.z()));

      // Least squares start, then Weiszfeld-type reweighting for the mean.
      std::vector<double> w(pa.size(), 1.0);
      double theta;
      Vec3 t;
      weighted_fit(pa, pbd, w, opts.translation, theta, t);
      tr.rotation_deg = theta * 180 / std::numbers::pi;
      tr.translation = t;
      std::vector<double> d;
      double mean = mean_distance(pa, pb, tr, &d);
      for (int it = 0; it < 2000; ++it) {
        for (std::size_t i = 0; i < d.size(); ++i)
          w[i] = 1 / std::max(d[i], 1e-12);
        weighted_fit(pa, pbd, w, opts.translation, theta, t);
        RigidTransform next = tr;
        next.rotation_deg = theta * 180 / std::numbers::pi;
        next.translation = t;
        std::vector<double> dn;
        const double mn = mean_distance(pa, pb, next, &dn);
        if (!(mn < mean))
          break;
        const bool done = mean - mn < 1e-15 * std::max(1.0, mean);
        tr = next;
        mean = mn;
        d = std::move(dn);
        if (done)
          break;
      }
      if (mean < best.mean) {
        best.mean = mean;
        best.delta_r = d;
        best.transform = tr;
      }
    }
  }
  return best;
}

SensorPlacement position_sensor(const CouplingTable &table,
                                const Structure &carbons,
                                const DiamondLattice &lattice,
                                const SensorOptions &opts,
                                const PhysicalConstants &pc) {
  const std::size_t n_idx = table.require_index(opts.nitrogen_id);
  if (carbons.size() == 0)
    throw InputError("position_sensor: empty carbon structure");

  // Carbons on exact lattice sites relative to the first spin.
  const Vec3 origin = carbons.coordinates.front();
  std::vector<Vec3> cpos;
  std::vector<int> csub;
  for (std::size_t i = 0; i < carbons.size(); ++i) {
    auto c = lab_to_crystal(carbons.coordinates[i] - origin, lattice.a0);
    const int sub = c ? sublattice_of(*c) : -1;
    if (sub < 0)
      throw InputError("position_sensor: spin '" + carbons.ids[i]
                       + "' is not on the lattice");
    cpos.push_back(crystal_to_lab(*c, lattice.a0));
    csub.push_back(sub);
  }

  struct Con {
    std::size_t c;
    double f, tol, kappa;
  };
  std::vector<Con> cons;
  const double gn = pc.gamma_n;
  for (std::size_t i = 0; i < carbons.size(); ++i) {
    auto ti = table.index_of(carbons.ids[i]);
    if (!ti)
      continue;
    const CouplingEntry *e = table.find(*ti, n_idx);
    if (!e)
      continue;
    const double tol = e->single_projection_only && !e->weak_upper_bound
                           ? opts.tol_single
                           : opts.tol;
    cons.push_back({ i, e->effective_hz(opts.weak_value), tol,
                     pc.kappa_hz_a3(gyromagnetic_ratio(
                                        nucleus_of(carbons.ids[i]), pc),
                                    gn) });
  }
  if (cons.size() < 4)
    throw InputError("position_sensor: need at least 4 measured N-C couplings");
  std::stable_sort(cons.begin(), cons.end(),
                   [](const Con &a, const Con &b) { return a.f > b.f; });

  const CouplingLookup lookup = CouplingLookup::from_diamond(lattice);
  const Con &anchor = cons.front();
  const auto vecs =
      candidate_vectors(anchor.f, lookup, anchor.tol, anchor.kappa);
  const bool neg = csub[anchor.c] == 1;

  SensorPlacement out;
  for (const LatticeVector &lv: vecs) {
    const Vec3 pos = neg ? Vec3(cpos[anchor.c] - lv.v)
                         : Vec3(cpos[anchor.c] + lv.v);
    // Only B sites have a lattice neighbour along -z for the vacancy.
    if ((csub[anchor.c] ^ lv.flip) != 1)
      continue;
    bool ok = true;
    double xi = 0;
    for (const Con &q: cons) {
      const Vec3 d = pos - cpos[q.c];
      const double df =
          q.f - q.kappa * dipolar_geometry_factor(d.x(), d.y(), d.z());
      if (!(std::abs(df) < q.tol)) {
        ok = false;
        break;
      }
      xi += df * df;
    }
    for (std::size_t i = 0; ok && i < cpos.size(); ++i)
      ok = (pos - cpos[i]).norm() > 1e-6;
    if (ok)
      out.ranked.push_back({ pos + origin, xi });
  }
  if (out.ranked.empty())
    throw ExhaustionError("no lattice site satisfies the N-C couplings",
                          opts.nitrogen_id);
  std::sort(out.ranked.begin(), out.ranked.end(),
            [](const SensorCandidate &a, const SensorCandidate &b) {
              if (a.xi != b.xi)
                return a.xi < b.xi;
              return std::lexicographical_compare(
                  a.nitrogen.data(), a.nitrogen.data() + 3, b.nitrogen.data(),
                  b.nitrogen.data() + 3);
            });
  out.unique = out.ranked.size() == 1;
  out.nitrogen = out.ranked.front().nitrogen;

  const Crystal nc = *lab_to_crystal(out.nitrogen - origin, lattice.a0);
  const Crystal vc{ nc[0] - 1, nc[1] - 1, nc[2] - 1 };
  out.vacancy = origin + crystal_to_lab(vc, lattice.a0);

  if (opts.refine) {
    LsqProblem prob;
    prob.eval = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r,
                    Eigen::MatrixXd *J) {
      const Vec3 p(x[0], x[1], x[2]);
      r.resize(static_cast<Eigen::Index>(cons.size()));
      if (J)
        J->setZero(static_cast<Eigen::Index>(cons.size()), 3);
      for (std::size_t t = 0; t < cons.size(); ++t) {
        const Vec3 d = p - cpos[cons[t].c];
        r[static_cast<Eigen::Index>(t)] =
            cons[t].f
            - cons[t].kappa * dipolar_geometry_factor(d.x(), d.y(), d.z());
        if (J) {
          const Vec3 g = coupling_gradient(d, cons[t].kappa);
          for (int a = 0; a < 3; ++a)
            (*J)(static_cast<Eigen::Index>(t), a) = -g[a];
        }
      }
    };
    const Vec3 start = out.nitrogen - origin;
    const LsqResult lsq =
        levenberg_marquardt(prob, Eigen::Vector3d(start), {});
    const Covariance cov = residual_covariance(lsq.jacobian, lsq.cost);
    out.refined = Vec3(lsq.x[0], lsq.x[1], lsq.x[2]) + origin;
    out.refined_sigma = cov.matrix.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.refined_xi = lsq.cost;
  }
  return out;
}

std::vector<HyperfineDifference>
hyperfine_comparison(const std::vector<SpinRecord> &records,
                     const std::vector<ReferenceSite> &reference,
                     const HyperfineComparisonOptions &opts) {
  std::vector<HyperfineDifference> out;
  for (const auto &r: records) {
    auto it = std::find_if(reference.begin(), reference.end(),
                           [&](const ReferenceSite &s) {
                             return s.label == r.id;
                           });
    if (it == reference.end())
      continue;
    const double par = opts.flip_sign ? -r.a_par : r.a_par;
    out.push_back({ r.id, it->label, 0.0, par - it->a_par,
                    r.a_perp - it->a_perp });
  }
  return out;
}

std::vector<HyperfineDifference>
hyperfine_comparison(const std::vector<SpinRecord> &records,
                     const Structure &structure,
                     const std::vector<ReferenceSite> &reference,
                     const HyperfineComparisonOptions &opts) {
  std::vector<HyperfineDifference> out;
  for (const auto &r: records) {
    auto k = structure.index_of(r.id);
    if (!k)
      continue;
    const Vec3 &p = structure.coordinates[*k];
    double best = std::numeric_limits<double>::infinity();
    const ReferenceSite *site = nullptr;
    for (const auto &s: reference) {
      const double d = (s.position * opts.scale - p).norm();
      if (d < best) {
        best = d;
        site = &s;
      }
    }
    HyperfineDifference hd;
    hd.id = r.id;
    if (site && best <= opts.match_radius) {
      const double par = opts.flip_sign ? -r.a_par : r.a_par;
      hd.site = site->label;
      hd.distance = best;
      hd.d_par = par - site->a_par;
      hd.d_perp = r.a_perp - site->a_perp;
    }
    out.push_back(hd);
  }
  return out;
}

} // namespace spinmap
