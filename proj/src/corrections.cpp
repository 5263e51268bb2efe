//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include "spinmap/corrections.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "spinmap/error.h"

namespace spinmap {

namespace {

using cd = std::complex<double>;
using M3 = Eigen::Matrix<cd, 3, 3>;
using M2 = Eigen::Matrix<cd, 2, 2>;
using M12 = SpinSystemHamiltonian::Matrix12;

constexpr double kFourPi = 4 * std::numbers::pi;

struct Operators {
  std::array<M12, 3> S, I1, I2;
  M12 Sz2;
};

M12 kron3(const M3 &a, const M2 &b, const M2 &c) {
  M12 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l)
          for (int m = 0; m < 2; ++m)
            for (int n = 0; n < 2; ++n)
              out(4 * i + 2 * k + m, 4 * j + 2 * l + n) =
                  a(i, j) * b(k, l) * c(m, n);
  return out;
}

const Operators &operators() {
  static const Operators ops = [] {
    const double r = 1 / std::sqrt(2.0);
    const cd I(0, 1);
    M3 sx, sy, sz, e3 = M3::Identity();
    sx << 0, r, 0, r, 0, r, 0, r, 0;
    sy << 0, -I * r, 0, I * r, 0, -I * r, 0, I * r, 0;
    sz << 1, 0, 0, 0, 0, 0, 0, 0, -1;
    M2 ix, iy, iz, e2 = M2::Identity();
    ix << 0, 0.5, 0.5, 0;
    iy << 0, -0.5 * I, 0.5 * I, 0;
    iz << 0.5, 0, 0, -0.5;
    Operators o;
    o.S = { kron3(sx, e2, e2), kron3(sy, e2, e2), kron3(sz, e2, e2) };
    o.I1 = { kron3(e3, ix, e2), kron3(e3, iy, e2), kron3(e3, iz, e2) };
    o.I2 = { kron3(e3, e2, ix), kron3(e3, e2, iy), kron3(e3, e2, iz) };
    o.Sz2 = o.S[2] * o.S[2];
    return o;
  }();
  return ops;
}

// Basis index of |m_s, m1, m2>; e = 0 for m_s = +1, 2 for m_s = -1.
int basis(int e, int n1, int n2) { return 4 * e + 2 * n1 + n2; }

double exact_f(const Eigen::SelfAdjointEigenSolver<M12> &es, int e) {
  const auto &V = es.eigenvectors();
  const auto &lam = es.eigenvalues();
  auto weight = [&](int b, int k) { return std::norm(V(b, k)); };

  auto best_for = [&](int b, int skip) {
    int best = -1;
    double w = -1;
    for (int k = 0; k < 12; ++k) {
      if (k == skip)
        continue;
      if (weight(b, k) > w) {
        w = weight(b, k);
        best = k;
      }
    }
    return std::make_pair(best, w);
  };

  const auto [kpp, wpp] = best_for(basis(e, 0, 0), -1);
  const auto [kmm, wmm] = best_for(basis(e, 1, 1), kpp);
  std::array<std::pair<double, int>, 12> ff;
  for (int k = 0; k < 12; ++k)
    ff[static_cast<std::size_t>(k)] = {
      (k == kpp || k == kmm) ? -1.0
                             : weight(basis(e, 0, 1), k)
                                   + weight(basis(e, 1, 0), k),
      k };
  std::sort(ff.begin(), ff.end(), [](auto a, auto b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });

  if (wpp < 0.5 || wmm < 0.5 || ff[0].first < 0.5 || ff[1].first < 0.5) {
    std::ostringstream os;
    os << "eigenstate labelling ambiguous for m_s = " << (e == 0 ? "+1" : "-1")
       << ": overlaps " << wpp << ", " << wmm << ", " << ff[0].first << ", "
       << ff[1].first;
    throw DegeneracyError(os.str());
  }
  const double d = lam[kpp] + lam[kmm] - lam[ff[0].second] - lam[ff[1].second];
  return std::abs(d) / kFourPi;
}

} // namespace

SpinSystemHamiltonian::Matrix12 SpinSystemHamiltonian::matrix() const {
  const Operators &o = operators();
  const Vec3 bt = b_gauss * kTeslaPerGauss;
  M12 h = delta_zfs * o.Sz2;
  for (int a = 0; a < 3; ++a) {
    h += gamma_e * bt[a] * o.S[static_cast<std::size_t>(a)];
    h += gamma_c * bt[a]
         * (o.I1[static_cast<std::size_t>(a)]
            + o.I2[static_cast<std::size_t>(a)]);
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const auto ua = static_cast<std::size_t>(a);
      const auto ub = static_cast<std::size_t>(b);
      if (a1(a, b) != 0)
        h += a1(a, b) * o.S[ua] * o.I1[ub];
      if (a2(a, b) != 0)
        h += a2(a, b) * o.S[ua] * o.I2[ub];
      if (c(a, b) != 0)
        h += c(a, b) * o.I1[ua] * o.I2[ub];
    }
  }
  return h;
}

Eigen::Matrix3d SpinSystemHamiltonian::hyperfine_tensor(double a_par,
                                                        double a_perp,
                                                        double phi) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  a(2, 2) = a_par;
  a(2, 0) = a(0, 2) = a_perp * std::cos(phi);
  a(2, 1) = a(1, 2) = a_perp * std::sin(phi);
  return a;
}

Eigen::Matrix3d SpinSystemHamiltonian::dipolar_tensor(
    const Vec3 &r1, const Vec3 &r2, const PhysicalConstants &pc) {
  const Vec3 d = (r2 - r1) * 1e-10;
  const double r = d.norm();
  if (r == 0)
    throw DegenerateGeometryError("dipolar tensor of coincident positions");
  const Vec3 u = d / r;
  return pc.alpha(pc.gamma_c, pc.gamma_c) / (r * r * r)
         * (3 * u * u.transpose() - Eigen::Matrix3d::Identity());
}

SpinSystemHamiltonian SpinSystemHamiltonian::for_pair(
    const Vec3 &r1, const Vec3 &r2, double a_par1, double a_perp1,
    double phi1, double a_par2, double a_perp2, double phi2, double bz,
    double bperp, double theta, const PhysicalConstants &pc) {
  SpinSystemHamiltonian h;
  h.delta_zfs = pc.delta_zfs;
  h.gamma_e = pc.gamma_e;
  h.gamma_c = pc.gamma_c;
  h.b_gauss = Vec3(bperp * std::cos(theta), bperp * std::sin(theta), bz);
  h.a1 = hyperfine_tensor(a_par1, a_perp1, phi1);
  h.a2 = hyperfine_tensor(a_par2, a_perp2, phi2);
  h.c = dipolar_tensor(r1, r2, pc);
  return h;
}

DoubleResonancePrediction exact_double_resonance(
    const SpinSystemHamiltonian &h) {
  const Eigen::SelfAdjointEigenSolver<M12> es(h.matrix());
  if (es.info() != Eigen::Success)
    throw DegeneracyError("Hamiltonian diagonalisation failed");
  DoubleResonancePrediction p;
  p.method = PredictionMethod::exact;
  p.f_plus1 = exact_f(es, 0);
  p.f_minus1 = exact_f(es, 2);
  p.f_av = (p.f_plus1 + p.f_minus1) / 2;
  return p;
}

Eigen::VectorXd second_order_eigenvalues(const Eigen::VectorXd &e0,
                                         const Eigen::MatrixXcd &v) {
  const Eigen::Index n = e0.size();
  if (v.rows() != n || v.cols() != n)
    throw InputError("second_order_eigenvalues: size mismatch");
  const double scale = std::max(e0.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double l = e0[k] + v(k, k).real();
    for (Eigen::Index m = 0; m < n; ++m) {
      if (m == k || v(k, m) == 0.0)
        continue;
      const double gap = e0[k] - e0[m];
      if (std::abs(gap) <= 1e-12 * scale)
        throw DegeneracyError("second_order_eigenvalues: coupled levels "
                              + std::to_string(k) + " and "
                              + std::to_string(m) + " are degenerate");
      l += std::norm(v(k, m)) / gap;
    }
    out[k] = l;
  }
  return out;
}

DoubleResonancePrediction perturbative_corrections(
    const SpinSystemHamiltonian &h) {
  DoubleResonancePrediction p;
  p.method = PredictionMethod::perturbative;

  const double bz_t = h.b_gauss.z() * kTeslaPerGauss;
  const double wc = h.gamma_c * bz_t;
  const double dplus = h.delta_zfs + h.gamma_e * bz_t;
  const double dminus = h.delta_zfs - h.gamma_e * bz_t;
  const double small = std::min(std::abs(dplus), std::abs(dminus));
  const double big = std::max({ std::abs(wc), std::abs(h.a1(2, 2)),
                                std::abs(h.a2(2, 2)), std::abs(h.c(2, 2)) });
  if (big > 0.1 * small)
    p.warnings.push_back("perturbative regime: nuclear scale exceeds 0.1 of "
                         "the electron splitting");
  if (std::abs(h.c(2, 2)) > 0.1 * std::abs(wc))
    p.warnings.push_back("perturbative regime: |C_zz| exceeds 0.1 of the "
                         "nuclear Zeeman frequency");

  const Eigen::Matrix3d &a1 = h.a1, &a2 = h.a2, &c = h.c;
  const double czx = c(2, 0), czy = c(2, 1), czz = c(2, 2);
  const double bx = h.b_gauss.x(), by = h.b_gauss.y(), bz = h.b_gauss.z();

  CorrectionTerms &t = p.terms;
  const double num1 = a1(2, 0) * a2(2, 0) + a1(2, 1) * a2(2, 1);
  t.dl1_plus = num1 / dplus;
  t.dl1_minus = num1 / dminus;
  t.dl2_0 = ((a1(2, 0) + a2(2, 0)) * czx + (a1(2, 1) + a2(2, 1)) * czy) / wc;
  t.dl2_1 = -((a1(2, 0) * czx + a1(2, 1) * czy) * a1(2, 2)
              + (a2(2, 0) * czx + a2(2, 1) * czy) * a2(2, 2))
            / (wc * wc);
  const double bc = bx * czx + by * czy;
  t.dl3_0 = 2 * bc / bz;
  t.dl3_1 = -(a1(2, 2) + a2(2, 2)) * bc / (bz * wc);

  p.f_plus1 =
      std::abs(czz + t.dl1_plus + t.dl2_0 + t.dl2_1 + t.dl3_0 + t.dl3_1)
      / kFourPi;
  p.f_minus1 =
      std::abs(czz + t.dl1_minus - t.dl2_0 + t.dl2_1 + t.dl3_0 - t.dl3_1)
      / kFourPi;
  // Mean of the two measured frequencies. It equals
  // |czz + (dl1(+1) + dl1(-1)) / 2 + dl2_1 + dl3_0| / 4pi whenever both
  // projections keep the sign of czz, so the m_s-odd terms cancel.
  p.f_av = (p.f_plus1 + p.f_minus1) / 2;
  return p;
}

namespace {

struct PairEval {
  const SpinRecord &s1, &s2;
  Vec3 r1, r2;
  double bz;
  const PhysicalConstants &pc;
  PredictionMethod method;
  double czz_hz;

  std::array<double, 3> operator()(double phi1, double phi2, double theta,
                                   double bperp) const {
    const double k = kTwoPi * 1e3;
    const auto h = SpinSystemHamiltonian::for_pair(
        r1, r2, s1.a_par * k, s1.a_perp * k, phi1, s2.a_par * k,
        s2.a_perp * k, phi2, bz, bperp, theta, pc);
    const DoubleResonancePrediction p = method == PredictionMethod::exact
                                            ? exact_double_resonance(h)
                                            : perturbative_corrections(h);
    return { std::abs(p.f_minus1 - czz_hz), std::abs(p.f_plus1 - czz_hz),
             std::abs(p.f_av - czz_hz) };
  }
};

std::array<CorrectionBound, 3> bounds_all(const PairEval &ev, double bmax,
                                          const BoundOptions &opts) {
  const int na = std::max(1, opts.angle_steps);
  const int nb = bmax > 0 ? std::max(1, opts.bperp_steps) : 1;
  const int nt = bmax > 0 ? na : 1;
  const double da = kTwoPi / na;
  auto bval = [&](int i) { return nb > 1 ? bmax * i / (nb - 1) : bmax; };

  std::array<CorrectionBound, 3> out{};
  for (auto &b: out)
    b.value_hz = -1;
  std::array<double, 3> phi_sum{};
  for (int i1 = 0; i1 < na; ++i1) {
    for (int i2 = 0; i2 < na; ++i2) {
      std::array<double, 3> local{ -1, -1, -1 };
      for (int it = 0; it < nt; ++it) {
        for (int ib = 0; ib < nb; ++ib) {
          const auto v = ev(i1 * da, i2 * da, it * da, bval(ib));
          for (std::size_t k = 0; k < 3; ++k) {
            local[k] = std::max(local[k], v[k]);
            if (v[k] > out[k].value_hz) {
              out[k].value_hz = v[k];
              out[k].phi1 = i1 * da;
              out[k].phi2 = i2 * da;
              out[k].theta = it * da;
              out[k].bperp = bval(ib);
            }
          }
        }
      }
      for (std::size_t k = 0; k < 3; ++k)
        phi_sum[k] += local[k];
    }
  }
  for (std::size_t k = 0; k < 3; ++k)
    out[k].phi_mean_hz = phi_sum[k] / (na * na);

  if (!opts.polish)
    return out;
  for (std::size_t k = 0; k < 3; ++k) {
    CorrectionBound &b = out[k];
    std::array<double, 4> x{ b.phi1, b.phi2, b.theta, b.bperp };
    std::array<double, 4> step{ da / 2, da / 2, bmax > 0 ? da / 2 : 0.0,
                                bmax > 0 && nb > 1 ? bmax / (nb - 1) / 2
                                                   : 0.0 };
    double best = b.value_hz;
    for (int round = 0; round < 40; ++round) {
      bool improved = false;
      for (std::size_t d = 0; d < 4; ++d) {
        if (step[d] == 0)
          continue;
        for (double sgn: { 1.0, -1.0 }) {
          auto y = x;
          y[d] += sgn * step[d];
          if (d == 3)
            y[d] = std::clamp(y[d], 0.0, bmax);
          const double v = ev(y[0], y[1], y[2], y[3])[k];
          if (v > best) {
            best = v;
            x = y;
            improved = true;
          }
        }
      }
      if (!improved) {
        for (double &s: step)
          s /= 2;
        if (std::max({ step[0], step[1] }) < 1e-7)
          break;
      }
    }
    b.value_hz = best;
    b.phi1 = std::fmod(std::fmod(x[0], kTwoPi) + kTwoPi, kTwoPi);
    b.phi2 = std::fmod(std::fmod(x[1], kTwoPi) + kTwoPi, kTwoPi);
    b.theta = std::fmod(std::fmod(x[2], kTwoPi) + kTwoPi, kTwoPi);
    b.bperp = x[3];
  }
  return out;
}

} // namespace

CorrectionBound max_correction_bound(const SpinRecord &s1,
                                     const SpinRecord &s2, const Vec3 &r1,
                                     const Vec3 &r2, double bz_gauss,
                                     double bperp_max_gauss,
                                     CorrectionTarget target,
                                     const BoundOptions &opts,
                                     const PhysicalConstants &pc) {
  if (bperp_max_gauss < 0)
    throw InputError("max_correction_bound: bperp_max must be >= 0");
  const double czz =
      std::abs(SpinSystemHamiltonian::dipolar_tensor(r1, r2, pc)(2, 2))
      / kFourPi;
  const PairEval ev{ s1, s2, r1, r2, bz_gauss, pc, opts.method, czz };
  const auto all = bounds_all(ev, bperp_max_gauss, opts);
  switch (target) {
  case CorrectionTarget::ms_minus1:
    return all[0];
  case CorrectionTarget::ms_plus1:
    return all[1];
  case CorrectionTarget::averaged:
    break;
  }
  return all[2];
}

CorrectionMatrix correction_matrix(const std::vector<SpinRecord> &records,
                                   const Structure &structure,
                                   double bz_gauss, double bperp_max_gauss,
                                   const BoundOptions &opts,
                                   const PhysicalConstants &pc) {
  CorrectionMatrix m;
  std::vector<const SpinRecord *> recs;
  std::vector<Vec3> pos;
  for (std::size_t i = 0; i < structure.size(); ++i) {
    auto it = std::find_if(records.begin(), records.end(),
                           [&](const SpinRecord &r) {
                             return r.id == structure.ids[i];
                           });
    if (it == records.end())
      continue;
    m.ids.push_back(structure.ids[i]);
    recs.push_back(&*it);
    pos.push_back(structure.coordinates[i]);
  }
  const auto n = static_cast<Eigen::Index>(m.ids.size());
  for (auto *x: { &m.minus1, &m.plus1, &m.averaged, &m.minus1_mean,
                  &m.plus1_mean, &m.averaged_mean })
    x->setZero(n, n);

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto ui = static_cast<std::size_t>(i);
      const auto uj = static_cast<std::size_t>(j);
      const double czz =
          std::abs(SpinSystemHamiltonian::dipolar_tensor(pos[ui], pos[uj], pc)(
              2, 2))
          / kFourPi;
      const PairEval ev{ *recs[ui], *recs[uj], pos[ui], pos[uj],
                         bz_gauss,  pc,        opts.method, czz };
      const auto b = bounds_all(ev, bperp_max_gauss, opts);
      m.minus1(i, j) = m.minus1(j, i) = b[0].value_hz;
      m.plus1(i, j) = m.plus1(j, i) = b[1].value_hz;
      m.averaged(i, j) = m.averaged(j, i) = b[2].value_hz;
      m.minus1_mean(i, j) = m.minus1_mean(j, i) = b[0].phi_mean_hz;
      m.plus1_mean(i, j) = m.plus1_mean(j, i) = b[1].phi_mean_hz;
      m.averaged_mean(i, j) = m.averaged_mean(j, i) = b[2].phi_mean_hz;
    }
  }
  return m;
}

} // namespace spinmap
