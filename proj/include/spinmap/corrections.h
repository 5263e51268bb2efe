//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_CORRECTIONS_H_
#define SPINMAP_CORRECTIONS_H_

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spinmap/constants.h"
#include "spinmap/spin_model.h"

namespace spinmap {

/**
 * @brief Electron spin-1 plus two spin-1/2 nuclei.
 *
 * H = D Sz^2 + ge B.S + gc B.(I1 + I2) + S.A1.I1 + S.A2.I2 + I1.C.I2, all
 * in rad/s. Basis order |m_s, m1, m2> with m_s = +1, 0, -1 and
 * m = +1/2, -1/2, index 4 * e + 2 * n1 + n2.
 */
struct SpinSystemHamiltonian {
  double delta_zfs = 0; // rad/s
  double gamma_e = 0;   // rad s^-1 T^-1
  double gamma_c = 0;   // rad s^-1 T^-1
  Vec3 b_gauss = Vec3::Zero();
  Eigen::Matrix3d a1 = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d a2 = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d c = Eigen::Matrix3d::Zero();

  using Matrix12 = Eigen::Matrix<std::complex<double>, 12, 12>;
  Matrix12 matrix() const;

  // Hyperfine tensor with A_zz = a_par, (A_zx, A_zy) = a_perp (cos, sin) phi
  // and the symmetric partners; all other components zero.
  static Eigen::Matrix3d hyperfine_tensor(double a_par, double a_perp,
                                          double phi);
  // Full dipolar tensor alpha / r^3 (3 rr - 1) of two 13C spins, rad/s.
  static Eigen::Matrix3d dipolar_tensor(const Vec3 &r1, const Vec3 &r2,
                                        const PhysicalConstants &pc = {});

  // Pair of 13C spins; hyperfine values in rad/s, fields in G.
  static SpinSystemHamiltonian for_pair(const Vec3 &r1, const Vec3 &r2,
                                        double a_par1, double a_perp1,
                                        double phi1, double a_par2,
                                        double a_perp2, double phi2,
                                        double bz, double bperp, double theta,
                                        const PhysicalConstants &pc = {});
};

enum class PredictionMethod { exact, perturbative };

struct CorrectionTerms {
  double dl1_minus = 0; // dl1(m_s = -1)
  double dl1_plus = 0;  // dl1(m_s = +1)
  double dl2_0 = 0;
  double dl2_1 = 0;
  double dl3_0 = 0;
  double dl3_1 = 0;
};

struct DoubleResonancePrediction {
  double f_minus1 = 0; // Hz
  double f_plus1 = 0;  // Hz
  double f_av = 0;     // Hz
  CorrectionTerms terms; // rad/s, perturbative only
  PredictionMethod method = PredictionMethod::exact;
  std::vector<std::string> warnings;
};

/**
 * @brief Diagonalise the full Hamiltonian and form
 * f(m_s) = |l(++) + l(--) - l(+-) - l(-+)| / 4pi for m_s = +-1.
 *
 * (++) and (--) are labelled by maximal overlap with the basis states; the
 * flip-flop pair (+-), (-+) enters only through its sum, taken over the two
 * eigenstates with the largest weight in their span, so their mutual mixing
 * does not matter.
 * @throws DegeneracyError if any overlap is below 0.5.
 */
DoubleResonancePrediction exact_double_resonance(
    const SpinSystemHamiltonian &h);

/**
 * @brief Non-degenerate second-order eigenvalues of diag(e0) + v:
 * e0_k + v_kk + sum_m |v_km|^2 / (e0_k - e0_m).
 *
 * @throws DegeneracyError if a coupled pair of levels is degenerate.
 */
Eigen::VectorXd second_order_eigenvalues(const Eigen::VectorXd &e0,
                                         const Eigen::MatrixXcd &v);

/**
 * @brief Second-order perturbative corrections dl1, dl2, dl3.
 *
 * Adds a regime warning when gc Bz, |A_zz| or |C_zz| exceeds 0.1 of
 * |D +- ge Bz|.
 */
DoubleResonancePrediction perturbative_corrections(
    const SpinSystemHamiltonian &h);

enum class CorrectionTarget { ms_minus1, ms_plus1, averaged };

struct BoundOptions {
  int angle_steps = 24;
  int bperp_steps = 5;
  bool polish = true;
  PredictionMethod method = PredictionMethod::perturbative;
};

struct CorrectionBound {
  double value_hz = 0;
  double phi1 = 0, phi2 = 0, theta = 0, bperp = 0;
  // Mean over the phi grid of the correction maximised over (bperp, theta).
  double phi_mean_hz = 0;
};

/**
 * @brief Largest |f_DE - |C_zz|/4pi| over phi1, phi2, theta in [0, 2pi) and
 * bperp in [0, bperp_max]: grid search followed by a compass polish.
 *
 * Ties on the grid go to the lexicographically smallest parameters.
 */
CorrectionBound max_correction_bound(const SpinRecord &s1,
                                     const SpinRecord &s2, const Vec3 &r1,
                                     const Vec3 &r2, double bz_gauss,
                                     double bperp_max_gauss,
                                     CorrectionTarget target,
                                     const BoundOptions &opts = {},
                                     const PhysicalConstants &pc = {});

struct CorrectionMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd minus1, plus1, averaged;            // maxima
  Eigen::MatrixXd minus1_mean, plus1_mean, averaged_mean; // phi means
};

// Pairwise bounds over every pair of the structure's spins with records.
CorrectionMatrix correction_matrix(const std::vector<SpinRecord> &records,
                                   const Structure &structure,
                                   double bz_gauss, double bperp_max_gauss,
                                   const BoundOptions &opts = {},
                                   const PhysicalConstants &pc = {});

} // namespace spinmap

#endif // SPINMAP_CORRECTIONS_H_
