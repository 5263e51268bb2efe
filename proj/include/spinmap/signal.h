//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_SIGNAL_H_
#define SPINMAP_SIGNAL_H_

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace spinmap {

struct SignalModel {
  double a = 0;   // offset
  double A = 1;   // contrast amplitude
  double B = 0;   // pulse-error amplitude
  double T2 = std::numeric_limits<double>::infinity(); // s
  double n = 2;   // decay exponent
  double f = 0;   // Hz
  double phi = 0; // rad

  double envelope(double t) const;
  double operator()(double t) const;
};

struct CombLine {
  double frequency_hz; // signed
  double weight;
};

/**
 * @brief Lines +-f1 +- ... +- fN of a multi-resonance signal.
 *
 * Each target inversion succeeds with probability p_k (1 when
 * inversion_probabilities is empty). With failure_branches, every subset S
 * of successful inversions contributes the 2^|S| lines over S with total
 * weight prod_{k in S} p_k prod_{k not in S} (1 - p_k); the empty subset is
 * a line at 0 Hz. Coincident lines merge; lines are sorted by frequency.
 */
std::vector<CombLine> frequency_comb(
    const std::vector<double> &couplings, bool failure_branches,
    const std::vector<double> &inversion_probabilities = {});

struct MultiResonanceSpec {
  std::vector<double> couplings;               // Hz
  std::vector<double> inversion_probabilities; // empty: all 1
  std::vector<double> evolution_times;         // s, strictly increasing
};

struct NoiseOptions {
  double sigma = 0;
  std::uint64_t seed = 0;
};

struct TimeSeries {
  std::vector<double> t;
  std::vector<double> s;
};

struct Spectrum {
  std::vector<double> f;   // Hz
  std::vector<double> psd; // one-sided, per Hz
};

// Uniform grid of n samples starting at t0.
std::vector<double> uniform_times(std::size_t n, double dt, double t0 = 0);

/**
 * @brief S(t) = a + A env(t) sum_l w_l cos(2 pi |f_l| t + phi) + B env(t)
 * with env = exp(-(t/T2)^n) and the comb folded onto |f|, plus optional
 * Gaussian noise. model.f is ignored; a single coupling reproduces the fit
 * model exactly.
 *
 * @throws InputError for an invalid resonance spec or model.
 */
TimeSeries synthesize_trace(const MultiResonanceSpec &spec,
                            const SignalModel &model,
                            const NoiseOptions &noise = {});

/**
 * @brief One-sided periodogram of the mean-removed trace zero-padded to
 * zero_fill_factor times its length:
 * P_k = c_k dt |X_k|^2 / N, c_k = 2 except at 0 and Nyquist, so that
 * sum_k P_k df equals the mean power of the mean-removed trace.
 *
 * @throws InputError for a non-uniform grid or fewer than 2 samples.
 */
Spectrum psd(const TimeSeries &trace, int zero_fill_factor = 1);

// Frequency of the tallest PSD bin above 0 Hz.
double peak_frequency(const Spectrum &spectrum);

struct FitOptions {
  std::optional<double> fixed_n = 2.0; // nullopt: fit n as well
  bool fit_pulse_error = true;         // fit B, else hold it at init.B
  int max_iterations = 500;
};

struct SignalFit {
  SignalModel model;
  SignalModel sigma;        // 1 sigma per parameter, 0 when held fixed
  Eigen::MatrixXd covariance; // over the free parameters
  std::vector<std::string> parameters;
  double rss = 0;
  int iterations = 0;
};

/**
 * @brief Levenberg-Marquardt fit of SignalModel to a trace. Uncertainties
 * come from the residual variance only.
 *
 * @throws InputError for fewer than 8 samples or an initial frequency
 * outside half the Nyquist band.
 * @throws ConvergenceError if the fit does not converge.
 */
SignalFit fit_signal(const TimeSeries &trace, const SignalModel &init,
                     const FitOptions &opts = {});

// Initial model from the trace: tallest PSD bin and the trace range.
SignalModel initial_guess(const TimeSeries &trace, double t2_guess);

enum class FwhmMode { time_domain, psd_fit };

/**
 * @brief Spectral resolution for coherence time T2.
 *
 * time_domain: 2 sqrt(ln 2) / (pi T2). psd_fit: FWHM of a Gaussian fitted
 * to the PSD peak of a noiseless n = 2 trace sampled to 4 T2.
 * @throws InputError if T2 <= 0.
 */
double fwhm_resolution(double t2, FwhmMode mode = FwhmMode::time_domain);

// Two-column delimited text with a header line ("t,S" or "f,PSD").
void write_trace(const std::string &path, const TimeSeries &trace);
TimeSeries read_trace(const std::string &path);
void write_spectrum(const std::string &path, const Spectrum &spectrum);
Spectrum read_spectrum(const std::string &path);

} // namespace spinmap

#endif // SPINMAP_SIGNAL_H_
