//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include "spinmap/signal.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

#include <fftw3.h>

#include "spinmap/constants.h"
#include "spinmap/error.h"
#include "spinmap/least_squares.h"

namespace spinmap {

namespace {

constexpr double kMergeHz = 1e-9;

std::vector<CombLine> merge_lines(std::vector<CombLine> lines) {
  std::sort(lines.begin(), lines.end(),
            [](const CombLine &a, const CombLine &b) {
              return a.frequency_hz < b.frequency_hz;
            });
  std::vector<CombLine> out;
  for (const auto &l: lines) {
    if (!out.empty()
        && std::abs(out.back().frequency_hz - l.frequency_hz) < kMergeHz)
      out.back().weight += l.weight;
    else
      out.push_back(l);
  }
  return out;
}

} // namespace

double SignalModel::envelope(double t) const {
  if (std::isinf(T2))
    return 1.0;
  return std::exp(-std::pow(std::abs(t) / T2, n));
}

double SignalModel::operator()(double t) const {
  const double e = envelope(t);
  return a + e * (A * std::cos(kTwoPi * f * t + phi) + B);
}

std::vector<CombLine> frequency_comb(
    const std::vector<double> &couplings, bool failure_branches,
    const std::vector<double> &inversion_probabilities) {
  const std::size_t n = couplings.size();
  if (n == 0)
    throw InputError("frequency_comb: need at least one coupling");
  if (n > 20)
    throw InputError("frequency_comb: at most 20 couplings");
  std::vector<double> p = inversion_probabilities;
  if (p.empty())
    p.assign(n, 1.0);
  if (p.size() != n)
    throw InputError("frequency_comb: one inversion probability per coupling");
  for (double x: p)
    if (!(x >= 0 && x <= 1))
      throw InputError("frequency_comb: probabilities must lie in [0, 1]");

  std::vector<CombLine> lines;
  const std::uint32_t full = (1u << n) - 1;
  for (std::uint32_t subset = 0; subset <= full; ++subset) {
    double w = 1;
    if (failure_branches) {
      for (std::size_t k = 0; k < n; ++k)
        w *= (subset >> k & 1u) ? p[k] : 1 - p[k];
    } else if (subset != full) {
      continue;
    }
    if (w == 0)
      continue;
    std::vector<double> fs;
    for (std::size_t k = 0; k < n; ++k)
      if (subset >> k & 1u)
        fs.push_back(couplings[k]);
    const std::uint32_t signs = 1u << fs.size();
    for (std::uint32_t s = 0; s < signs; ++s) {
      double f = 0;
      for (std::size_t k = 0; k < fs.size(); ++k)
        f += (s >> k & 1u) ? -fs[k] : fs[k];
      lines.push_back({ f, w / signs });
    }
  }
  return merge_lines(std::move(lines));
}

std::vector<double> uniform_times(std::size_t n, double dt, double t0) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i)
    t[i] = t0 + static_cast<double>(i) * dt;
  return t;
}

TimeSeries synthesize_trace(const MultiResonanceSpec &spec,
                            const SignalModel &model,
                            const NoiseOptions &noise) {
  if (!(model.T2 > 0))
    throw InputError("synthesize_trace: T2 must be > 0");
  if (!(model.n >= 1))
    throw InputError("synthesize_trace: decay exponent must be >= 1");
  for (std::size_t i = 1; i < spec.evolution_times.size(); ++i)
    if (!(spec.evolution_times[i] > spec.evolution_times[i - 1]))
      throw InputError("synthesize_trace: times must increase strictly");

  const auto comb =
      frequency_comb(spec.couplings, true, spec.inversion_probabilities);
  std::vector<CombLine> folded;
  for (const auto &l: comb)
    folded.push_back({ std::abs(l.frequency_hz), l.weight });
  folded = merge_lines(std::move(folded));

  TimeSeries ts;
  ts.t = spec.evolution_times;
  ts.s.resize(ts.t.size());
  std::mt19937_64 gen(noise.seed);
  std::normal_distribution<double> gauss(0.0, noise.sigma > 0 ? noise.sigma
                                                              : 1.0);
  for (std::size_t i = 0; i < ts.t.size(); ++i) {
    const double t = ts.t[i];
    double osc = 0;
    for (const auto &l: folded)
      osc += l.weight * std::cos(kTwoPi * l.frequency_hz * t + model.phi);
    const double e = model.envelope(t);
    ts.s[i] = model.a + e * (model.A * osc + model.B);
    if (noise.sigma > 0)
      ts.s[i] += gauss(gen);
  }
  return ts;
}

namespace {

double uniform_step(const std::vector<double> &t) {
  if (t.size() < 2)
    throw InputError("need at least two samples");
  const double dt = t[1] - t[0];
  if (!(dt > 0))
    throw InputError("time grid must increase");
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    if (std::abs((t[i + 1] - t[i]) - dt) > 1e-6 * dt)
      throw InputError("time grid is not uniform");
  }
  return dt;
}

std::mutex &fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

} // namespace

Spectrum psd(const TimeSeries &trace, int zero_fill_factor) {
  if (zero_fill_factor < 1)
    throw InputError("psd: zero fill factor must be >= 1");
  if (trace.t.size() != trace.s.size())
    throw InputError("psd: time and signal lengths differ");
  const double dt = uniform_step(trace.t);
  const std::size_t n = trace.s.size();
  const std::size_t len = n * static_cast<std::size_t>(zero_fill_factor);

  double mean = 0;
  for (double v: trace.s)
    mean += v;
  mean /= static_cast<double>(n);

  std::vector<double> in(len, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    in[i] = trace.s[i] - mean;
  const std::size_t nout = len / 2 + 1;
  std::vector<std::complex<double>> out(nout);

  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(len), in.data(),
                                reinterpret_cast<fftw_complex *>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }

  Spectrum sp;
  sp.f.resize(nout);
  sp.psd.resize(nout);
  const double df = 1 / (static_cast<double>(len) * dt);
  for (std::size_t k = 0; k < nout; ++k) {
    const bool edge = k == 0 || (len % 2 == 0 && k == len / 2);
    sp.f[k] = static_cast<double>(k) * df;
    sp.psd[k] = (edge ? 1.0 : 2.0) * dt * std::norm(out[k])
                / static_cast<double>(n);
  }
  return sp;
}

double peak_frequency(const Spectrum &spectrum) {
  if (spectrum.f.size() < 2)
    throw InputError("peak_frequency: spectrum too short");
  auto it = std::max_element(spectrum.psd.begin() + 1, spectrum.psd.end());
  return spectrum.f[static_cast<std::size_t>(it - spectrum.psd.begin())];
}

namespace {

enum Param { kA0, kAmp, kB, kT2, kN, kF, kPhi, kCount };
const char *const kNames[kCount] = { "a", "A", "B", "T2", "n", "f", "phi" };

std::array<double, kCount> to_array(const SignalModel &m) {
  return { m.a, m.A, m.B, m.T2, m.n, m.f, m.phi };
}

SignalModel from_array(const std::array<double, kCount> &v) {
  SignalModel m;
  m.a = v[kA0];
  m.A = v[kAmp];
  m.B = v[kB];
  m.T2 = v[kT2];
  m.n = v[kN];
  m.f = v[kF];
  m.phi = v[kPhi];
  return m;
}

} // namespace

SignalFit fit_signal(const TimeSeries &trace, const SignalModel &init,
                     const FitOptions &opts) {
  const std::size_t m = trace.t.size();
  if (m < 8 || trace.s.size() != m)
    throw InputError("fit_signal: need at least 8 samples");
  const double span = trace.t.back() - trace.t.front();
  const double nyquist = static_cast<double>(m - 1) / (2 * span);
  if (!(init.f > 0 && init.f < nyquist))
    throw InputError("fit_signal: initial frequency outside the Nyquist band");
  if (!(init.T2 > 0) || std::isinf(init.T2))
    throw InputError("fit_signal: initial T2 must be finite and > 0");

  std::array<double, kCount> base = to_array(init);
  if (opts.fixed_n)
    base[kN] = *opts.fixed_n;
  std::vector<int> free;
  for (int k = 0; k < kCount; ++k) {
    if (k == kN && opts.fixed_n)
      continue;
    if (k == kB && !opts.fit_pulse_error)
      continue;
    free.push_back(k);
  }
  auto expand = [&](const Eigen::VectorXd &x) {
    auto v = base;
    for (std::size_t i = 0; i < free.size(); ++i)
      v[static_cast<std::size_t>(free[i])] = x[static_cast<Eigen::Index>(i)];
    return v;
  };

  LsqProblem prob;
  prob.eval = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r,
                  Eigen::MatrixXd *J) {
    const auto v = expand(x);
    r.resize(static_cast<Eigen::Index>(m));
    if (J)
      J->resize(static_cast<Eigen::Index>(m), x.size());
    for (std::size_t i = 0; i < m; ++i) {
      const double t = trace.t[i];
      const double ratio = std::abs(t) / v[kT2];
      const double q = std::pow(ratio, v[kN]);
      const double e = std::exp(-q);
      const double th = kTwoPi * v[kF] * t + v[kPhi];
      const double c = std::cos(th), s = std::sin(th);
      const double inner = v[kAmp] * c + v[kB];
      const auto row = static_cast<Eigen::Index>(i);
      r[row] = trace.s[i] - (v[kA0] + e * inner);
      if (!J)
        continue;
      for (std::size_t k = 0; k < free.size(); ++k) {
        double d = 0;
        switch (free[k]) {
        case kA0:
          d = 1;
          break;
        case kAmp:
          d = e * c;
          break;
        case kB:
          d = e;
          break;
        case kT2:
          d = inner * e * v[kN] * q / v[kT2];
          break;
        case kN:
          d = ratio > 0 ? -inner * e * q * std::log(ratio) : 0.0;
          break;
        case kF:
          d = -e * v[kAmp] * s * kTwoPi * t;
          break;
        case kPhi:
          d = -e * v[kAmp] * s;
          break;
        }
        (*J)(row, static_cast<Eigen::Index>(k)) = -d;
      }
    }
  };
  prob.feasible = [&](const Eigen::VectorXd &x) {
    const auto v = expand(x);
    return v[kT2] > 0 && v[kN] >= 1 && std::isfinite(v[kT2]);
  };

  Eigen::VectorXd x0(static_cast<Eigen::Index>(free.size()));
  for (std::size_t k = 0; k < free.size(); ++k)
    x0[static_cast<Eigen::Index>(k)] = base[static_cast<std::size_t>(free[k])];

  LsqOptions lo;
  lo.max_iterations = opts.max_iterations;
  const LsqResult res = levenberg_marquardt(prob, x0, lo);
  if (!res.converged)
    throw ConvergenceError("fit_signal did not converge ("
                               + res.message + ")",
                           std::sqrt(res.cost));

  const Covariance cov = residual_covariance(res.jacobian, res.cost);
  SignalFit fit;
  fit.model = from_array(expand(res.x));
  std::array<double, kCount> sig{};
  for (std::size_t k = 0; k < free.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    sig[static_cast<std::size_t>(free[k])] =
        std::sqrt(std::max(0.0, cov.matrix(ki, ki)));
    fit.parameters.push_back(kNames[free[k]]);
  }
  fit.sigma = from_array(sig);
  fit.covariance = cov.matrix;
  fit.rss = res.cost;
  fit.iterations = res.iterations;
  return fit;
}

SignalModel initial_guess(const TimeSeries &trace, double t2_guess) {
  const Spectrum sp = psd(trace, 8);
  SignalModel m;
  m.f = peak_frequency(sp);
  const auto [lo, hi] = std::minmax_element(trace.s.begin(), trace.s.end());
  m.a = (*lo + *hi) / 2;
  m.A = (*hi - *lo) / 2;
  m.B = 0;
  m.T2 = t2_guess;
  m.n = 2;
  double mean = 0;
  for (double v: trace.s)
    mean += v;
  mean /= static_cast<double>(trace.s.size());
  double c = 0, s = 0;
  for (std::size_t i = 0; i < trace.t.size(); ++i) {
    const double th = kTwoPi * m.f * trace.t[i];
    c += (trace.s[i] - mean) * std::cos(th);
    s += (trace.s[i] - mean) * std::sin(th);
  }
  m.phi = std::atan2(-s, c);
  return m;
}

double fwhm_resolution(double t2, FwhmMode mode) {
  if (!(t2 > 0))
    throw InputError("fwhm_resolution: T2 must be > 0");
  const double td = 2 * std::sqrt(std::log(2.0)) / (std::numbers::pi * t2);
  if (mode == FwhmMode::time_domain)
    return td;

  // Noiseless n = 2 trace; every scale is tied to T2 so the result is exactly
  // proportional to 1/T2.
  const double f0 = 10 / t2;
  const double dt = 1 / (8 * f0);
  const std::size_t n = 320;
  SignalModel model;
  model.a = 0;
  model.A = 1;
  model.T2 = t2;
  model.n = 2;
  MultiResonanceSpec spec;
  spec.couplings = { f0 };
  spec.evolution_times = uniform_times(n, dt);
  const Spectrum sp = psd(synthesize_trace(spec, model), 16);

  std::size_t peak = 1;
  for (std::size_t k = 1; k < sp.psd.size(); ++k)
    if (sp.psd[k] > sp.psd[peak])
      peak = k;
  const double width = 3 * td;
  std::vector<std::size_t> bins;
  for (std::size_t k = 1; k < sp.f.size(); ++k)
    if (std::abs(sp.f[k] - sp.f[peak]) <= width)
      bins.push_back(k);

  LsqProblem prob;
  prob.eval = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r,
                  Eigen::MatrixXd *J) {
    r.resize(static_cast<Eigen::Index>(bins.size()));
    if (J)
      J->resize(static_cast<Eigen::Index>(bins.size()), 3);
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const double d = sp.f[bins[i]] - x[1];
      const double g = std::exp(-d * d / (2 * x[2] * x[2]));
      const auto row = static_cast<Eigen::Index>(i);
      r[row] = sp.psd[bins[i]] - x[0] * g;
      if (J) {
        (*J)(row, 0) = -g;
        (*J)(row, 1) = -x[0] * g * d / (x[2] * x[2]);
        (*J)(row, 2) = -x[0] * g * d * d / (x[2] * x[2] * x[2]);
      }
    }
  };
  const Eigen::Vector3d x0(sp.psd[peak], sp.f[peak],
                           td / (2 * std::sqrt(2 * std::log(2.0))));
  const LsqResult res = levenberg_marquardt(prob, x0, {});
  return 2 * std::sqrt(2 * std::log(2.0)) * std::abs(res.x[2]);
}

namespace {

void write_columns(const std::string &path, const char *header,
                   const std::vector<double> &x, const std::vector<double> &y) {
  std::ofstream f(path);
  if (!f)
    throw InputError("cannot write '" + path + "'");
  f << header << '\n';
  char buf[80];
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", x[i], y[i]);
    f << buf;
  }
}

void read_columns(const std::string &path, std::vector<double> &x,
                  std::vector<double> &y) {
  std::ifstream f(path);
  if (!f)
    throw InputError("cannot read '" + path + "'");
  std::string line;
  bool header = true;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#')
      continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '\t', ' ');
    std::istringstream is(line);
    double a, b;
    if (!(is >> a >> b)) {
      if (header) {
        header = false;
        continue;
      }
      throw InputError(path + ":" + std::to_string(lineno)
                       + ": expected two numbers");
    }
    header = false;
    x.push_back(a);
    y.push_back(b);
  }
}

} // namespace

void write_trace(const std::string &path, const TimeSeries &trace) {
  write_columns(path, "t,S", trace.t, trace.s);
}

TimeSeries read_trace(const std::string &path) {
  TimeSeries ts;
  read_columns(path, ts.t, ts.s);
  return ts;
}

void write_spectrum(const std::string &path, const Spectrum &spectrum) {
  write_columns(path, "f,PSD", spectrum.f, spectrum.psd);
}

Spectrum read_spectrum(const std::string &path) {
  Spectrum sp;
  read_columns(path, sp.f, sp.psd);
  return sp;
}

} // namespace spinmap
