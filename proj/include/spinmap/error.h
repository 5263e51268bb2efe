//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_ERROR_H_
#define SPINMAP_ERROR_H_

#include <stdexcept>
#include <string>

namespace spinmap {

// Malformed input files, unknown labels, violated preconditions.
class InputError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DegenerateGeometryError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Every search branch died while placing a spin.
class ExhaustionError: public std::runtime_error {
public:
  ExhaustionError(const std::string &msg, std::string spin)
      : std::runtime_error(msg), spin_(std::move(spin)) { }

  const std::string &spin() const { return spin_; }

private:
  std::string spin_;
};

class ConvergenceError: public std::runtime_error {
public:
  ConvergenceError(const std::string &msg, double residual_norm)
      : std::runtime_error(msg), residual_norm_(residual_norm) { }

  double residual_norm() const { return residual_norm_; }

private:
  double residual_norm_;
};

// Eigenstate labelling failed (overlap with every basis state below 0.5).
class DegeneracyError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace spinmap

#endif // SPINMAP_ERROR_H_
