//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_TESTS_TESTING_H_
#define SPINMAP_TESTS_TESTING_H_

#include <random>
#include <string>
#include <vector>

#include "spinmap/io.h"
#include "spinmap/lattice.h"
#include "spinmap/spin_model.h"

namespace spinmap::testing {

inline std::string data_dir() { return SPINMAP_TEST_DATA_DIR; }

inline const Dataset &dataset() {
  static const Dataset d = load_dataset(data_dir());
  return d;
}

inline Structure without_nitrogen(const Structure &s) {
  Structure out;
  out.gauge = s.gauge;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (nucleus_of(s.ids[i]) == Nucleus::nitrogen14)
      continue;
    out.ids.push_back(s.ids[i]);
    out.coordinates.push_back(s.coordinates[i]);
    if (s.uncertainties) {
      if (!out.uncertainties)
        out.uncertainties.emplace();
      out.uncertainties->push_back((*s.uncertainties)[i]);
    }
  }
  return out;
}

// Reference diamond solution, carbons only, on exact lattice sites.
inline Structure reference_carbons() {
  return snap_to_lattice(without_nitrogen(dataset().references.at("diamond")),
                         PhysicalConstants{}.a0);
}

inline CouplingTable carbon_table() {
  const auto &t = dataset().averaged;
  std::vector<std::string> ids;
  for (const auto &id: t.spins())
    if (nucleus_of(id) == Nucleus::carbon13)
      ids.push_back(id);
  return t.subset(ids);
}

// Random distinct diamond sites within `radius` crystal units of the origin,
// the first one at the origin.
inline Structure random_lattice_cluster(std::mt19937_64 &rng, std::size_t m,
                                        int radius, double min_sep = 1.5,
                                        double max_dist = 8.0) {
  const double a0 = PhysicalConstants{}.a0;
  std::uniform_int_distribution<int> u(-radius, radius);
  Structure s;
  s.ids.push_back("C1");
  s.coordinates.push_back(Vec3::Zero());
  while (s.size() < m) {
    const Crystal c{ u(rng), u(rng), u(rng) };
    if (sublattice_of(c) < 0)
      continue;
    const Vec3 p = crystal_to_lab(c, a0);
    bool ok = true, near = false;
    for (const Vec3 &q: s.coordinates) {
      const double d = (p - q).norm();
      ok = ok && d > min_sep;
      near = near || d < max_dist;
    }
    if (!ok || !near)
      continue;
    s.ids.push_back("C" + std::to_string(s.size() + 1));
    s.coordinates.push_back(p);
  }
  return s;
}

} // namespace spinmap::testing

#endif // SPINMAP_TESTS_TESTING_H_
