//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_IO_H_
#define SPINMAP_IO_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spinmap/refine.h"
#include "spinmap/solver.h"
#include "spinmap/spin_model.h"

namespace spinmap {

struct ParsedValue {
  double value = 0;
  double sigma = 0;
  bool weak = false; // "<1"
};

/**
 * @brief Parse a table cell: "61.90(9)" -> 61.90 +- 0.09, "12(1)" -> 12 +- 1,
 * "<1" -> weak, plain numbers with zero sigma. "-" and "" give nullopt.
 *
 * @throws InputError for anything else.
 */
std::optional<ParsedValue> parse_cell(std::string_view cell);

enum class TableFormat { csv, json };

/**
 * @brief Load a coupling table.
 *
 * csv: "# units: Hz" and "# projection: <p>" comment lines, a header row
 * "spin,<id>..." and one row per spin. json: {"units": "Hz", "projection",
 * "spins": [...], "entries": [[a, b, cell], ...]}.
 * @throws InputError on missing headers, unknown labels or conflicting
 * (i,j) / (j,i) cells.
 */
CouplingTable load_coupling_table(const std::string &path,
                                  std::optional<TableFormat> format = {});
void save_coupling_table(const std::string &path, const CouplingTable &t);

/**
 * @brief Flag entries of `averaged` measured in only one of the m_s = +-1
 * tables (absent from the other, or numeric in one and "<1" in the other).
 */
void mark_single_projection(CouplingTable &averaged,
                            const CouplingTable &minus1,
                            const CouplingTable &plus1);

std::vector<SpinRecord> load_spin_records(const std::string &path);

enum class StructureFormat { json, xyz };

void save_structure(const std::string &path, const Structure &s,
                    std::optional<StructureFormat> format = {});
Structure load_structure(const std::string &path);
std::string structure_to_json(const Structure &s);
Structure structure_from_json(std::string_view text);
std::string structure_to_xyz(const Structure &s, const std::string &comment);

struct RunConfig {
  SolverParams solver;
  GaugeSpec gauge{"C1", "C2", -49.1};
  double bz_gauss = kDefaultBzGauss;
  double bperp_max_gauss = 1.0;
  std::uint64_t seed = 1;
};

/**
 * @brief Flat "key = value" file; '#' starts a comment. Keys: mode, n_l, a0,
 * tol, tol_single, single_tolerance_for_weak, weak_value, cutoff, n_tilde,
 * order (comma separated), workers, timeout_s, checkpoint, origin_spin,
 * plane_spin, pre_rotation_deg, bz, bperp_max, seed.
 *
 * @throws InputError for unknown keys or invalid values.
 */
RunConfig load_run_config(const std::string &path);
RunConfig parse_run_config(std::string_view text);
std::string format_run_config(const RunConfig &cfg);
void validate_run_config(const RunConfig &cfg);

struct Dataset {
  std::vector<SpinRecord> spins;
  CouplingTable minus1, plus1, averaged;
  std::map<std::string, Structure> references;
};

// Directory from SPINMAP_DATA_DIR, else the bundled data directory.
std::string data_directory();
// Worker count from SPINMAP_WORKERS, else fallback.
unsigned worker_count(unsigned fallback = 1);

/**
 * @brief Load the bundled dataset and mark single-projection entries of the
 * averaged table.
 */
Dataset load_dataset(const std::string &dir = data_directory());

struct ValidationIssue {
  std::string where;
  std::string message;
};

/**
 * @brief Cross-checks: averaged entries equal the mean of the +-1 entries
 * within mean_tolerance_hz where both are numeric, and every reference
 * structure covers the averaged table's carbons.
 */
std::vector<ValidationIssue> validate_dataset(const Dataset &d,
                                              double mean_tolerance_hz = 0.06);

} // namespace spinmap

#endif // SPINMAP_IO_H_
