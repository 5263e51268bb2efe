//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include "spinmap/io.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spinmap/error.h"

#ifndef SPINMAP_DATA_DIR_DEFAULT
#define SPINMAP_DATA_DIR_DEFAULT "data"
#endif

namespace spinmap {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string &line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep))
    out.push_back(trim(cur));
  if (!line.empty() && line.back() == sep)
    out.emplace_back();
  return out;
}

std::string read_file(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw InputError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw InputError("cannot write '" + path + "'");
  f << text;
  if (!f)
    throw InputError("write to '" + path + "' failed");
}

bool ends_with(const std::string &s, std::string_view suffix) {
  return s.size() >= suffix.size()
         && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// "key: value" from a "# key: value" comment line.
bool comment_field(const std::string &line, std::string &key,
                   std::string &value) {
  if (line.empty() || line[0] != '#')
    return false;
  const auto colon = line.find(':');
  if (colon == std::string::npos)
    return false;
  key = trim(std::string_view(line).substr(1, colon - 1));
  value = trim(std::string_view(line).substr(colon + 1));
  return true;
}

double require_value(const std::string &cell, const std::string &where) {
  const auto v = parse_cell(cell);
  if (!v || v->weak)
    throw InputError(where + ": expected a number, got '" + cell + "'");
  return v->value;
}

// Shortest fixed-point rendering of value(sigma) with sigma in units of the
// last digit.
std::string format_cell(const CouplingEntry &e) {
  if (e.weak_upper_bound)
    return "<1";
  char buf[64];
  if (e.sigma_hz <= 0) {
    std::snprintf(buf, sizeof buf, "%.17g", e.frequency_hz);
    return buf;
  }
  for (int d = 0; d <= 9; ++d) {
    const double scale = std::pow(10.0, d);
    const double s = e.sigma_hz * scale;
    const double v = e.frequency_hz * scale;
    if (std::abs(s - std::round(s)) < 1e-6 && std::abs(v - std::round(v)) < 1e-6
        && std::round(s) >= 1) {
      std::snprintf(buf, sizeof buf, "%.*f(%.0f)", d, e.frequency_hz,
                    std::round(s));
      return buf;
    }
  }
  std::snprintf(buf, sizeof buf, "%.17g", e.frequency_hz);
  return buf;
}

} // namespace

std::optional<ParsedValue> parse_cell(std::string_view cell) {
  const std::string c = trim(cell);
  if (c.empty() || c == "-")
    return std::nullopt;
  ParsedValue pv;
  if (c == "<1") {
    pv.value = 1;
    pv.weak = true;
    return pv;
  }
  static const std::regex re(R"(^([+-]?)(\d+)(?:\.(\d*))?(?:\((\d+)\))?$)");
  std::smatch m;
  if (!std::regex_match(c, m, re)) {
    // Plain numbers in any other notation, e.g. exponents.
    double v = 0;
    const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
    if (res.ec != std::errc() || res.ptr != c.data() + c.size())
      throw InputError("cannot parse cell '" + c + "'");
    pv.value = v;
    return pv;
  }
  const std::string num = m[1].str() + m[2].str()
                          + (m[3].matched ? "." + m[3].str() : "");
  pv.value = std::stod(num);
  if (m[4].matched) {
    const int decimals = m[3].matched ? static_cast<int>(m[3].length()) : 0;
    pv.sigma = std::stod(m[4].str()) * std::pow(10.0, -decimals);
  }
  return pv;
}

namespace {

CouplingTable table_from_csv(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw InputError("cannot read '" + path + "'");
  std::string line, key, value;
  std::optional<std::string> units;
  std::optional<MsProjection> projection;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (trim(line).empty())
      continue;
    if (line[0] == '#') {
      if (comment_field(line, key, value)) {
        if (key == "units")
          units = value;
        else if (key == "projection")
          projection = projection_from_string(value);
      }
      continue;
    }
    auto cells = split(line);
    if (header.empty()) {
      if (cells.empty() || cells[0] != "spin")
        throw InputError(path + ":" + std::to_string(lineno)
                         + ": header row must start with 'spin'");
      header = std::move(cells);
      continue;
    }
    if (cells.size() != header.size())
      throw InputError(path + ":" + std::to_string(lineno) + ": expected "
                       + std::to_string(header.size()) + " cells");
    rows.push_back(std::move(cells));
  }
  if (!units)
    throw InputError(path + ": missing '# units:' header");
  if (*units != "Hz")
    throw InputError(path + ": units must be Hz, got '" + *units + "'");
  if (!projection)
    throw InputError(path + ": missing '# projection:' header");

  std::vector<std::string> spins;
  if (!header.empty())
    spins.assign(header.begin() + 1, header.end());
  CouplingTable t(spins, *projection);

  std::map<std::pair<std::size_t, std::size_t>, std::string> seen;
  std::vector<std::string> conflicts;
  for (const auto &row: rows) {
    const auto i = t.index_of(row[0]);
    if (!i)
      throw InputError(path + ": unknown spin label '" + row[0] + "'");
    for (std::size_t k = 1; k < row.size(); ++k) {
      const std::size_t j = k - 1;
      const auto v = parse_cell(row[k]);
      if (!v)
        continue;
      if (*i == j)
        throw InputError(path + ": diagonal cell for '" + row[0] + "'");
      const auto key = std::minmax(*i, j);
      auto [it, inserted] = seen.emplace(key, row[k]);
      if (!inserted) {
        if (it->second != row[k])
          conflicts.push_back(spins[key.first] + "-" + spins[key.second] + " ("
                              + it->second + " vs " + row[k] + ")");
        continue;
      }
      CouplingEntry e;
      e.frequency_hz = v->value;
      e.sigma_hz = v->sigma;
      e.weak_upper_bound = v->weak;
      e.ms_projection = *projection;
      t.set(*i, j, e);
    }
  }
  if (!conflicts.empty()) {
    std::string msg = path + ": conflicting cells:";
    for (const auto &c: conflicts)
      msg += " " + c;
    throw InputError(msg);
  }
  return t;
}

CouplingTable table_from_json(const std::string &path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception &e) {
    throw InputError(path + ": " + e.what());
  }
  try {
    if (j.at("units").get<std::string>() != "Hz")
      throw InputError(path + ": units must be Hz");
    const auto projection =
        projection_from_string(j.at("projection").get<std::string>());
    CouplingTable t(j.at("spins").get<std::vector<std::string>>(), projection);
    std::map<std::pair<std::size_t, std::size_t>, std::string> seen;
    for (const auto &e: j.value("entries", json::array())) {
      const auto a = e.at(0).get<std::string>();
      const auto b = e.at(1).get<std::string>();
      const auto cell = e.at(2).is_string() ? e.at(2).get<std::string>()
                                            : e.at(2).dump();
      const auto ia = t.index_of(a), ib = t.index_of(b);
      if (!ia || !ib)
        throw InputError(path + ": unknown spin label in entry " + e.dump());
      const auto v = parse_cell(cell);
      if (!v)
        continue;
      auto [it, inserted] = seen.emplace(std::minmax(*ia, *ib), cell);
      if (!inserted) {
        if (it->second != cell)
          throw InputError(path + ": conflicting cells " + a + "-" + b + " ("
                           + it->second + " vs " + cell + ")");
        continue;
      }
      CouplingEntry ce;
      ce.frequency_hz = v->value;
      ce.sigma_hz = v->sigma;
      ce.weak_upper_bound = v->weak;
      ce.ms_projection = projection;
      t.set(*ia, *ib, ce);
    }
    return t;
  } catch (const json::exception &e) {
    throw InputError(path + ": " + e.what());
  }
}

} // namespace

CouplingTable load_coupling_table(const std::string &path,
                                  std::optional<TableFormat> format) {
  const TableFormat fmt =
      format.value_or(ends_with(path, ".json") ? TableFormat::json
                                               : TableFormat::csv);
  return fmt == TableFormat::json ? table_from_json(path)
                                  : table_from_csv(path);
}

void save_coupling_table(const std::string &path, const CouplingTable &t) {
  const auto &spins = t.spins();
  if (ends_with(path, ".json")) {
    json j;
    j["units"] = "Hz";
    j["projection"] = to_string(t.projection());
    j["spins"] = spins;
    json entries = json::array();
    for (const auto &p: t.pairs())
      entries.push_back({ spins[p.i], spins[p.j], format_cell(p.entry) });
    j["entries"] = std::move(entries);
    write_file(path, j.dump(1) + "\n");
    return;
  }
  std::string out = "# units: Hz\n# projection: ";
  out += to_string(t.projection());
  out += "\nspin";
  for (const auto &s: spins)
    out += "," + s;
  out += '\n';
  for (std::size_t i = 0; i < spins.size(); ++i) {
    out += spins[i];
    for (std::size_t j = 0; j < spins.size(); ++j) {
      const CouplingEntry *e = i == j ? nullptr : t.find(i, j);
      out += ',';
      out += e ? format_cell(*e) : "-";
    }
    out += '\n';
  }
  write_file(path, out);
}

void mark_single_projection(CouplingTable &averaged,
                            const CouplingTable &minus1,
                            const CouplingTable &plus1) {
  const auto &spins = averaged.spins();
  for (const auto &p: averaged.pairs()) {
    const std::string &a = spins[p.i], &b = spins[p.j];
    const auto lookup = [&](const CouplingTable &t) -> const CouplingEntry * {
      if (!t.index_of(a) || !t.index_of(b))
        return nullptr;
      return t.find(a, b);
    };
    const CouplingEntry *m = lookup(minus1), *q = lookup(plus1);
    const bool single = (m == nullptr) != (q == nullptr)
                        || (m && q && m->weak_upper_bound != q->weak_upper_bound);
    if (single != p.entry.single_projection_only) {
      CouplingEntry e = p.entry;
      e.single_projection_only = single;
      averaged.set(p.i, p.j, e);
    }
  }
}

std::vector<SpinRecord> load_spin_records(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw InputError("cannot read '" + path + "'");
  std::string line, key, value;
  std::optional<std::string> units;
  double omega0 = kDefaultOmega0kHz;
  std::vector<std::string> header;
  std::vector<SpinRecord> out;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (trim(line).empty())
      continue;
    if (line[0] == '#') {
      if (comment_field(line, key, value)) {
        if (key == "units")
          units = value;
        else if (key == "omega_0")
          omega0 = require_value(value, path + ": omega_0");
      }
      continue;
    }
    const auto cells = split(line);
    if (header.empty()) {
      header = cells;
      const std::vector<std::string> want{ "id", "omega_minus1", "omega_plus1" };
      if (header.size() < 3 || !std::equal(want.begin(), want.end(),
                                           header.begin()))
        throw InputError(path + ": header must start with "
                                "id,omega_minus1,omega_plus1");
      continue;
    }
    if (cells.size() != header.size())
      throw InputError(path + ":" + std::to_string(lineno) + ": expected "
                       + std::to_string(header.size()) + " cells");
    const std::string where = path + ":" + std::to_string(lineno);
    SpinRecord r = SpinRecord::from_frequencies(
        cells[0], require_value(cells[1], where),
        require_value(cells[2], where), omega0);
    // Tabulated hyperfine values take precedence over the derived ones.
    for (std::size_t k = 3; k < header.size(); ++k) {
      const auto v = parse_cell(cells[k]);
      if (!v)
        continue;
      if (header[k] == "a_par")
        r.a_par = v->value;
      else if (header[k] == "a_perp")
        r.a_perp = v->value;
    }
    out.push_back(std::move(r));
  }
  if (units && *units != "kHz")
    throw InputError(path + ": units must be kHz");
  return out;
}

namespace {

json vec_json(const Vec3 &v) { return json::array({ v.x(), v.y(), v.z() }); }

Vec3 json_vec(const json &j) {
  if (!j.is_array() || j.size() != 3)
    throw InputError("expected a 3-vector, got " + j.dump());
  return { j[0].get<double>(), j[1].get<double>(), j[2].get<double>() };
}

} // namespace

std::string structure_to_json(const Structure &s) {
  json j;
  j["format"] = "spinmap-structure";
  j["version"] = 1;
  j["ids"] = s.ids;
  json coords = json::array();
  for (const auto &c: s.coordinates)
    coords.push_back(vec_json(c));
  j["coordinates"] = std::move(coords);
  j["gauge"] = { { "origin_spin", s.gauge.origin_spin },
                 { "plane_spin", s.gauge.plane_spin },
                 { "rotation_deg", s.gauge.rotation_deg } };
  j["xi"] = s.xi;
  if (s.uncertainties) {
    json u = json::array();
    for (const auto &c: *s.uncertainties)
      u.push_back(vec_json(c));
    j["uncertainties"] = std::move(u);
  }
  return j.dump(1) + "\n";
}

Structure structure_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "spinmap-structure")
      throw InputError("not a spinmap-structure document");
    if (j.value("version", 0) != 1)
      throw InputError("unsupported structure version");
    Structure s;
    s.ids = j.at("ids").get<std::vector<std::string>>();
    for (const auto &c: j.at("coordinates"))
      s.coordinates.push_back(json_vec(c));
    if (s.coordinates.size() != s.ids.size())
      throw InputError("structure has " + std::to_string(s.ids.size())
                       + " ids but " + std::to_string(s.coordinates.size())
                       + " coordinates");
    if (j.contains("uncertainties")) {
      std::vector<Vec3> u;
      for (const auto &c: j["uncertainties"])
        u.push_back(json_vec(c));
      if (u.size() != s.ids.size())
        throw InputError("uncertainty count does not match ids");
      s.uncertainties = std::move(u);
    }
    if (j.contains("gauge")) {
      const auto &g = j["gauge"];
      s.gauge.origin_spin = g.value("origin_spin", "");
      s.gauge.plane_spin = g.value("plane_spin", "");
      s.gauge.rotation_deg = g.value("rotation_deg", 0.0);
    }
    s.xi = j.value("xi", 0.0);
    return s;
  } catch (const json::exception &e) {
    throw InputError(std::string("structure json: ") + e.what());
  }
}

std::string structure_to_xyz(const Structure &s, const std::string &comment) {
  std::string out = std::to_string(s.size()) + "\n";
  std::string c = comment;
  std::replace(c.begin(), c.end(), '\n', ' ');
  out += c + "\n";
  char buf[160];
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec3 &p = s.coordinates[i];
    const char *element =
        nucleus_of(s.ids[i]) == Nucleus::nitrogen14 ? "N" : "C";
    std::snprintf(buf, sizeof buf, "%s %.17g %.17g %.17g %s\n", element,
                  p.x(), p.y(), p.z(), s.ids[i].c_str());
    out += buf;
  }
  return out;
}

namespace {

Structure structure_from_xyz(const std::string &text) {
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  if (!std::getline(is, line) || !(std::istringstream(line) >> n))
    throw InputError("xyz: missing atom count");
  std::getline(is, line);
  Structure s;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line))
      throw InputError("xyz: expected " + std::to_string(n) + " atoms");
    std::istringstream ls(line);
    std::string element, id;
    double x, y, z;
    if (!(ls >> element >> x >> y >> z))
      throw InputError("xyz: bad atom line '" + line + "'");
    if (!(ls >> id))
      id = element + std::to_string(i + 1);
    s.ids.push_back(id);
    s.coordinates.emplace_back(x, y, z);
  }
  return s;
}

} // namespace

void save_structure(const std::string &path, const Structure &s,
                    std::optional<StructureFormat> format) {
  const StructureFormat fmt =
      format.value_or(ends_with(path, ".xyz") ? StructureFormat::xyz
                                              : StructureFormat::json);
  if (fmt == StructureFormat::xyz) {
    char comment[64];
    std::snprintf(comment, sizeof comment, "xi=%.17g Hz^2", s.xi);
    write_file(path, structure_to_xyz(s, comment));
  } else {
    write_file(path, structure_to_json(s));
  }
}

Structure load_structure(const std::string &path) {
  const std::string text = read_file(path);
  if (ends_with(path, ".xyz"))
    return structure_from_xyz(text);
  try {
    return structure_from_json(text);
  } catch (const InputError &e) {
    throw InputError(path + ": " + e.what());
  }
}

namespace {

bool parse_bool(const std::string &v, const std::string &key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on")
    return true;
  if (v == "false" || v == "0" || v == "no" || v == "off")
    return false;
  throw InputError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

double parse_double(const std::string &v, const std::string &key) {
  double d = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), d);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InputError("config: '" + key + "' expects a number, got '" + v
                     + "'");
  return d;
}

std::uint64_t parse_uint(const std::string &v, const std::string &key) {
  std::uint64_t u = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), u);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InputError("config: '" + key + "' expects a non-negative integer, "
                     "got '" + v + "'");
  return u;
}

std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

} // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::istringstream is{ std::string(text) };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    if (trim(line).empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError("config line " + std::to_string(lineno)
                       + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string v = trim(std::string_view(line).substr(eq + 1));
    auto &s = cfg.solver;
    if (key == "mode")
      s.mode = solve_mode_from_string(v);
    else if (key == "n_l")
      s.n_l = static_cast<int>(parse_uint(v, key));
    else if (key == "a0")
      s.constants.a0 = parse_double(v, key);
    else if (key == "tol")
      s.tol = parse_double(v, key);
    else if (key == "tol_single")
      s.tol_single = parse_double(v, key);
    else if (key == "single_tolerance_for_weak")
      s.single_tolerance_for_weak = parse_bool(v, key);
    else if (key == "weak_value")
      s.weak_value = parse_double(v, key);
    else if (key == "cutoff")
      s.cutoff = parse_uint(v, key);
    else if (key == "n_tilde")
      s.n_tilde = parse_double(v, key);
    else if (key == "order") {
      s.order.clear();
      for (auto &id: split(v))
        if (!id.empty())
          s.order.push_back(id);
    } else if (key == "workers")
      s.workers = static_cast<unsigned>(parse_uint(v, key));
    else if (key == "timeout_s")
      s.timeout_s = parse_double(v, key);
    else if (key == "checkpoint")
      s.checkpoint_path = v;
    else if (key == "origin_spin")
      cfg.gauge.origin_spin = v;
    else if (key == "plane_spin")
      cfg.gauge.plane_spin = v;
    else if (key == "pre_rotation_deg")
      cfg.gauge.pre_rotation_deg = parse_double(v, key);
    else if (key == "bz")
      cfg.bz_gauss = parse_double(v, key);
    else if (key == "bperp_max")
      cfg.bperp_max_gauss = parse_double(v, key);
    else if (key == "seed")
      cfg.seed = parse_uint(v, key);
    else
      throw InputError("config line " + std::to_string(lineno)
                       + ": unknown key '" + key + "'");
  }
  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string &path) {
  try {
    return parse_run_config(read_file(path));
  } catch (const InputError &e) {
    throw InputError(path + ": " + e.what());
  }
}

std::string format_run_config(const RunConfig &cfg) {
  const auto &s = cfg.solver;
  std::ostringstream os;
  os << "mode = " << to_string(s.mode) << '\n'
     << "n_l = " << s.n_l << '\n'
     << "a0 = " << fmt_double(s.constants.a0) << '\n'
     << "tol = " << fmt_double(s.tol) << '\n'
     << "tol_single = " << fmt_double(s.tol_single) << '\n'
     << "single_tolerance_for_weak = "
     << (s.single_tolerance_for_weak ? "true" : "false") << '\n'
     << "weak_value = " << fmt_double(s.weak_value) << '\n'
     << "cutoff = " << s.cutoff << '\n'
     << "n_tilde = " << fmt_double(s.n_tilde) << '\n';
  if (!s.order.empty()) {
    os << "order = ";
    for (std::size_t i = 0; i < s.order.size(); ++i)
      os << (i ? "," : "") << s.order[i];
    os << '\n';
  }
  os << "workers = " << s.workers << '\n';
  if (s.timeout_s)
    os << "timeout_s = " << fmt_double(*s.timeout_s) << '\n';
  if (!s.checkpoint_path.empty())
    os << "checkpoint = " << s.checkpoint_path << '\n';
  os << "origin_spin = " << cfg.gauge.origin_spin << '\n'
     << "plane_spin = " << cfg.gauge.plane_spin << '\n'
     << "pre_rotation_deg = " << fmt_double(cfg.gauge.pre_rotation_deg) << '\n'
     << "bz = " << fmt_double(cfg.bz_gauss) << '\n'
     << "bperp_max = " << fmt_double(cfg.bperp_max_gauss) << '\n'
     << "seed = " << cfg.seed << '\n';
  return os.str();
}

void validate_run_config(const RunConfig &cfg) {
  const auto &s = cfg.solver;
  if (!(s.tol > 0) || !(s.tol_single > 0))
    throw InputError("config: tolerances must be > 0");
  if (s.cutoff < 1)
    throw InputError("config: cutoff must be >= 1");
  if (s.n_l < 1)
    throw InputError("config: n_l must be >= 1");
  if (!(s.constants.a0 > 0))
    throw InputError("config: a0 must be > 0");
  if (!(s.n_tilde > 0))
    throw InputError("config: n_tilde must be > 0");
  if (!(s.weak_value >= 0))
    throw InputError("config: weak_value must be >= 0");
  if (s.workers < 1)
    throw InputError("config: workers must be >= 1");
  if (s.timeout_s && !(*s.timeout_s > 0))
    throw InputError("config: timeout_s must be > 0");
  if (!(cfg.bz_gauss > 0))
    throw InputError("config: bz must be > 0");
  if (!(cfg.bperp_max_gauss >= 0))
    throw InputError("config: bperp_max must be >= 0");
}

std::string data_directory() {
  if (const char *env = std::getenv("SPINMAP_DATA_DIR"); env && *env)
    return env;
  return SPINMAP_DATA_DIR_DEFAULT;
}

unsigned worker_count(unsigned fallback) {
  if (const char *env = std::getenv("SPINMAP_WORKERS"); env && *env) {
    unsigned n = 0;
    const std::string_view v(env);
    const auto r = std::from_chars(v.data(), v.data() + v.size(), n);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || n == 0)
      throw InputError("SPINMAP_WORKERS must be a positive integer");
    return n;
  }
  return fallback;
}

Dataset load_dataset(const std::string &dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  Dataset d;
  d.spins = load_spin_records((root / "spins.csv").string());
  d.minus1 = load_coupling_table((root / "couplings_minus1.csv").string());
  d.plus1 = load_coupling_table((root / "couplings_plus1.csv").string());
  d.averaged = load_coupling_table((root / "couplings_averaged.csv").string());
  mark_single_projection(d.averaged, d.minus1, d.plus1);
  const fs::path refs = root / "reference";
  if (fs::is_directory(refs)) {
    std::vector<fs::path> files;
    for (const auto &e: fs::directory_iterator(refs))
      if (e.path().extension() == ".json")
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto &p: files)
      d.references.emplace(p.stem().string(), load_structure(p.string()));
  }
  return d;
}

std::vector<ValidationIssue> validate_dataset(const Dataset &d,
                                              double mean_tolerance_hz) {
  std::vector<ValidationIssue> issues;
  const auto &spins = d.averaged.spins();
  for (const auto &p: d.averaged.pairs()) {
    const std::string &a = spins[p.i], &b = spins[p.j];
    if (p.entry.weak_upper_bound)
      continue;
    const CouplingEntry *m = d.minus1.index_of(a) && d.minus1.index_of(b)
                                 ? d.minus1.find(a, b)
                                 : nullptr;
    const CouplingEntry *q = d.plus1.index_of(a) && d.plus1.index_of(b)
                                 ? d.plus1.find(a, b)
                                 : nullptr;
    if (!m || !q || m->weak_upper_bound || q->weak_upper_bound)
      continue;
    const double mean = (m->frequency_hz + q->frequency_hz) / 2;
    if (std::abs(mean - p.entry.frequency_hz) > mean_tolerance_hz)
      issues.push_back({ a + "-" + b,
                         "averaged " + fmt_double(p.entry.frequency_hz)
                             + " Hz differs from the +-1 mean "
                             + fmt_double(mean) + " Hz" });
  }
  for (const auto &[name, s]: d.references) {
    for (const auto &id: spins) {
      if (nucleus_of(id) == Nucleus::nitrogen14)
        continue;
      if (!s.index_of(id))
        issues.push_back({ name, "reference structure lacks spin " + id });
    }
  }
  for (const auto &r: d.spins)
    if (!d.averaged.index_of(r.id))
      issues.push_back({ "spins", "spin " + r.id + " has no coupling column" });
  return issues;
}

} // namespace spinmap
