//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "spinmap/corrections.h"
#include "spinmap/error.h"
#include "spinmap/io.h"
#include "spinmap/lattice.h"
#include "spinmap/refine.h"
#include "spinmap/signal.h"
#include "spinmap/solver.h"

namespace fs = std::filesystem;
using namespace spinmap;

namespace {

enum ExitCode { kOk = 0, kInput = 2, kInfeasible = 3, kNoConvergence = 4 };

std::ofstream open_output(const fs::path &path) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out)
    throw InputError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

// Labelled matrix with empty cells for NaN.
void write_matrix(const fs::path &path, const std::vector<std::string> &ids,
                  const Eigen::MatrixXd &m) {
  auto out = open_output(path);
  out << "spin";
  for (const auto &id: ids)
    out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out << ',';
      if (!std::isnan(m(i, j)))
        out << m(i, j);
    }
    out << '\n';
  }
}

Structure drop_nitrogen(const Structure &s) {
  Structure out = s;
  out.ids.clear();
  out.coordinates.clear();
  if (out.uncertainties)
    out.uncertainties->clear();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (nucleus_of(s.ids[i]) == Nucleus::nitrogen14)
      continue;
    out.ids.push_back(s.ids[i]);
    out.coordinates.push_back(s.coordinates[i]);
    if (s.uncertainties)
      out.uncertainties->push_back((*s.uncertainties)[i]);
  }
  return out;
}

// Input selection shared by the subcommands.
struct Inputs {
  std::string data_dir;
  std::string table;     // coupling table, default: bundled averaged table
  std::string structure; // default: bundled diamond reference
  std::string config;

  CouplingTable load_table() const {
    if (table.empty())
      return load_dataset(data_dir).averaged;
    return load_coupling_table(table);
  }
  Structure load_structure_or_reference() const {
    if (structure.empty())
      return load_dataset(data_dir).references.at("diamond");
    return load_structure(structure);
  }
  RunConfig load_config() const {
    return config.empty() ? RunConfig{} : load_run_config(config);
  }
};

void add_inputs(CLI::App *cmd, Inputs &in, bool table, bool structure) {
  cmd->add_option("--data-dir", in.data_dir, "Bundled dataset directory");
  cmd->add_option("--config", in.config, "Run configuration file")
      ->check(CLI::ExistingFile);
  if (table)
    cmd->add_option("--table", in.table, "Coupling table (csv or json)");
  if (structure)
    cmd->add_option("--structure", in.structure, "Structure (json or xyz)");
}

CouplingTable carbons_only(const CouplingTable &t) {
  std::vector<std::string> ids;
  for (const auto &id: t.spins())
    if (nucleus_of(id) == Nucleus::carbon13)
      ids.push_back(id);
  return t.subset(ids);
}

void write_residuals(const fs::path &path, const ResidualReport &r,
                     const CouplingTable &t) {
  auto out = open_output(path);
  out << "a,b,measured_hz,predicted_hz,delta_hz\n";
  for (const auto &p: r.pairs)
    out << t.spins()[p.i] << ',' << t.spins()[p.j] << ',' << p.measured << ','
        << p.predicted << ',' << p.delta << '\n';
}

struct ReconstructArgs {
  Inputs in;
  std::string out = "reconstruct";
  std::optional<std::string> mode;
  std::optional<int> n_l;
  std::optional<std::size_t> cutoff;
  std::optional<double> tol, timeout;
  std::optional<unsigned> workers;
  std::string checkpoint, resume_from;
  std::size_t keep = 10;
};

int run_reconstruct(const ReconstructArgs &a) {
  RunConfig cfg = a.in.load_config();
  SolverParams &p = cfg.solver;
  if (a.mode)
    p.mode = solve_mode_from_string(*a.mode);
  if (a.n_l)
    p.n_l = *a.n_l;
  if (a.cutoff)
    p.cutoff = *a.cutoff;
  if (a.tol)
    p.tol = *a.tol;
  if (a.timeout)
    p.timeout_s = *a.timeout;
  p.workers = a.workers ? *a.workers : worker_count(p.workers);
  if (!a.checkpoint.empty())
    p.checkpoint_path = a.checkpoint;
  validate_run_config(cfg);

  const CouplingTable table = carbons_only(a.in.load_table());
  auto progress = [](const StepLog &s) {
    std::cerr << "placed " << s.spin << " via " << s.anchor << ": "
              << s.survivors << " survivors, " << s.kept << " kept ("
              << s.seconds << " s)\n";
  };
  const SolveResult r = a.resume_from.empty()
                            ? solve(table, p, progress)
                            : resume(table, p, a.resume_from, progress);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  for (std::size_t k = 0; k < std::min(a.keep, r.structures.size()); ++k) {
    std::ostringstream name;
    name << "structure_" << std::setw(4) << std::setfill('0') << k + 1
         << ".json";
    save_structure((dir / name.str()).string(), r.structures[k]);
  }
  if (!r.structures.empty())
    save_structure((dir / "best.xyz").string(), r.structures.front());
  {
    auto out = open_output(dir / "ranking.csv");
    out << "rank,xi_hz2\n";
    for (std::size_t k = 0; k < r.configurations.size(); ++k)
      out << k + 1 << ',' << r.configurations[k].xi << '\n';
  }
  {
    auto out = open_output(dir / "steps.csv");
    out << "spin,anchor,parents,candidates,survivors,kept,dead_parents\n";
    for (const auto &s: r.steps)
      out << s.spin << ',' << s.anchor << ',' << s.parents << ','
          << s.candidates << ',' << s.survivors << ',' << s.kept << ','
          << s.dead_parents << '\n';
  }
  {
    auto out = open_output(dir / "unmeasured.csv");
    out << "a,b,predicted_hz\n";
    for (const auto &u: r.unmeasured)
      out << u.a << ',' << u.b << ',' << u.predicted_hz << '\n';
  }
  {
    auto out = open_output(dir / "unique.csv");
    out << "spin,unique\n";
    for (std::size_t i = 0; i < r.order.size(); ++i)
      out << r.order[i] << ',' << (r.unique[i] ? 1 : 0) << '\n';
  }
  std::cout << "placed " << r.placed << " of " << r.order.size()
            << " spins, " << r.configurations.size() << " configurations";
  if (!r.structures.empty())
    std::cout << ", best xi " << r.structures.front().xi << " Hz^2";
  std::cout << (r.timed_out ? " (timed out)" : "") << '\n';
  return kOk;
}

struct RefineArgs {
  Inputs in;
  std::string out = "refined.json";
  std::optional<std::string> origin, plane;
  std::optional<double> rotation;
  bool weighted = false;
};

int run_refine(const RefineArgs &a) {
  RunConfig cfg = a.in.load_config();
  GaugeSpec gauge = cfg.gauge;
  if (a.origin)
    gauge.origin_spin = *a.origin;
  if (a.plane)
    gauge.plane_spin = *a.plane;
  if (a.rotation)
    gauge.pre_rotation_deg = *a.rotation;
  const CouplingTable table = carbons_only(a.in.load_table());
  const Structure guess = drop_nitrogen(a.in.load_structure_or_reference());
  RefineOptions opts;
  opts.weighted = a.weighted;
  const RefinementResult r = refine(guess, table, gauge, opts);
  if (fs::path(a.out).has_parent_path())
    fs::create_directories(fs::path(a.out).parent_path());
  save_structure(a.out, r.structure);

  const fs::path base = fs::path(a.out).replace_extension();
  {
    auto out = open_output(base.string() + "_coordinates.csv");
    out << "spin,axis,value_a,sigma_a\n";
    for (const auto &c: r.free_coordinates)
      out << c.spin << ',' << "xyz"[c.axis] << ',' << c.value << ','
          << c.sigma << '\n';
  }
  {
    auto out = open_output(base.string() + "_delta_r.csv");
    out << "spin,delta_r_a\n";
    for (std::size_t i = 0; i < r.delta_r.size(); ++i)
      out << r.structure.ids[i] << ',' << r.delta_r[i] << '\n';
  }
  double mean = 0;
  for (double d: r.delta_r)
    mean += d / static_cast<double>(r.delta_r.size());
  std::cout << "xi " << r.initial_xi << " -> " << r.final_xi
            << " Hz^2, mean shift " << mean << " A, " << r.iterations
            << " iterations\n";
  for (const auto &f: r.flagged)
    std::cerr << "warning: no curvature for " << f << '\n';
  if (!r.converged) {
    std::cerr << "error: refinement did not converge (gradient "
              << r.gradient_norm << ")\n";
    return kNoConvergence;
  }
  return kOk;
}

struct CorrectionsArgs {
  Inputs in;
  std::string out = "corrections";
  std::string spins;
  std::optional<double> bz, bperp_max;
  int angle_steps = BoundOptions{}.angle_steps;
  int bperp_steps = BoundOptions{}.bperp_steps;
  bool exact = false;
};

int run_corrections(const CorrectionsArgs &a) {
  const RunConfig cfg = a.in.load_config();
  const std::string spins_path =
      a.spins.empty() ? (fs::path(a.in.data_dir) / "spins.csv").string()
                      : a.spins;
  const auto records = load_spin_records(spins_path);
  const Structure s = drop_nitrogen(a.in.load_structure_or_reference());
  BoundOptions opts;
  opts.angle_steps = a.angle_steps;
  opts.bperp_steps = a.bperp_steps;
  if (a.exact)
    opts.method = PredictionMethod::exact;
  const double bz = a.bz.value_or(cfg.bz_gauss);
  const double bperp = a.bperp_max.value_or(cfg.bperp_max_gauss);
  const CorrectionMatrix m = correction_matrix(records, s, bz, bperp, opts);
  const fs::path dir(a.out);
  write_matrix(dir / "max_minus1.csv", m.ids, m.minus1);
  write_matrix(dir / "max_plus1.csv", m.ids, m.plus1);
  write_matrix(dir / "max_averaged.csv", m.ids, m.averaged);
  write_matrix(dir / "mean_minus1.csv", m.ids, m.minus1_mean);
  write_matrix(dir / "mean_plus1.csv", m.ids, m.plus1_mean);
  write_matrix(dir / "mean_averaged.csv", m.ids, m.averaged_mean);
  std::cout << "max correction: m_s=-1 " << m.minus1.maxCoeff()
            << " Hz, m_s=+1 " << m.plus1.maxCoeff() << " Hz, averaged "
            << m.averaged.maxCoeff() << " Hz\n";
  return kOk;
}

struct SimulateArgs {
  std::string out = "simulate";
  std::vector<double> couplings;
  std::vector<double> probabilities;
  std::size_t samples = 1000;
  double dt = 1e-3;
  double offset = 0, amplitude = 1, pulse_error = 0, phase = 0;
  double t2 = std::numeric_limits<double>::infinity();
  double exponent = 2;
  double noise = 0;
  std::uint64_t seed = 1;
  int zero_fill = 4;
  bool fit = false;
};

int run_simulate(const SimulateArgs &a) {
  MultiResonanceSpec spec;
  spec.couplings = a.couplings;
  spec.inversion_probabilities = a.probabilities;
  spec.evolution_times = uniform_times(a.samples, a.dt);
  SignalModel m;
  m.a = a.offset;
  m.A = a.amplitude;
  m.B = a.pulse_error;
  m.T2 = a.t2;
  m.n = a.exponent;
  m.phi = a.phase;
  const TimeSeries trace = synthesize_trace(spec, m, { a.noise, a.seed });
  const Spectrum sp = psd(trace, a.zero_fill);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_trace((dir / "trace.csv").string(), trace);
  write_spectrum((dir / "psd.csv").string(), sp);
  {
    auto out = open_output(dir / "comb.csv");
    out << "frequency_hz,weight\n";
    for (const auto &l: frequency_comb(a.couplings, !a.probabilities.empty(),
                                       a.probabilities))
      out << l.frequency_hz << ',' << l.weight << '\n';
  }
  std::cout << "peak " << peak_frequency(sp) << " Hz\n";
  if (a.fit) {
    const double t2_guess =
        std::isfinite(a.t2) ? a.t2 : a.dt * static_cast<double>(a.samples);
    const SignalFit f = fit_signal(trace, initial_guess(trace, t2_guess));
    std::cout << "fit f " << f.model.f << " +- " << f.sigma.f << " Hz, T2 "
              << f.model.T2 << " +- " << f.sigma.T2 << " s\n";
  }
  return kOk;
}

struct SensorArgs {
  Inputs in;
  std::string out = "sensor.json";
  int n_l = 11;
  double tol = 1.1;
};

int run_sensor(const SensorArgs &a) {
  const RunConfig cfg = a.in.load_config();
  const CouplingTable table = a.in.load_table();
  const Structure carbons = snap_to_lattice(
      drop_nitrogen(a.in.load_structure_or_reference()), cfg.solver.constants.a0);
  SensorOptions opts;
  opts.tol = a.tol;
  const SensorPlacement sp = position_sensor(
      table, carbons, generate_diamond_lattice(a.n_l, cfg.solver.constants.a0), opts);
  Structure s = carbons;
  s.ids.push_back(opts.nitrogen_id);
  s.coordinates.push_back(sp.refined.value_or(sp.nitrogen));
  s.uncertainties.reset();
  s.xi = sp.refined ? sp.refined_xi : sp.ranked.front().xi;
  if (fs::path(a.out).has_parent_path())
    fs::create_directories(fs::path(a.out).parent_path());
  save_structure(a.out, s);
  const Vec3 &n = sp.nitrogen;
  std::cout << std::fixed << std::setprecision(3) << "nitrogen (" << n.x()
            << ", " << n.y() << ", " << n.z() << ") A, vacancy ("
            << sp.vacancy.x() << ", " << sp.vacancy.y() << ", "
            << sp.vacancy.z() << ") A, " << sp.ranked.size()
            << " candidate(s)" << (sp.unique ? ", unique" : "") << '\n';
  if (sp.refined)
    std::cout << "refined (" << sp.refined->x() << ", " << sp.refined->y()
              << ", " << sp.refined->z() << ") A\n";
  return kOk;
}

struct ValidateArgs {
  Inputs in;
  std::string out;
  bool dataset = false;
};

int run_validate(const ValidateArgs &a) {
  if (a.dataset) {
    const auto issues = validate_dataset(load_dataset(a.in.data_dir));
    for (const auto &i: issues)
      std::cerr << i.where << ": " << i.message << '\n';
    std::cout << issues.size() << " dataset issue(s)\n";
    return issues.empty() ? kOk : kInput;
  }
  const CouplingTable table = carbons_only(a.in.load_table());
  const Structure s = drop_nitrogen(a.in.load_structure_or_reference());
  const ResidualReport r = residuals_and_xi(s, table);
  if (!a.out.empty())
    write_residuals(a.out, r, table);
  std::cout << std::setprecision(10) << "xi " << r.xi << " Hz^2 over "
            << r.pairs.size() << " pairs\n";
  return kOk;
}

struct ReportArgs {
  Inputs in;
  std::string out;
  double abundance = 0.011;
};

int run_report(const ReportArgs &a) {
  const CouplingTable table = carbons_only(a.in.load_table());
  const Structure s = drop_nitrogen(a.in.load_structure_or_reference());
  const ResidualReport r = residuals_and_xi(s, table);
  const PairResidual *worst = nullptr;
  for (const auto &p: r.pairs)
    if (!worst || std::abs(p.delta) > std::abs(worst->delta))
      worst = &p;
  const double rms =
      r.pairs.empty() ? 0
                      : std::sqrt(r.xi / static_cast<double>(r.pairs.size()));
  std::cout << std::setprecision(6) << "spins              " << s.size()
            << "\nmeasured pairs     " << r.pairs.size()
            << "\nxi                 " << r.xi << " Hz^2"
            << "\nrms residual       " << rms << " Hz\n";
  if (worst)
    std::cout << "largest residual   " << table.spins()[worst->i] << '-'
              << table.spins()[worst->j] << ' ' << worst->delta << " Hz\n";
  try {
    const auto est = expected_spin_count(s, a.abundance);
    std::cout << "bounding box       " << est.volume_nm3 << " nm^3, "
              << est.lattice_sites << " sites, " << est.expected_spins
              << " expected 13C\n";
  } catch (const InputError &e) {
    std::cout << "bounding box       n/a (" << e.what() << ")\n";
  }
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    write_residuals(dir / "residuals.csv", r, table);
    write_matrix(dir / "residual_matrix.csv", table.spins(), r.matrix);
    auto out = open_output(dir / "coordinates.csv");
    out << "spin,x_a,y_a,z_a\n";
    for (std::size_t i = 0; i < s.size(); ++i)
      out << s.ids[i] << ',' << s.coordinates[i].x() << ','
          << s.coordinates[i].y() << ',' << s.coordinates[i].z() << '\n';
  }
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{ "Nuclear spin cluster structure from pairwise couplings" };
  app.require_subcommand(1);
  const std::string data = data_directory();

  ReconstructArgs rec;
  rec.in.data_dir = data;
  auto *c_rec = app.add_subcommand("reconstruct",
                                   "Lattice search for spin positions");
  add_inputs(c_rec, rec.in, true, false);
  c_rec->add_option("--out", rec.out, "Output directory");
  c_rec->add_option("--mode", rec.mode, "diamond or cubic");
  c_rec->add_option("--n-l", rec.n_l, "Lattice extent");
  c_rec->add_option("--cutoff", rec.cutoff, "Configurations kept per step");
  c_rec->add_option("--tol", rec.tol, "Coupling tolerance (Hz)");
  c_rec->add_option("--timeout", rec.timeout, "Wall-clock limit (s)");
  c_rec->add_option("--workers", rec.workers, "Worker threads");
  c_rec->add_option("--checkpoint", rec.checkpoint, "Checkpoint file");
  c_rec->add_option("--resume", rec.resume_from, "Resume from checkpoint")
      ->check(CLI::ExistingFile);
  c_rec->add_option("--keep", rec.keep, "Structures written");

  RefineArgs ref;
  ref.in.data_dir = data;
  auto *c_ref = app.add_subcommand("refine", "Least-squares refinement");
  add_inputs(c_ref, ref.in, true, true);
  c_ref->add_option("--out", ref.out, "Refined structure (json)");
  c_ref->add_option("--origin", ref.origin, "Spin fixed at the origin");
  c_ref->add_option("--plane", ref.plane, "Spin held at y = 0");
  c_ref->add_option("--rotation", ref.rotation, "Pre-rotation about z (deg)");
  c_ref->add_flag("--weighted", ref.weighted, "Weight residuals by 1/sigma");

  CorrectionsArgs cor;
  cor.in.data_dir = data;
  auto *c_cor = app.add_subcommand("corrections",
                                   "Pairwise electron-mediated bounds");
  add_inputs(c_cor, cor.in, false, true);
  c_cor->add_option("--out", cor.out, "Output directory");
  c_cor->add_option("--spins", cor.spins, "Spin records (csv)");
  c_cor->add_option("--bz", cor.bz, "Axial field (G)");
  c_cor->add_option("--bperp-max", cor.bperp_max, "Transverse field bound (G)");
  c_cor->add_option("--angle-steps", cor.angle_steps, "Grid steps per angle")
      ->check(CLI::PositiveNumber);
  c_cor->add_option("--bperp-steps", cor.bperp_steps, "Transverse field steps")
      ->check(CLI::PositiveNumber);
  c_cor->add_flag("--exact", cor.exact, "Use exact diagonalisation");

  SimulateArgs sim;
  auto *c_sim = app.add_subcommand("simulate", "Synthesize traces and PSDs");
  c_sim->add_option("--out", sim.out, "Output directory");
  c_sim->add_option("--coupling", sim.couplings, "Coupling (Hz), repeatable")
      ->required();
  c_sim->add_option("--p", sim.probabilities,
                    "Inversion probability per coupling");
  c_sim->add_option("--samples", sim.samples, "Number of samples");
  c_sim->add_option("--dt", sim.dt, "Sample spacing (s)");
  c_sim->add_option("--offset", sim.offset, "Offset a");
  c_sim->add_option("--amplitude", sim.amplitude, "Contrast A");
  c_sim->add_option("--pulse-error", sim.pulse_error, "Pulse-error B");
  c_sim->add_option("--t2", sim.t2, "Coherence time (s)");
  c_sim->add_option("--exponent", sim.exponent, "Decay exponent n");
  c_sim->add_option("--phase", sim.phase, "Phase (rad)");
  c_sim->add_option("--noise", sim.noise, "Gaussian noise sigma");
  c_sim->add_option("--seed", sim.seed, "Noise seed");
  c_sim->add_option("--zero-fill", sim.zero_fill, "Zero filling factor")
      ->check(CLI::PositiveNumber);
  c_sim->add_flag("--fit", sim.fit, "Fit the trace with a single line");

  SensorArgs sen;
  sen.in.data_dir = data;
  auto *c_sen = app.add_subcommand("sensor-position",
                                   "Place the sensor from N-C couplings");
  add_inputs(c_sen, sen.in, true, true);
  c_sen->add_option("--out", sen.out, "Structure with the sensor (json)");
  c_sen->add_option("--n-l", sen.n_l, "Lattice extent");
  c_sen->add_option("--tol", sen.tol, "Coupling tolerance (Hz)");

  ValidateArgs val;
  val.in.data_dir = data;
  auto *c_val = app.add_subcommand("validate",
                                   "Residuals of a structure against a table");
  add_inputs(c_val, val.in, true, true);
  c_val->add_option("--out", val.out, "Residual file (csv)");
  c_val->add_flag("--dataset", val.dataset, "Check the bundled dataset");

  ReportArgs rep;
  rep.in.data_dir = data;
  auto *c_rep = app.add_subcommand("report", "Summary of a structure");
  add_inputs(c_rep, rep.in, true, true);
  c_rep->add_option("--out", rep.out, "Directory for columnar data");
  c_rep->add_option("--abundance", rep.abundance, "13C abundance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (c_rec->parsed())
      return run_reconstruct(rec);
    if (c_ref->parsed())
      return run_refine(ref);
    if (c_cor->parsed())
      return run_corrections(cor);
    if (c_sim->parsed())
      return run_simulate(sim);
    if (c_sen->parsed())
      return run_sensor(sen);
    if (c_val->parsed())
      return run_validate(val);
    if (c_rep->parsed())
      return run_report(rep);
  } catch (const InputError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const DegenerateGeometryError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const ExhaustionError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const DegeneracyError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const ConvergenceError &e) {
    std::cerr << "error: " << e.what() << " (residual norm "
              << e.residual_norm() << ")\n";
    return kNoConvergence;
  }
  return kOk;
}
