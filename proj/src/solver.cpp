//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include "spinmap/solver.h"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "spinmap/error.h"

namespace spinmap {

namespace {

constexpr double kSameEps = 1e-9;   // angstrom, position identity
constexpr std::uint8_t kDiamondAllSym = 0x3F;
constexpr std::uint8_t kCubicRotation = 2;
constexpr std::uint8_t kCubicReflection = 1;

// The six crystal-axis permutations as lab-frame matrices; index 0 is the
// identity.
const std::array<Eigen::Matrix3d, 6> &diamond_group() {
  static const std::array<Eigen::Matrix3d, 6> g = [] {
    std::array<Eigen::Matrix3d, 6> out;
    const std::array<std::array<int, 3>, 6> perms{ { { 0, 1, 2 },
                                                     { 1, 2, 0 },
                                                     { 2, 0, 1 },
                                                     { 0, 2, 1 },
                                                     { 2, 1, 0 },
                                                     { 1, 0, 2 } } };
    const Eigen::Matrix3d &R = lattice_rotation();
    for (std::size_t k = 0; k < perms.size(); ++k) {
      Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
      for (int r = 0; r < 3; ++r)
        P(r, perms[k][r]) = 1;
      out[k] = R * P * R.transpose();
    }
    return out;
  }();
  return g;
}

bool same_point(const Vec3 &a, const Vec3 &b) {
  return (a - b).cwiseAbs().maxCoeff() < kSameEps;
}

// Lexicographic order with a tolerance, for canonical orbit members.
bool lex_less_eps(const Vec3 &a, const Vec3 &b) {
  for (int k = 0; k < 3; ++k) {
    if (a[k] < b[k] - kSameEps)
      return true;
    if (a[k] > b[k] + kSameEps)
      return false;
  }
  return false;
}

bool lex_less(const Vec3 &a, const Vec3 &b) {
  return std::lexicographical_compare(a.data(), a.data() + 3, b.data(),
                                      b.data() + 3);
}

// Canonical test under the residual symmetry; returns false for
// non-canonical positions and stores the new stabiliser in sym_out.
bool canonical(const Vec3 &pos, std::uint8_t sym, SolveMode mode,
               std::uint8_t &sym_out) {
  if (mode == SolveMode::diamond) {
    sym_out = 1;
    if (sym == 1 || sym == 0) {
      sym_out = sym;
      return true;
    }
    const auto &g = diamond_group();
    for (std::size_t k = 1; k < g.size(); ++k) {
      if (!(sym & (1u << k)))
        continue;
      const Vec3 q = g[k] * pos;
      if (same_point(q, pos))
        sym_out |= static_cast<std::uint8_t>(1u << k);
      else if (lex_less_eps(q, pos))
        return false;
    }
    return true;
  }
  if (sym == kCubicRotation) {
    if (std::abs(pos.y()) >= kSameEps || pos.x() <= -kSameEps)
      return false;
    sym_out = std::abs(pos.x()) < kSameEps ? kCubicRotation : kCubicReflection;
    return true;
  }
  if (sym == kCubicReflection) {
    if (pos.y() <= -kSameEps)
      return false;
    sym_out = pos.y() < kSameEps ? kCubicReflection : 0;
    return true;
  }
  sym_out = 0;
  return true;
}

struct Constraint {
  std::size_t k; // position in the order
  double f, tol, kappa;
};

struct Candidate {
  std::uint32_t parent;
  std::uint8_t sub;
  std::uint8_t sym;
  double xi;
  Vec3 pos;
};

struct CandidateLess {
  const std::vector<CandidateConfiguration> *parents;

  bool operator()(const Candidate &a, const Candidate &b) const {
    if (a.xi != b.xi)
      return a.xi < b.xi;
    if (a.parent != b.parent) {
      const auto &pa = (*parents)[a.parent].coordinates;
      const auto &pb = (*parents)[b.parent].coordinates;
      for (std::size_t k = 0; k < pa.size(); ++k) {
        if (lex_less(pa[k], pb[k]))
          return true;
        if (lex_less(pb[k], pa[k]))
          return false;
      }
    }
    return lex_less(a.pos, b.pos);
  }
};

void truncate(std::vector<Candidate> &buf, std::size_t k,
              const CandidateLess &less) {
  if (buf.size() <= k)
    return;
  std::nth_element(buf.begin(), buf.begin() + static_cast<long>(k), buf.end(),
                   less);
  buf.resize(k);
}

struct TimeoutSignal { };

using Clock = std::chrono::steady_clock;

struct Deadline {
  std::optional<Clock::time_point> at;

  bool passed() const { return at && Clock::now() > *at; }
};

thread_local const Deadline *tl_deadline = nullptr;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

} // namespace

const char *to_string(SolveMode m) {
  return m == SolveMode::cubic ? "cubic" : "diamond";
}

SolveMode solve_mode_from_string(std::string_view s) {
  if (s == "diamond")
    return SolveMode::diamond;
  if (s == "cubic")
    return SolveMode::cubic;
  throw InputError("unknown solver mode '" + std::string(s) + "'");
}

bool config_less(const CandidateConfiguration &a,
                 const CandidateConfiguration &b) {
  if (a.xi != b.xi)
    return a.xi < b.xi;
  const std::size_t n = std::min(a.coordinates.size(), b.coordinates.size());
  for (std::size_t k = 0; k < n; ++k) {
    if (lex_less(a.coordinates[k], b.coordinates[k]))
      return true;
    if (lex_less(b.coordinates[k], a.coordinates[k]))
      return false;
  }
  return a.coordinates.size() < b.coordinates.size();
}

std::vector<std::string> greedy_order(const CouplingTable &table,
                                      const std::string &first,
                                      double weak_value) {
  const std::size_t n = table.spin_count();
  std::vector<std::string> order{ first };
  std::vector<bool> placed(n, false);
  placed[table.require_index(first)] = true;
  std::vector<std::size_t> idx{ table.require_index(first) };
  while (order.size() < n) {
    double best = -1;
    std::size_t best_j = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (placed[j])
        continue;
      for (std::size_t i: idx) {
        if (const CouplingEntry *e = table.find(i, j)) {
          const double f = e->effective_hz(weak_value);
          if (f > best) {
            best = f;
            best_j = j;
          }
        }
      }
    }
    if (best_j == n) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!placed[j])
          throw InputError("spin '" + table.spins()[j]
                           + "' has no measured coupling to the cluster");
      }
    }
    placed[best_j] = true;
    idx.push_back(best_j);
    order.push_back(table.spins()[best_j]);
  }
  return order;
}

SearchContext::SearchContext(const CouplingTable &table,
                             const SolverParams &params)
    : table_(table), params_(params) {
  if (!(params.tol > 0) || !(params.tol_single > 0))
    throw InputError("solver tolerances must be > 0");
  if (params.cutoff < 1)
    throw InputError("solver cutoff must be >= 1");
  if (table.spin_count() == 0)
    throw InputError("empty coupling table");

  if (params.order.empty()) {
    order_ = greedy_order(table, table.spins().front(), params.weak_value);
  } else {
    std::set<std::string> seen;
    for (const auto &id: params.order) {
      table.require_index(id);
      if (!seen.insert(id).second)
        throw InputError("spin '" + id + "' repeated in the order");
    }
    order_ = params.order;
  }

  if (params.mode == SolveMode::diamond) {
    diamond_ = std::make_unique<CouplingLookup>(CouplingLookup::from_diamond(
        generate_diamond_lattice(params.n_l, params.constants.a0)));
  }
}

double SearchContext::tolerance_for(const CouplingEntry &e) const {
  if (e.single_projection_only
      && (!e.weak_upper_bound || params_.single_tolerance_for_weak))
    return params_.tol_single;
  return params_.tol;
}

double SearchContext::kappa(std::size_t i, std::size_t j) const {
  const auto &pc = params_.constants;
  return pc.kappa_hz_a3(
      gyromagnetic_ratio(nucleus_of(table_.spins()[i]), pc),
      gyromagnetic_ratio(nucleus_of(table_.spins()[j]), pc));
}

const CouplingLookup &SearchContext::diamond_lookup() const {
  if (!diamond_)
    throw InputError("diamond lookup requested in cubic mode");
  return *diamond_;
}

const std::vector<LatticeVector> &
SearchContext::cubic_candidates(double f_hz, double tol, double kappa) const {
  const auto key = std::make_tuple(f_hz, tol, kappa);
  auto it = cubic_cache_.find(key);
  if (it != cubic_cache_.end())
    return it->second;
  // alpha / 4pi * 1e30 = kappa; alpha enters only through kappa.
  PhysicalConstants unit = params_.constants;
  const double gamma = std::sqrt(kappa / unit.kappa_hz_a3(1.0, 1.0));
  const CubicLatticeSpec spec = cubic_lattice_for_coupling(
      f_hz, gamma, gamma, unit, params_.n_tilde);
  auto vecs = candidate_vectors(f_hz, cubic_lookup(spec), tol, kappa);
  return cubic_cache_.emplace(key, std::move(vecs)).first->second;
}

std::vector<CandidateConfiguration> initial_configurations(
    const SearchContext &ctx) {
  CandidateConfiguration c;
  c.coordinates.push_back(Vec3::Zero());
  c.sublattice.push_back(0);
  c.xi = 0;
  c.sym = ctx.params().mode == SolveMode::diamond ? kDiamondAllSym
                                                  : kCubicRotation;
  return { c };
}

std::vector<CandidateConfiguration> place_next_spin(
    const std::vector<CandidateConfiguration> &solutions, std::size_t placed,
    const SearchContext &ctx, StepLog *log) {
  const auto t_start = Clock::now();
  const auto &order = ctx.order();
  const auto &table = ctx.table();
  const auto &params = ctx.params();
  if (placed == 0 || placed >= order.size())
    throw InputError("place_next_spin: nothing to place");

  const std::string &spin = order[placed];
  const std::size_t s_idx = table.require_index(spin);

  std::vector<Constraint> cons;
  for (std::size_t k = 0; k < placed; ++k) {
    const std::size_t o_idx = table.require_index(order[k]);
    if (const CouplingEntry *e = table.find(o_idx, s_idx)) {
      cons.push_back({ k, e->effective_hz(params.weak_value),
                       ctx.tolerance_for(*e), ctx.kappa(o_idx, s_idx) });
    }
  }
  if (cons.empty())
    throw InputError("spin '" + spin
                     + "' has no measured coupling to the placed spins");
  // Anchor first (strongest, earliest placed on ties), then by strength.
  std::stable_sort(cons.begin(), cons.end(),
                   [](const Constraint &a, const Constraint &b) {
                     return a.f > b.f;
                   });
  const Constraint anchor = cons.front();

  std::vector<LatticeVector> cubic_vecs;
  std::span<const LatticeVector> vecs;
  std::vector<LatticeVector> diamond_vecs;
  if (params.mode == SolveMode::diamond) {
    diamond_vecs = candidate_vectors(anchor.f, ctx.diamond_lookup(), anchor.tol,
                                     anchor.kappa);
    vecs = diamond_vecs;
  } else {
    vecs = ctx.cubic_candidates(anchor.f, anchor.tol, anchor.kappa);
  }

  const std::size_t K = params.cutoff;
  const CandidateLess less{ &solutions };
  const unsigned workers = std::max(1u, std::min<unsigned>(
      params.workers, static_cast<unsigned>(solutions.size())));
  const Deadline *deadline = tl_deadline;

  struct WorkerOut {
    std::vector<Candidate> buf;
    std::size_t survivors = 0;
    std::size_t dead = 0;
    bool timed_out = false;
  };
  std::vector<WorkerOut> outs(workers);

  auto work = [&](unsigned w) {
    WorkerOut &out = outs[w];
    const std::size_t n = solutions.size();
    const std::size_t begin = n * w / workers, end = n * (w + 1) / workers;
    for (std::size_t pi = begin; pi < end; ++pi) {
      if (deadline && deadline->passed()) {
        out.timed_out = true;
        return;
      }
      const CandidateConfiguration &c = solutions[pi];
      const Vec3 &ap = c.coordinates[anchor.k];
      const bool neg = params.mode == SolveMode::diamond
                       && c.sublattice[anchor.k] == 1;
      std::size_t alive = 0;
      for (const LatticeVector &lv: vecs) {
        const Vec3 pos = neg ? Vec3(ap - lv.v) : Vec3(ap + lv.v);
        double inc = 0;
        bool ok = true;
        for (const Constraint &q: cons) {
          const Vec3 d = pos - c.coordinates[q.k];
          const double r2 = d.squaredNorm();
          if (r2 < 1e-18) {
            ok = false;
            break;
          }
          const double u = 3 * d.z() * d.z() - r2;
          const double pred = q.kappa * std::abs(u) / (r2 * r2 * std::sqrt(r2));
          const double df = q.f - pred;
          if (!(std::abs(df) < q.tol)) {
            ok = false;
            break;
          }
          inc += df * df;
        }
        if (!ok)
          continue;
        for (std::size_t k = 0; k < placed && ok; ++k)
          ok = !same_point(pos, c.coordinates[k]);
        if (!ok)
          continue;
        std::uint8_t sym = 0;
        if (!canonical(pos, c.sym, params.mode, sym))
          continue;
        ++alive;
        const std::uint8_t sub =
            params.mode == SolveMode::diamond
                ? static_cast<std::uint8_t>(c.sublattice[anchor.k] ^ lv.flip)
                : 0;
        out.buf.push_back({ static_cast<std::uint32_t>(pi), sub, sym,
                            c.xi + inc, pos });
        if (out.buf.size() >= 4 * K)
          truncate(out.buf, K, less);
      }
      out.survivors += alive;
      if (alive == 0)
        ++out.dead;
    }
    truncate(out.buf, K, less);
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w)
      threads.emplace_back(work, w);
    for (auto &t: threads)
      t.join();
  }

  std::vector<Candidate> all;
  std::size_t survivors = 0, dead = 0;
  for (auto &o: outs) {
    if (o.timed_out)
      throw TimeoutSignal{};
    survivors += o.survivors;
    dead += o.dead;
    all.insert(all.end(), o.buf.begin(), o.buf.end());
  }
  truncate(all, K, less);
  std::sort(all.begin(), all.end(), less);

  if (log) {
    log->spin = spin;
    log->anchor = order[anchor.k];
    log->parents = solutions.size();
    log->candidates = vecs.size() * solutions.size();
    log->survivors = survivors;
    log->kept = all.size();
    log->dead_parents = dead;
  }

  if (all.empty()) {
    // Tightest violated coupling over every tried placement.
    double best_excess = std::numeric_limits<double>::infinity();
    std::string detail = "no candidate vectors for the anchor coupling";
    for (const auto &c: solutions) {
      const Vec3 &ap = c.coordinates[anchor.k];
      const bool neg = params.mode == SolveMode::diamond
                       && c.sublattice[anchor.k] == 1;
      for (const LatticeVector &lv: vecs) {
        const Vec3 pos = neg ? Vec3(ap - lv.v) : Vec3(ap + lv.v);
        double worst = -std::numeric_limits<double>::infinity();
        const Constraint *wq = nullptr;
        double wdf = 0;
        for (const Constraint &q: cons) {
          const Vec3 d = pos - c.coordinates[q.k];
          if (d.squaredNorm() < 1e-18) {
            worst = std::numeric_limits<double>::infinity();
            wq = &q;
            break;
          }
          const double df =
              q.f - q.kappa * dipolar_geometry_factor(d.x(), d.y(), d.z());
          const double ex = std::abs(df) - q.tol;
          if (ex > worst) {
            worst = ex;
            wq = &q;
            wdf = df;
          }
        }
        if (wq && worst < best_excess) {
          best_excess = worst;
          detail = "tightest violated coupling " + order[wq->k] + "-" + spin
                   + ": |df| = " + fmt(std::abs(wdf))
                   + " Hz, tolerance " + fmt(wq->tol) + " Hz";
        }
      }
    }
    throw ExhaustionError("all branches died placing " + spin + " ("
                              + detail + ")",
                          spin);
  }

  std::vector<CandidateConfiguration> next;
  next.reserve(all.size());
  for (const Candidate &cd: all) {
    CandidateConfiguration c = solutions[cd.parent];
    c.coordinates.push_back(cd.pos);
    c.sublattice.push_back(cd.sub);
    c.xi = cd.xi;
    c.sym = cd.sym;
    next.push_back(std::move(c));
  }
  if (log)
    log->seconds =
        std::chrono::duration<double>(Clock::now() - t_start).count();
  return next;
}

std::vector<Vec3> reduce_symmetry(const std::vector<Vec3> &candidates,
                                  SolveMode mode) {
  std::vector<Vec3> out;
  const std::uint8_t start =
      mode == SolveMode::diamond ? kDiamondAllSym : kCubicRotation;
  for (const Vec3 &p: candidates) {
    std::uint8_t sym;
    if (!canonical(p, start, mode, sym))
      continue;
    if (std::none_of(out.begin(), out.end(),
                     [&](const Vec3 &q) { return same_point(p, q); }))
      out.push_back(p);
  }
  std::sort(out.begin(), out.end(), lex_less);
  return out;
}

void write_checkpoint(const std::string &path, const Checkpoint &cp) {
  nlohmann::json j;
  j["format"] = "spinmap-checkpoint";
  j["version"] = 1;
  j["mode"] = to_string(cp.mode);
  j["order"] = cp.order;
  j["placed"] = cp.placed;
  auto &arr = j["configurations"] = nlohmann::json::array();
  for (const auto &c: cp.configurations) {
    nlohmann::json cj;
    cj["xi"] = c.xi;
    cj["sym"] = c.sym;
    auto &co = cj["coordinates"] = nlohmann::json::array();
    for (const Vec3 &p: c.coordinates)
      co.push_back({ p.x(), p.y(), p.z() });
    cj["sublattice"] = c.sublattice;
    arr.push_back(std::move(cj));
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f)
      throw InputError("cannot write checkpoint '" + path + "'");
    f << j.dump() << '\n';
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw InputError("cannot write checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw InputError("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
    if (j.at("format") != "spinmap-checkpoint" || j.at("version") != 1)
      throw InputError("'" + path + "' is not a version 1 checkpoint");
    Checkpoint cp;
    cp.mode = solve_mode_from_string(j.at("mode").get<std::string>());
    cp.order = j.at("order").get<std::vector<std::string>>();
    cp.placed = j.at("placed").get<std::size_t>();
    for (const auto &cj: j.at("configurations")) {
      CandidateConfiguration c;
      c.xi = cj.at("xi").get<double>();
      c.sym = cj.at("sym").get<std::uint8_t>();
      for (const auto &p: cj.at("coordinates"))
        c.coordinates.emplace_back(p.at(0).get<double>(),
                                   p.at(1).get<double>(),
                                   p.at(2).get<double>());
      c.sublattice = cj.at("sublattice").get<std::vector<std::uint8_t>>();
      if (c.coordinates.size() != cp.placed
          || c.sublattice.size() != cp.placed)
        throw InputError("checkpoint configuration size mismatch");
      cp.configurations.push_back(std::move(c));
    }
    return cp;
  } catch (const nlohmann::json::exception &e) {
    throw InputError("malformed checkpoint '" + path + "': " + e.what());
  }
}

namespace {

SolveResult finish(const SearchContext &ctx,
                   std::vector<CandidateConfiguration> configs,
                   std::size_t placed, std::vector<StepLog> steps,
                   bool timed_out) {
  SolveResult r;
  r.order.assign(ctx.order().begin(), ctx.order().begin() + placed);
  r.steps = std::move(steps);
  r.timed_out = timed_out;
  r.placed = placed;

  Gauge gauge;
  gauge.origin_spin = r.order.front();
  if (placed > 1)
    gauge.plane_spin = r.order[1];
  for (const auto &c: configs) {
    Structure s;
    s.ids = r.order;
    s.coordinates = c.coordinates;
    s.gauge = gauge;
    s.xi = c.xi;
    r.structures.push_back(std::move(s));
  }

  r.unique.assign(placed, true);
  for (const auto &c: configs) {
    for (std::size_t k = 0; k < placed; ++k) {
      if (!same_point(c.coordinates[k], configs.front().coordinates[k]))
        r.unique[k] = false;
    }
  }

  if (!configs.empty()) {
    const auto &best = configs.front();
    const auto &table = ctx.table();
    const auto &pc = ctx.params().constants;
    for (std::size_t a = 0; a < placed; ++a) {
      for (std::size_t b = a + 1; b < placed; ++b) {
        if (table.find(r.order[a], r.order[b]))
          continue;
        r.unmeasured.push_back(
            { r.order[a], r.order[b],
              spin_pair_coupling(r.order[a], best.coordinates[a], r.order[b],
                                 best.coordinates[b], pc) });
      }
    }
  }
  r.configurations = std::move(configs);
  return r;
}

SolveResult run(const SearchContext &ctx,
                std::vector<CandidateConfiguration> configs,
                std::size_t placed,
                const std::function<void(const StepLog &)> &progress) {
  const auto &params = ctx.params();
  Deadline deadline;
  if (params.timeout_s)
    deadline.at = Clock::now()
                  + std::chrono::duration_cast<Clock::duration>(
                      std::chrono::duration<double>(*params.timeout_s));
  tl_deadline = &deadline;
  struct Reset {
    ~Reset() { tl_deadline = nullptr; }
  } reset;

  std::vector<StepLog> steps;
  while (placed < ctx.order().size()) {
    StepLog log;
    try {
      configs = place_next_spin(configs, placed, ctx, &log);
    } catch (const TimeoutSignal &) {
      return finish(ctx, std::move(configs), placed, std::move(steps), true);
    }
    ++placed;
    steps.push_back(log);
    if (progress)
      progress(log);
    if (!params.checkpoint_path.empty())
      write_checkpoint(params.checkpoint_path,
                       { params.mode,
                         ctx.order(),
                         placed,
                         configs });
    if (deadline.passed() && placed < ctx.order().size())
      return finish(ctx, std::move(configs), placed, std::move(steps), true);
  }
  return finish(ctx, std::move(configs), placed, std::move(steps), false);
}

} // namespace

SolveResult solve(const CouplingTable &table, const SolverParams &params,
                  const std::function<void(const StepLog &)> &progress) {
  SearchContext ctx(table, params);
  return run(ctx, initial_configurations(ctx), 1, progress);
}

SolveResult resume(const CouplingTable &table, const SolverParams &params,
                   const std::string &checkpoint_path,
                   const std::function<void(const StepLog &)> &progress) {
  Checkpoint cp = read_checkpoint(checkpoint_path);
  if (cp.mode != params.mode)
    throw InputError("checkpoint mode differs from the run configuration");
  SolverParams p = params;
  p.order = cp.order;
  SearchContext ctx(table, p);
  return run(ctx, std::move(cp.configurations), cp.placed, progress);
}

} // namespace spinmap
