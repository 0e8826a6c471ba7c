#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <thread>

#include "tpoint/log.hpp"
#include "tpoint/pathspace.hpp"

namespace tpoint {

/// Thrown when the image point f(x) lies beyond the cut locus of the
/// integrated geodesic endpoint, so the position residual is undefined.
struct SeedTooFarError : std::runtime_error {
  SeedTooFarError() : std::runtime_error("seed-too-far") {}
};

/// Candidate translated point: base point, unit direction, time-shift.
struct ShootingState {
  Eigen::VectorXd x;
  Eigen::VectorXd v;
  double t = 0.0;
};

/// Converged solution. morse_index is -1 until classification fills it
/// ("unknown"); kernel_dim / nondegenerate start from the dedup geometry
/// (families are degenerate by construction) and are refined by the
/// classification pass.
struct TranslatedPointRecord {
  ShootingState state;
  double residual_norm = 0.0;
  GeodesicArc geodesic;
  int iterations = 0;
  int morse_index = -1;
  int kernel_dim = 0;
  bool nondegenerate = true;
  bool borderline = false;
  int family_id = -1;
  bool is_family = false;
  int cluster_size = 1;
  double cluster_diameter = 0.0;
  int family_dim = 0;
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iters = 50;
  int max_halvings = 20;
  double tikhonov = 1e-10;
  double fd_step = 1e-6;
  int steps_multiplier = 1;    // integrator resolution scale; raise for long arcs
                               // where default-step endpoint error exceeds tol
  double t_min = 0.0;          // 0 = automatic: zoll length / 100 where defined, else 0.05
  double prefilter_frac = 1.0; // skip seeds whose position residual exceeds this times inj
  int sm_density = 20;         // per-dimension density; SM seed count = density^(2 dim - 1)
  int shift_density = 20;      // time-shift grid points per window
  std::uint64_t seed = 0;      // jitter for the low-discrepancy rotation
  int threads = 1;
  double dup_tol = 1e-4;          // identification threshold for duplicates
  double link_radius = 0.25;      // single-linkage radius for family detection
  double t_link_tol = 1e-6;       // shifts agreeing this closely also link:
                                  // a continuum shares its critical value, so
                                  // coincident shifts chain across base gaps
                                  // a sparse scan cannot bridge
  double family_diameter = 1e-2;  // flag clusters wider than this ...
  int family_min_members = 51;    // ... with at least this many members
};

inline double effective_t_min(const Manifold& M, const SolverOptions& opt) {
  if (opt.t_min > 0.0) return opt.t_min;
  if (const auto zoll = M.zoll_length()) return *zoll / 100.0;
  return 0.05;
}

/// Distance on the unit tangent bundle: base distance plus the angle between
/// the transported directions. Far-apart base points get a conservative cap
/// instead of an unreliable transport.
inline double sm_distance(const Manifold& M, const TangentVector& a, const TangentVector& b) {
  const double dx = M.dist(a.base, b.base);
  if (dx >= 0.9 * M.injectivity_radius()) return dx + M_PI;
  const Eigen::VectorXd w = M.transport_between(a.base, b.base, a.vec);
  const double c = std::clamp(w.dot(b.vec) / (w.norm() * b.vec.norm()), -1.0, 1.0);
  return dx + std::acos(c);
}

namespace detail {

inline double halton(std::uint64_t index, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  for (std::uint64_t i = index + 1; i > 0; i /= base) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
  }
  return r;
}

inline double splitmix_unit(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z = z ^ (z >> 31);
  return static_cast<double>(z >> 11) / 9007199254740992.0;
}

/// Low-discrepancy unit-cube points: Halton sequence with a deterministic
/// Cranley-Patterson rotation derived from the run seed.
struct UnitCubeSequence {
  std::array<double, 6> offset{};
  static constexpr std::array<std::uint64_t, 6> bases{2, 3, 5, 7, 11, 13};

  explicit UnitCubeSequence(std::uint64_t seed) {
    std::uint64_t s = seed ^ 0x5bf03635ull;
    for (auto& o : offset) o = splitmix_unit(s);
  }

  double coord(std::uint64_t index, int dim) const {
    const double u = halton(index, bases[dim]) + offset[dim];
    return u - std::floor(u);
  }
};

inline Eigen::VectorXd direction_in_frame(const Eigen::MatrixXd& frame,
                                          const double* angles, int n) {
  // n = fiber dimension (dim M - 1 ... dim M); angles holds n - 1 values for
  // the unit sphere in the span of the frame columns.
  Eigen::VectorXd c(frame.cols());
  if (frame.cols() == 1) {
    c[0] = angles[0] < 0.5 ? 1.0 : -1.0;
  } else if (frame.cols() == 2) {
    const double a = 2.0 * M_PI * angles[0];
    c << std::cos(a), std::sin(a);
  } else {
    const double z = 2.0 * angles[0] - 1.0;
    const double a = 2.0 * M_PI * angles[1];
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    c.resize(3);
    c << rho * std::cos(a), rho * std::sin(a), z;
  }
  (void)n;
  return frame * c;
}

}  // namespace detail

/// Deterministic low-discrepancy sample of the unit tangent bundle,
/// density^(2 dim - 1) points.
inline std::vector<TangentVector> sm_seed_points(const Manifold& M, const SolverOptions& opt) {
  const int n = M.dim();
  const std::uint64_t count = [&] {
    std::uint64_t c = 1;
    for (int k = 0; k < 2 * n - 1; ++k) c *= static_cast<std::uint64_t>(opt.sm_density);
    return c;
  }();
  detail::UnitCubeSequence seq(opt.seed);
  std::vector<TangentVector> seeds;
  seeds.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Eigen::VectorXd x(M.rep_dim());
    int used = 0;
    if (const auto* torus = dynamic_cast<const FlatTorus*>(&M)) {
      for (int d = 0; d < n; ++d) x[d] = torus->periods()[d] * seq.coord(i, used++);
    } else if (n == 2) {
      const double z = 2.0 * seq.coord(i, used++) - 1.0;
      const double a = 2.0 * M_PI * seq.coord(i, used++);
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      x = Eigen::Vector3d(rho * std::cos(a), rho * std::sin(a), z);
      M.project_point(x);
    } else {
      const double eta = std::asin(std::sqrt(seq.coord(i, used++)));
      const double xi1 = 2.0 * M_PI * seq.coord(i, used++);
      const double xi2 = 2.0 * M_PI * seq.coord(i, used++);
      x.resize(4);
      x << std::cos(eta) * std::cos(xi1), std::cos(eta) * std::sin(xi1),
          std::sin(eta) * std::cos(xi2), std::sin(eta) * std::sin(xi2);
      M.project_point(x);
    }
    const Eigen::MatrixXd frame = tangent_frame(M, x);
    std::array<double, 2> angles{};
    for (int k = 0; k + 1 < n; ++k) angles[static_cast<std::size_t>(k)] = seq.coord(i, used++);
    if (n == 1) angles[0] = seq.coord(i, used++);
    Eigen::VectorXd v = detail::direction_in_frame(frame, angles.data(), n);
    v /= v.norm();
    seeds.push_back({std::move(x), std::move(v)});
  }
  return seeds;
}

namespace detail {

struct ResidualParts {
  Eigen::VectorXd vec;       // stacked ambient (position part; velocity part)
  double norm = 0.0;
  double cut_margin = 0.0;   // injectivity radius minus endpoint distance
};

inline ResidualParts residual_parts(const SmoothMap& f, const ShootingState& s,
                                    int steps_override = 0) {
  const Manifold& M = f.manifold();
  Eigen::VectorXd y, ydot;
  if (steps_override > 0) {
    const GeodesicArc arc = M.geodesic({s.x, s.t * s.v}, 1.0, steps_override);
    y = arc.points.back();
    ydot = arc.velocities.back();
  } else {
    M.geodesic_endpoint({s.x, s.t * s.v}, 1.0, y, ydot);
  }
  const Eigen::VectorXd fx = f.eval(s.x);
  const double gap = M.dist(y, fx);
  if (gap >= M.injectivity_radius() - 1e-6) throw SeedTooFarError();
  ResidualParts out;
  out.cut_margin = M.injectivity_radius() - gap;
  Eigen::VectorXd pos;
  try {
    pos = M.log_map(y, fx);
  } catch (const CutLocusError&) {
    throw SeedTooFarError();
  }
  const Eigen::VectorXd vel =
      f.adjoint_differential(s.x, M.transport_between(y, fx, ydot)) - s.t * s.v;
  out.vec.resize(pos.size() + vel.size());
  out.vec << pos, vel;
  out.norm = out.vec.norm();
  return out;
}

/// Orthonormal basis of the orthogonal complement of v inside T_x M.
inline Eigen::MatrixXd perp_frame(const Manifold& M, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& v) {
  const Eigen::MatrixXd frame = tangent_frame(M, x);
  const int n = M.dim();
  Eigen::MatrixXd out(frame.rows(), n - 1);
  const Eigen::VectorXd vhat = v / v.norm();
  int c = 0;
  std::vector<std::pair<double, int>> order;
  std::vector<Eigen::VectorXd> cand(n);
  for (int i = 0; i < n; ++i) {
    cand[i] = frame.col(i) - frame.col(i).dot(vhat) * vhat;
    order.emplace_back(-cand[i].norm(), i);
  }
  std::sort(order.begin(), order.end());
  for (const auto& [negnorm, idx] : order) {
    if (c == n - 1) break;
    Eigen::VectorXd u = cand[idx];
    for (int j = 0; j < c; ++j) u -= u.dot(out.col(j)) * out.col(j);
    const double nn = u.norm();
    if (nn > 1e-8) out.col(c++) = u / nn;
  }
  if (c != n - 1) throw std::runtime_error("fiber frame construction failed");
  return out;
}

inline ShootingState advance_state(const Manifold& M, const ShootingState& s,
                                   const Eigen::MatrixXd& frame, const Eigen::MatrixXd& perp,
                                   const Eigen::VectorXd& dz) {
  const int n = M.dim();
  ShootingState out;
  out.x = exp_map(M, s.x, frame * dz.head(n));
  Eigen::VectorXd v = s.v;
  if (n > 1) v += perp * dz.segment(n, n - 1);
  v = M.transport_between(s.x, out.x, v);
  v = M.project_tangent(out.x, v);
  out.v = v / v.norm();
  out.t = s.t + dz[2 * n - 1];
  return out;
}

}  // namespace detail

/// Shooting residual of the positive-shift problem: integrate the geodesic
/// from (x, t v) over [0,1] to the endpoint y and return the stacked pair
/// (log_y(f(x)), df^T(transport of gamma'(1)) - t v). Zero exactly at
/// translated points with time-shift t.
inline Eigen::VectorXd residual(const SmoothMap& f, const ShootingState& s) {
  return detail::residual_parts(f, s).vec;
}

/// Gauss-Newton refinement of a shooting seed. Returns the converged record,
/// or nothing when the iteration fails (divergence, damping exhaustion, seed
/// rejection, or t collapsing into the fixed-point stratum).
inline std::optional<TranslatedPointRecord> newton_solve(const SmoothMap& f,
                                                         const ShootingState& seed,
                                                         const SolverOptions& opt = {}) {
  const Manifold& M = f.manifold();
  const int n = M.dim();
  const double t_min = effective_t_min(M, opt);
  const auto res_steps = [&](double t) {
    return opt.steps_multiplier <= 1 ? 0 : opt.steps_multiplier * M.steps_for(t);
  };
  ShootingState s = seed;
  s.v = s.v / s.v.norm();
  if (s.t <= t_min) return std::nullopt;

  detail::ResidualParts r;
  try {
    r = detail::residual_parts(f, s, res_steps(s.t));
  } catch (const SeedTooFarError&) {
    return std::nullopt;
  }
  if (r.vec.head(M.rep_dim()).norm() > opt.prefilter_frac * M.injectivity_radius())
    return std::nullopt;

  const int unknowns = 2 * n;
  double min_margin = r.cut_margin;
  int iterations = 0;
  for (int iter = 0; iter < opt.max_iters && r.norm >= opt.tol; ++iter) {
    const Eigen::MatrixXd frame = tangent_frame(M, s.x);
    const Eigen::MatrixXd perp = detail::perp_frame(M, s.x, s.v);
    Eigen::MatrixXd J(r.vec.size(), unknowns);
    try {
      for (int k = 0; k < unknowns; ++k) {
        Eigen::VectorXd dz = Eigen::VectorXd::Zero(unknowns);
        dz[k] = opt.fd_step;
        const ShootingState sp = detail::advance_state(M, s, frame, perp, dz);
        const Eigen::VectorXd rp = detail::residual_parts(f, sp, res_steps(sp.t)).vec;
        dz[k] = -opt.fd_step;
        const ShootingState sm = detail::advance_state(M, s, frame, perp, dz);
        const Eigen::VectorXd rm = detail::residual_parts(f, sm, res_steps(sm.t)).vec;
        J.col(k) = (rp - rm) / (2.0 * opt.fd_step);
      }
    } catch (const SeedTooFarError&) {
      return std::nullopt;
    }
    const Eigen::MatrixXd JtJ =
        J.transpose() * J + opt.tikhonov * Eigen::MatrixXd::Identity(unknowns, unknowns);
    const Eigen::VectorXd step = JtJ.ldlt().solve(-J.transpose() * r.vec);
    if (!step.allFinite()) return std::nullopt;

    bool accepted = false;
    Eigen::VectorXd trial_step = step;
    for (int halving = 0; halving <= opt.max_halvings; ++halving) {
      ShootingState trial = detail::advance_state(M, s, frame, perp, trial_step);
      if (trial.t < t_min) {
        log_at(LogLevel::debug, "newton: t collapsed to %.3e", trial.t);
        return std::nullopt;
      }
      if (trial.t > 1e4) return std::nullopt;
      try {
        const detail::ResidualParts rt = detail::residual_parts(f, trial, res_steps(trial.t));
        if (rt.norm < r.norm) {
          s = trial;
          r = rt;
          min_margin = std::min(min_margin, rt.cut_margin);
          accepted = true;
          break;
        }
      } catch (const SeedTooFarError&) {
      }
      trial_step *= 0.5;
    }
    if (!accepted) return std::nullopt;
    ++iterations;
  }
  if (r.norm >= opt.tol) return std::nullopt;

  if (min_margin < 1e-3) {
    const int steps = 2 * std::max(1, opt.steps_multiplier) * M.steps_for(s.t);
    try {
      const detail::ResidualParts rv = detail::residual_parts(f, s, steps);
      if (rv.norm >= opt.tol) return std::nullopt;
      r = rv;
    } catch (const SeedTooFarError&) {
      return std::nullopt;
    }
  }

  TranslatedPointRecord rec;
  rec.state = s;
  rec.residual_norm = r.norm;
  rec.geodesic = M.geodesic({s.x, s.t * s.v}, 1.0, res_steps(s.t));
  rec.iterations = iterations;
  return rec;
}

/// Zeros of (log_x(f(x)), df^T v - v) over the unit tangent bundle: the
/// t = 0 stratum of translated points. Returns deduplicated records.
inline std::vector<TranslatedPointRecord> fixed_point_solve(const SmoothMap& f,
                                                            const SolverOptions& opt = {});

/// Scan a time-shift window (a, b]: deterministic seeding over SM times a
/// shift grid, Gauss-Newton on every seed, deduplication, records sorted
/// by shift.
inline std::vector<TranslatedPointRecord> window_scan(const SmoothMap& f, double a, double b,
                                                      const SolverOptions& opt = {});

/// Assign family structure: single-linkage clusters (radius link_radius in
/// sm_distance plus shift gap); wide, well-populated clusters become one
/// degenerate-family record with a local-PCA dimension estimate; everything
/// else collapses duplicates at dup_tol and stays isolated.
inline std::vector<TranslatedPointRecord> dedup_cluster(std::vector<TranslatedPointRecord> records,
                                                        const SmoothMap& f,
                                                        const SolverOptions& opt = {});

namespace detail {

inline double record_distance(const Manifold& M, const TranslatedPointRecord& a,
                              const TranslatedPointRecord& b) {
  return sm_distance(M, {a.state.x, a.state.v}, {b.state.x, b.state.v}) +
         std::abs(a.state.t - b.state.t);
}

inline bool record_order(const TranslatedPointRecord& a, const TranslatedPointRecord& b) {
  if (a.state.t != b.state.t) return a.state.t < b.state.t;
  for (int i = 0; i < a.state.x.size(); ++i)
    if (a.state.x[i] != b.state.x[i]) return a.state.x[i] < b.state.x[i];
  for (int i = 0; i < a.state.v.size(); ++i)
    if (a.state.v[i] != b.state.v[i]) return a.state.v[i] < b.state.v[i];
  return a.residual_norm < b.residual_norm;
}

/// Local dimension of a cluster: intrinsic coordinates of the nearest
/// members around the representative (tangent chart for the base point,
/// fiber chart orthogonal to the direction), then a PCA eigenvalue count.
/// The relative threshold absorbs the quadratic chart distortion that a
/// curved family accumulates over a finite neighborhood.
inline int pca_dimension(const Manifold& M, const std::vector<const TranslatedPointRecord*>& members,
                         const TranslatedPointRecord& center) {
  const int n = M.dim();
  std::vector<std::pair<double, const TranslatedPointRecord*>> by_dist;
  by_dist.reserve(members.size());
  for (const auto* rec : members)
    by_dist.emplace_back(record_distance(M, *rec, center), rec);
  std::sort(by_dist.begin(), by_dist.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  const Eigen::MatrixXd frame = tangent_frame(M, center.state.x);
  const Eigen::MatrixXd fiber =
      n > 1 ? perp_frame(M, center.state.x, center.state.v)
            : Eigen::MatrixXd::Zero(M.rep_dim(), 0);
  const int dloc = 2 * n - 1;
  std::vector<Eigen::VectorXd> coords;
  for (const auto& [d, rec] : by_dist) {
    if (coords.size() >= 48) break;
    if (coords.size() >= 20 && d > 0.8) break;
    if (M.dist(center.state.x, rec->state.x) >= 0.9 * M.injectivity_radius()) continue;
    Eigen::VectorXd c(dloc);
    c.head(n) = frame.transpose() * M.log_map(center.state.x, rec->state.x);
    const Eigen::VectorXd vb =
        M.transport_between(rec->state.x, center.state.x, rec->state.v);
    if (n > 1) c.tail(n - 1) = fiber.transpose() * vb;
    bool fresh = true;
    for (const auto& seen : coords)
      if ((seen - c).norm() < 1e-8) {
        fresh = false;
        break;
      }
    if (fresh) coords.push_back(std::move(c));
  }
  if (coords.size() < 4) return 0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dloc);
  for (const auto& c : coords) mean += c;
  mean /= static_cast<double>(coords.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dloc, dloc);
  for (const auto& c : coords) cov += (c - mean) * (c - mean).transpose();
  cov /= static_cast<double>(coords.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double top = eig.eigenvalues().maxCoeff();
  if (top < 1e-9) return 0;
  int dim = 0;
  for (int i = 0; i < eig.eigenvalues().size(); ++i)
    if (eig.eigenvalues()[i] > 0.12 * top) ++dim;
  return dim;
}

}  // namespace detail

inline std::vector<TranslatedPointRecord> dedup_cluster(std::vector<TranslatedPointRecord> records,
                                                        const SmoothMap& f,
                                                        const SolverOptions& opt) {
  const Manifold& M = f.manifold();
  std::sort(records.begin(), records.end(), detail::record_order);
  const int m = static_cast<int>(records.size());
  std::vector<int> parent(m);
  for (int i = 0; i < m; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const double dt = records[j].state.t - records[i].state.t;
      if (dt > opt.link_radius) break;
      const bool linked =
          dt < opt.t_link_tol * (1.0 + std::abs(records[i].state.t)) ||
          detail::record_distance(M, records[i], records[j]) < opt.link_radius;
      if (linked) {
        const int a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }

  std::vector<std::vector<int>> clusters;
  {
    std::vector<int> root_to_cluster(m, -1);
    for (int i = 0; i < m; ++i) {
      const int r = find(i);
      if (root_to_cluster[r] < 0) {
        root_to_cluster[r] = static_cast<int>(clusters.size());
        clusters.emplace_back();
      }
      clusters[root_to_cluster[r]].push_back(i);
    }
  }

  std::vector<TranslatedPointRecord> out;
  int next_family = 0;
  for (const auto& members : clusters) {
    double diameter = 0.0;
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b)
        diameter = std::max(
            diameter, detail::record_distance(M, records[members[a]], records[members[b]]));

    if (diameter > opt.family_diameter &&
        static_cast<int>(members.size()) >= opt.family_min_members) {
      int best = members.front();
      for (int idx : members)
        if (records[idx].residual_norm < records[best].residual_norm) best = idx;
      TranslatedPointRecord rep = records[best];
      rep.is_family = true;
      rep.family_id = next_family++;
      rep.cluster_size = static_cast<int>(members.size());
      rep.cluster_diameter = diameter;
      rep.nondegenerate = false;
      std::vector<const TranslatedPointRecord*> all;
      all.reserve(members.size());
      for (int idx : members) all.push_back(&records[idx]);
      rep.family_dim = std::max(1, detail::pca_dimension(M, all, rep));
      rep.kernel_dim = rep.family_dim;
      out.push_back(std::move(rep));
      continue;
    }

    std::vector<int> taken;
    for (int idx : members) {
      bool duplicate = false;
      for (int rep_idx : taken)
        if (detail::record_distance(M, records[idx], records[rep_idx]) < opt.dup_tol) {
          if (records[idx].residual_norm < records[rep_idx].residual_norm)
            records[rep_idx] = records[idx];
          duplicate = true;
          break;
        }
      if (!duplicate) taken.push_back(idx);
    }
    for (int rep_idx : taken) {
      TranslatedPointRecord rep = records[rep_idx];
      rep.cluster_size = 1;
      out.push_back(std::move(rep));
    }
  }
  std::sort(out.begin(), out.end(), detail::record_order);
  return out;
}

namespace detail {

template <class SeedFn>
std::vector<TranslatedPointRecord> run_seeds(std::uint64_t count, int threads, SeedFn&& fn) {
  std::vector<TranslatedPointRecord> merged;
  if (threads <= 1) {
    for (std::uint64_t i = 0; i < count; ++i)
      if (auto rec = fn(i)) merged.push_back(std::move(*rec));
    return merged;
  }
  const int T = threads;
  std::vector<std::vector<TranslatedPointRecord>> buckets(T);
  std::vector<std::thread> pool;
  pool.reserve(T);
  for (int w = 0; w < T; ++w)
    pool.emplace_back([&, w] {
      for (std::uint64_t i = w; i < count; i += static_cast<std::uint64_t>(T))
        if (auto rec = fn(i)) buckets[w].push_back(std::move(*rec));
    });
  for (auto& th : pool) th.join();
  for (auto& b : buckets)
    for (auto& rec : b) merged.push_back(std::move(rec));
  return merged;
}

}  // namespace detail

inline std::vector<TranslatedPointRecord> window_scan(const SmoothMap& f, double a, double b,
                                                      const SolverOptions& opt) {
  if (!(0.0 < a && a < b)) throw std::invalid_argument("window must satisfy 0 < a < b");
  const Manifold& M = f.manifold();
  const std::vector<TangentVector> sm = sm_seed_points(M, opt);
  const int K = opt.shift_density;
  const double dt = (b - a) / K;
  const std::uint64_t total = sm.size() * static_cast<std::uint64_t>(K);
  log_at(LogLevel::info, "window scan (%g, %g]: %llu seeds", a, b,
         static_cast<unsigned long long>(total));

  std::vector<TranslatedPointRecord> found =
      detail::run_seeds(total, opt.threads, [&](std::uint64_t i) {
        const TangentVector& base = sm[i / K];
        const double t0 = a + (static_cast<double>(i % K) + 0.5) * dt;
        return newton_solve(f, {base.base, base.vec, t0}, opt);
      });
  log_at(LogLevel::info, "window scan: %zu converged", found.size());

  std::vector<TranslatedPointRecord> deduped = dedup_cluster(std::move(found), f, opt);
  std::vector<TranslatedPointRecord> in_window;
  for (auto& rec : deduped)
    if (rec.state.t > a && rec.state.t <= b) in_window.push_back(std::move(rec));
  return in_window;
}

namespace detail {

struct FixedPointResidual {
  Eigen::VectorXd vec;
  double norm;
};

inline FixedPointResidual fixed_point_residual(const SmoothMap& f, const TangentVector& s) {
  const Manifold& M = f.manifold();
  const Eigen::VectorXd fx = f.eval(s.base);
  if (M.dist(s.base, fx) >= M.injectivity_radius()) throw SeedTooFarError();
  FixedPointResidual out;
  const Eigen::VectorXd pos = M.log_map(s.base, fx);
  const Eigen::VectorXd vel = f.adjoint_differential(s.base, M.transport_between(s.base, fx, s.vec)) - s.vec;
  out.vec.resize(pos.size() + vel.size());
  out.vec << pos, vel;
  out.norm = out.vec.norm();
  return out;
}

}  // namespace detail

inline std::vector<TranslatedPointRecord> fixed_point_solve(const SmoothMap& f,
                                                            const SolverOptions& opt) {
  const Manifold& M = f.manifold();
  const int n = M.dim();
  const int unknowns = 2 * n - 1;
  const std::vector<TangentVector> sm = sm_seed_points(M, opt);

  auto solve_one = [&](std::uint64_t i) -> std::optional<TranslatedPointRecord> {
    TangentVector s = sm[i];
    detail::FixedPointResidual r;
    try {
      r = detail::fixed_point_residual(f, s);
    } catch (const SeedTooFarError&) {
      return std::nullopt;
    }
    for (int iter = 0; iter < opt.max_iters && r.norm >= opt.tol; ++iter) {
      const Eigen::MatrixXd frame = tangent_frame(M, s.base);
      const Eigen::MatrixXd perp = detail::perp_frame(M, s.base, s.vec);
      auto advance = [&](const Eigen::VectorXd& dz) {
        TangentVector out;
        out.base = exp_map(M, s.base, frame * dz.head(n));
        Eigen::VectorXd v = s.vec;
        if (n > 1) v += perp * dz.tail(n - 1);
        v = M.project_tangent(out.base, M.transport_between(s.base, out.base, v));
        out.vec = v / v.norm();
        return out;
      };
      Eigen::MatrixXd J(r.vec.size(), unknowns);
      try {
        for (int k = 0; k < unknowns; ++k) {
          Eigen::VectorXd dz = Eigen::VectorXd::Zero(unknowns);
          dz[k] = opt.fd_step;
          const Eigen::VectorXd rp = detail::fixed_point_residual(f, advance(dz)).vec;
          dz[k] = -opt.fd_step;
          const Eigen::VectorXd rm = detail::fixed_point_residual(f, advance(dz)).vec;
          J.col(k) = (rp - rm) / (2.0 * opt.fd_step);
        }
      } catch (const SeedTooFarError&) {
        return std::nullopt;
      }
      const Eigen::MatrixXd JtJ =
          J.transpose() * J + opt.tikhonov * Eigen::MatrixXd::Identity(unknowns, unknowns);
      Eigen::VectorXd step = JtJ.ldlt().solve(-J.transpose() * r.vec);
      if (!step.allFinite()) return std::nullopt;
      bool accepted = false;
      for (int halving = 0; halving <= opt.max_halvings; ++halving) {
        try {
          const TangentVector trial = advance(step);
          const detail::FixedPointResidual rt = detail::fixed_point_residual(f, trial);
          if (rt.norm < r.norm) {
            s = trial;
            r = rt;
            accepted = true;
            break;
          }
        } catch (const SeedTooFarError&) {
        }
        step *= 0.5;
      }
      if (!accepted) return std::nullopt;
    }
    if (r.norm >= opt.tol) return std::nullopt;
    TranslatedPointRecord rec;
    rec.state = {s.base, s.vec, 0.0};
    rec.residual_norm = r.norm;
    rec.geodesic = M.geodesic({s.base, Eigen::VectorXd::Zero(M.rep_dim())}, 0.0);
    return rec;
  };

  std::vector<TranslatedPointRecord> found =
      detail::run_seeds(sm.size(), opt.threads, solve_one);
  return dedup_cluster(std::move(found), f, opt);
}

/// Discrete path through the record's geodesic samples, landing exactly on
/// f(x_0); lives in Lambda(f) and is discrete-critical at solver tolerance.
inline DiscretePath record_to_path(const TranslatedPointRecord& rec,
                                   std::shared_ptr<const SmoothMap> f, int segments = 64) {
  const Manifold& M = f->manifold();
  const TangentVector& init = rec.geodesic.initial;
  const double duration = rec.geodesic.duration;
  const int per =
      std::max(1, (M.steps_for(init.vec.norm() * duration) + segments - 1) / segments);
  const GeodesicArc arc = M.geodesic(init, duration, segments * per);
  std::vector<Eigen::VectorXd> nodes;
  nodes.reserve(segments + 1);
  for (int i = 0; i <= segments; ++i) nodes.push_back(arc.points[i * per]);
  nodes.back() = f->eval(nodes.front());
  return DiscretePath(std::move(f), std::move(nodes));
}

/// Direct check of the defining conditions at a record: geodesic closure
/// through f, the adjoint velocity identity, and (for isometry kinds) the
/// unit conformal factor of the lifted direction.
struct DefinitionDefects {
  double closure;
  double velocity;
  double conformal;
};

inline DefinitionDefects definition_defects(const SmoothMap& f, const TranslatedPointRecord& rec) {
  const Manifold& M = f.manifold();
  const ShootingState& s = rec.state;
  Eigen::VectorXd y, ydot;
  M.geodesic_endpoint({s.x, s.t * s.v}, 1.0, y, ydot);
  const Eigen::VectorXd fx = f.eval(s.x);
  DefinitionDefects d{};
  d.closure = M.dist(y, fx);
  const Eigen::VectorXd moved = M.transport_between(y, fx, ydot);
  d.velocity = (f.adjoint_differential(s.x, moved) - s.t * s.v).norm();
  d.conformal = std::abs(f.inverse_adjoint(s.x, s.v).norm() - 1.0);
  return d;
}

}  // namespace tpoint
