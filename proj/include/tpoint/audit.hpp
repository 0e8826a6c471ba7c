#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <tpoint/continuation.hpp>
#include <tpoint/jacobi.hpp>

namespace tpoint {

enum class Verdict { pass, fail, not_applicable, hypothesis_violated };

inline std::string verdict_label(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::not_applicable: return "not-applicable";
    case Verdict::hypothesis_violated: return "hypothesis-violated";
  }
  return "unknown";
}

inline bool verdict_ok(Verdict v) {
  return v == Verdict::pass || v == Verdict::not_applicable;
}

/// Everything one audit run needs: the map under audit (directly or as the
/// endpoint of a family), the shift window, and the topological inputs the
/// count bounds compare against. betti_sum and cup_length are configuration,
/// not computed; the shipped defaults cover unit tangent bundles of round
/// spheres (dimension 2: total Betti number 2; dimension 3: total 4).
struct AuditConfig {
  std::shared_ptr<const Manifold> manifold;
  std::shared_ptr<const SmoothMap> map;
  std::shared_ptr<const Homotopy> homotopy;
  double window_a = 0.0;
  double window_b = 0.0;
  std::optional<double> zoll_length;
  int betti_sum = 0;
  int cup_length = 1;
  int k_max = 3;
  int delta_grid = 20;
  double class_tolerance = 0.2;
  std::vector<Eigen::VectorXd> torus_classes;
  std::optional<bool> run_unbounded;
  std::optional<double> unbounded_width;
  SolverOptions solver;
  int hessian_segments = 32;
};

inline int default_betti_sum(const Manifold& M) {
  if (M.kind() == "round-sphere" && M.dim() == 2) return 2;
  if (M.kind() == "round-sphere" && M.dim() == 3) return 4;
  return 1;
}

inline void validate(const AuditConfig& cfg) {
  if (!cfg.map && !cfg.homotopy)
    throw std::invalid_argument("audit config needs a map or a homotopy");
  if (!(0.0 < cfg.window_a && cfg.window_a < cfg.window_b))
    throw std::invalid_argument("audit window must satisfy 0 < a < b");
  if (cfg.zoll_length && *cfg.zoll_length <= 0.0)
    throw std::invalid_argument("closed-geodesic length must be positive");
  if (cfg.betti_sum < 0) throw std::invalid_argument("betti sum must be at least 1");
}

namespace detail {

/// Default-resolution endpoint error grows linearly with arc length on the
/// integrated manifolds; flat tori integrate exactly and need no scaling.
inline SolverOptions long_arc_options(const Manifold& M, SolverOptions opt, double arc_length) {
  if (dynamic_cast<const FlatTorus*>(&M)) return opt;
  const int needed = arc_length <= 60.0 ? 2 : 3;
  opt.steps_multiplier = std::max(opt.steps_multiplier, needed);
  return opt;
}

inline bool in_window(double t, double a, double b) {
  return t > a + 1e-12 && t <= b + 1e-12;
}

}  // namespace detail

/// Re-solve a record with its shift raised by k whole circuits. On a manifold
/// whose geodesics all close up at length ell, every record must extend this
/// way; failure flags either a solver defect or a metric without the closure
/// property.
inline TranslatedPointRecord tower_extend(const SmoothMap& f, const TranslatedPointRecord& rec,
                                          int k, double ell, const SolverOptions& opt = {}) {
  if (k < 1) throw std::invalid_argument("tower level must be positive");
  if (ell <= 0.0) throw std::invalid_argument("closed-geodesic length must be positive");
  const Manifold& M = f.manifold();
  const double target = rec.state.t + k * ell;
  const SolverOptions lopt = detail::long_arc_options(M, opt, target);
  const auto sol = newton_solve(f, {rec.state.x, rec.state.v, target}, lopt);
  if (!sol)
    throw std::runtime_error("tower extension failed to re-converge at shift " +
                             std::to_string(target));
  if (sol->residual_norm >= 1e-8)
    throw std::runtime_error("tower extension residual " +
                             std::to_string(sol->residual_norm) + " exceeds 1e-8");
  if (std::abs(sol->state.t - target) >= 1e-6)
    throw std::runtime_error("tower extension drifted off the expected shift by " +
                             std::to_string(sol->state.t - target));
  return *sol;
}

struct TowerExtension {
  int source = 0;
  double t_from = 0.0;
  double t_to = 0.0;
  double drift = 0.0;
  double moved = 0.0;
  bool ok = false;
};

struct TowerAudit {
  Verdict verdict = Verdict::not_applicable;
  std::vector<TowerExtension> extensions;
  int matched = 0;
  std::vector<double> unmatched_base;
  std::vector<double> unmatched_upper;
  double worst_drift = 0.0;
  std::string note;
};

/// Shift-periodicity audit: every record must extend one level up, and the
/// record set one window higher must be exactly the translate of this one.
inline TowerAudit audit_zoll_tower(const SmoothMap& f,
                                   const std::vector<TranslatedPointRecord>& records,
                                   double window_a, double window_b,
                                   std::optional<double> ell, const SolverOptions& opt = {}) {
  TowerAudit out;
  if (!ell) {
    out.verdict = Verdict::not_applicable;
    out.note = "no closed-geodesic length configured";
    return out;
  }
  const Manifold& M = f.manifold();
  const double L = *ell;
  bool all_ok = true;
  for (std::size_t i = 0; i < records.size(); ++i) {
    TowerExtension ext;
    ext.source = static_cast<int>(i);
    ext.t_from = records[i].state.t;
    try {
      const TranslatedPointRecord up = tower_extend(f, records[i], 1, L, opt);
      ext.t_to = up.state.t;
      ext.drift = up.state.t - records[i].state.t - L;
      ext.moved = sm_distance(M, {records[i].state.x, records[i].state.v},
                              {up.state.x, up.state.v});
      ext.ok = true;
      out.worst_drift = std::max(out.worst_drift, std::abs(ext.drift));
    } catch (const std::runtime_error& e) {
      ext.ok = false;
      all_ok = false;
      if (!out.note.empty()) out.note += "; ";
      out.note += e.what();
    }
    out.extensions.push_back(ext);
  }

  const SolverOptions sopt = detail::long_arc_options(M, opt, window_b + L);
  std::vector<TranslatedPointRecord> upper = window_scan(f, window_a + L, window_b + L, sopt);
  std::vector<double> base_t, upper_t;
  for (const auto& r : records) base_t.push_back(r.state.t + L);
  for (const auto& r : upper) upper_t.push_back(r.state.t);
  std::sort(base_t.begin(), base_t.end());
  std::sort(upper_t.begin(), upper_t.end());
  const double match_tol = std::max(opt.dup_tol, 1e-4);
  std::size_t i = 0, j = 0;
  while (i < base_t.size() && j < upper_t.size()) {
    const double gap = base_t[i] - upper_t[j];
    if (std::abs(gap) <= match_tol) {
      ++out.matched;
      ++i;
      ++j;
    } else if (gap > 0.0) {
      out.unmatched_upper.push_back(upper_t[j++]);
    } else {
      out.unmatched_base.push_back(base_t[i++]);
    }
  }
  while (i < base_t.size()) out.unmatched_base.push_back(base_t[i++]);
  while (j < upper_t.size()) out.unmatched_upper.push_back(upper_t[j++]);

  const bool bijective = out.unmatched_base.empty() && out.unmatched_upper.empty();
  out.verdict = (all_ok && bijective) ? Verdict::pass : Verdict::fail;
  if (!bijective) {
    if (!out.note.empty()) out.note += "; ";
    out.note += "translate of the window is not a bijection";
  }
  return out;
}

struct CountAudit {
  Verdict verdict = Verdict::not_applicable;
  int clusters = 0;
  int betti_sum = 0;
  int slack = 0;
  int degenerate = 0;
  int borderline = 0;
  std::string note;
};

/// Count bound audit: with every record nondegenerate, the number of distinct
/// solution clusters must reach the total Betti number of the unit tangent
/// bundle. Any degeneracy voids the count hypothesis, and the audit says so
/// rather than passing vacuously.
inline CountAudit audit_morse_count(const std::vector<TranslatedPointRecord>& records,
                                    int betti_sum) {
  CountAudit out;
  out.betti_sum = betti_sum;
  out.clusters = static_cast<int>(records.size());
  out.slack = out.clusters - betti_sum;
  for (const auto& r : records) {
    if (r.kernel_dim > 0 || !r.nondegenerate || r.is_family) ++out.degenerate;
    if (r.borderline) ++out.borderline;
  }
  if (records.empty()) {
    out.verdict = Verdict::fail;
    out.note = "no records in the window";
    return out;
  }
  if (out.degenerate > 0 || out.borderline > 0) {
    out.verdict = Verdict::hypothesis_violated;
    out.note = std::to_string(out.degenerate) + " degenerate and " +
               std::to_string(out.borderline) +
               " borderline records; the count bound assumes nondegeneracy";
    return out;
  }
  out.verdict = out.clusters >= betti_sum ? Verdict::pass : Verdict::fail;
  return out;
}

struct LocalizationAudit {
  Verdict verdict = Verdict::not_applicable;
  double allowance = 0.0;
  std::vector<double> nearest;
};

/// Interleaving localization: within the displacement budget of the family,
/// every multiple of the circuit length must attract at least one record.
inline LocalizationAudit audit_localization(const std::vector<TranslatedPointRecord>& records,
                                            double delta_value, double ell, int k_max) {
  if (ell <= 0.0) throw std::invalid_argument("closed-geodesic length must be positive");
  if (k_max < 1) throw std::invalid_argument("localization depth must be positive");
  LocalizationAudit out;
  out.allowance = delta_value + 1e-4;
  out.verdict = Verdict::pass;
  for (int k = 1; k <= k_max; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : records) best = std::min(best, std::abs(r.state.t - k * ell));
    out.nearest.push_back(best);
    if (!(best <= out.allowance)) out.verdict = Verdict::fail;
  }
  return out;
}

struct UnboundedAudit {
  Verdict verdict = Verdict::not_applicable;
  double width = 0.0;
  std::vector<int> window_counts;
  std::vector<double> class_lengths;
  std::vector<double> class_shifts;
  std::vector<double> matched_shifts;
  bool shifts_increasing = true;
  std::string note;
};

namespace detail {

inline std::vector<Eigen::VectorXd> default_lattice_classes(const FlatTorus& T, int count) {
  const int n = T.dim();
  const int m = count + 1;
  struct Cand {
    double len;
    Eigen::VectorXd q;
  };
  std::vector<Cand> cands;
  std::vector<int> q(n, -m);
  while (true) {
    bool zero = true, canonical = false;
    for (int d = 0; d < n; ++d)
      if (q[d] != 0) {
        zero = false;
        canonical = q[d] > 0;
        break;
      }
    if (!zero && canonical) {
      int g = 0;
      for (int d = 0; d < n; ++d) g = std::gcd(g, std::abs(q[d]));
      if (g == 1) {
        Eigen::VectorXd qv(n);
        double len2 = 0.0;
        for (int d = 0; d < n; ++d) {
          qv[d] = q[d];
          len2 += q[d] * T.periods()[d] * q[d] * T.periods()[d];
        }
        cands.push_back({std::sqrt(len2), std::move(qv)});
      }
    }
    int d = 0;
    while (d < n && ++q[d] > m) q[d++] = -m;
    if (d == n) break;
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.len != b.len) return a.len < b.len;
    for (int d = 0; d < a.q.size(); ++d)
      if (a.q[d] != b.q[d]) return a.q[d] < b.q[d];
    return false;
  });
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : cands) {
    if (static_cast<int>(out.size()) == count) break;
    out.push_back(c.q);
  }
  return out;
}

}  // namespace detail

/// Unbounded-shift audit: consecutive windows of the configured width must
/// each contain a record, so shifts keep appearing arbitrarily high. On a
/// flat torus the windows are cross-checked against lattice lengths: each
/// audited homotopy class must put a record near its closed-geodesic length.
inline UnboundedAudit audit_unbounded(const SmoothMap& f, int k_max, double width,
                                      const SolverOptions& opt = {},
                                      const std::vector<Eigen::VectorXd>& torus_classes = {},
                                      double class_tol = 0.2) {
  if (k_max < 1) throw std::invalid_argument("window count must be positive");
  if (width <= 0.0) throw std::invalid_argument("window width must be positive");
  const Manifold& M = f.manifold();
  UnboundedAudit out;
  out.width = width;
  out.verdict = Verdict::pass;
  std::vector<TranslatedPointRecord> pool;
  for (int k = 0; k < k_max; ++k) {
    const double a = std::max(k * width, 1e-3);
    const double b = (k + 1) * width;
    const SolverOptions sopt = detail::long_arc_options(M, opt, b);
    std::vector<TranslatedPointRecord> found = window_scan(f, a, b, sopt);
    out.window_counts.push_back(static_cast<int>(found.size()));
    if (found.empty()) out.verdict = Verdict::fail;
    for (auto& r : found) pool.push_back(std::move(r));
  }

  if (const auto* torus = dynamic_cast<const FlatTorus*>(&M)) {
    std::vector<Eigen::VectorXd> classes =
        torus_classes.empty() ? detail::default_lattice_classes(*torus, k_max) : torus_classes;
    for (const auto& q : classes) {
      double len2 = 0.0;
      for (int d = 0; d < torus->dim(); ++d)
        len2 += q[d] * torus->periods()[d] * q[d] * torus->periods()[d];
      const double target = std::sqrt(len2);
      out.class_lengths.push_back(target);
      double best_gap = std::numeric_limits<double>::infinity();
      double best_t = std::numeric_limits<double>::quiet_NaN();
      for (const auto& r : pool) {
        const double gap = std::abs(r.state.t - target);
        if (gap < best_gap) {
          best_gap = gap;
          best_t = r.state.t;
        }
      }
      out.class_shifts.push_back(best_t);
      if (!(best_gap <= class_tol)) {
        out.verdict = Verdict::fail;
        if (!out.note.empty()) out.note += "; ";
        out.note += "no record near lattice length " + std::to_string(target);
      }
    }
    for (const auto& r : pool)
      for (double target : out.class_lengths)
        if (std::abs(r.state.t - target) <= class_tol) {
          out.matched_shifts.push_back(r.state.t);
          break;
        }
    std::sort(out.matched_shifts.begin(), out.matched_shifts.end());
    out.matched_shifts.erase(
        std::unique(out.matched_shifts.begin(), out.matched_shifts.end(),
                    [](double a, double b) { return b - a <= 1e-6; }),
        out.matched_shifts.end());
    out.shifts_increasing = out.matched_shifts.size() >= classes.size();
  }
  return out;
}

struct PresenceAudit {
  Verdict verdict = Verdict::not_applicable;
  int distinct_mod_ell = 0;
  int threshold = 0;
  bool family_present = false;
};

/// Few distinct shifts modulo the circuit length force a continuum of
/// solutions; the audit demands a degenerate family flag whenever the
/// distinct count drops below 1 + cup_length.
inline PresenceAudit audit_family_presence(const std::vector<TranslatedPointRecord>& records,
                                           double ell, int cup_length) {
  if (ell <= 0.0) throw std::invalid_argument("closed-geodesic length must be positive");
  PresenceAudit out;
  out.threshold = 1 + cup_length;
  std::vector<double> reduced;
  for (const auto& r : records) {
    double m = std::fmod(r.state.t, ell);
    if (m < 0.0) m += ell;
    reduced.push_back(m);
  }
  std::sort(reduced.begin(), reduced.end());
  const double tol = 1e-3;
  int distinct = 0;
  for (std::size_t i = 0; i < reduced.size(); ++i)
    if (i == 0 || reduced[i] - reduced[i - 1] > tol) ++distinct;
  if (distinct >= 2 && reduced.back() - reduced.front() > ell - tol) --distinct;
  out.distinct_mod_ell = distinct;
  for (const auto& r : records)
    if (r.is_family || r.kernel_dim > 0) out.family_present = true;
  if (distinct >= out.threshold) {
    out.verdict = Verdict::not_applicable;
    return out;
  }
  out.verdict = out.family_present ? Verdict::pass : Verdict::fail;
  return out;
}

/// The assembled outcome of one audited window: classified records sorted by
/// shift, the measured displacement when a family is configured, and every
/// verdict the configuration makes applicable.
struct SpectrumReport {
  std::string manifold_kind;
  std::string map_kind;
  double window_a = 0.0;
  double window_b = 0.0;
  std::optional<double> zoll_length;
  std::optional<double> delta_value;
  bool delta_converged = true;
  std::optional<bool> delta_below_half_ell;
  std::vector<TranslatedPointRecord> records;
  std::optional<TowerAudit> tower;
  std::optional<CountAudit> count;
  std::optional<LocalizationAudit> localization;
  std::optional<UnboundedAudit> unbounded;
  std::optional<PresenceAudit> presence;

  bool all_ok() const {
    bool ok = true;
    if (tower) ok = ok && verdict_ok(tower->verdict);
    if (count) ok = ok && verdict_ok(count->verdict);
    if (localization) ok = ok && verdict_ok(localization->verdict);
    if (unbounded) ok = ok && verdict_ok(unbounded->verdict);
    if (presence) ok = ok && verdict_ok(presence->verdict);
    return ok;
  }
};

/// Run every audit the configuration supports: scan, classify, measure the
/// displacement, then apply the tower, count, localization, presence, and
/// unbounded checks where their inputs exist.
inline SpectrumReport run_audit(const AuditConfig& cfg) {
  validate(cfg);
  std::shared_ptr<const SmoothMap> f = cfg.map ? cfg.map : cfg.homotopy->at(1.0);
  const Manifold& M = f->manifold();
  const int betti = cfg.betti_sum > 0 ? cfg.betti_sum : default_betti_sum(M);

  SpectrumReport rep;
  rep.manifold_kind = M.kind();
  rep.map_kind = f->kind();
  rep.window_a = cfg.window_a;
  rep.window_b = cfg.window_b;
  rep.zoll_length = cfg.zoll_length;

  const SolverOptions sopt = detail::long_arc_options(M, cfg.solver, cfg.window_b);
  std::vector<TranslatedPointRecord> found =
      window_scan(*f, cfg.window_a, cfg.window_b, sopt);
  ClassifyOptions copt;
  copt.segments = cfg.hessian_segments;
  copt.threads = cfg.solver.threads;
  rep.records = classify_records(f, found, copt);

  if (cfg.homotopy) {
    const DeltaReport dr = delta(*cfg.homotopy, cfg.delta_grid);
    rep.delta_value = dr.value;
    rep.delta_converged = dr.converged;
    if (cfg.zoll_length) rep.delta_below_half_ell = dr.value < 0.5 * *cfg.zoll_length;
  }

  rep.tower = audit_zoll_tower(*f, rep.records, cfg.window_a, cfg.window_b, cfg.zoll_length,
                               cfg.solver);

  if (cfg.zoll_length) {
    const double L = *cfg.zoll_length;
    std::vector<TranslatedPointRecord> first_window;
    for (const auto& r : rep.records)
      if (detail::in_window(r.state.t, cfg.window_a, std::min(cfg.window_b, cfg.window_a + L)))
        first_window.push_back(r);
    rep.count = audit_morse_count(first_window, betti);
    rep.presence = audit_family_presence(rep.records, L, cfg.cup_length);

    if (rep.delta_value && cfg.k_max >= 1) {
      std::vector<TranslatedPointRecord> pool = rep.records;
      const double reach = *rep.delta_value + 0.1;
      for (int k = 1; k <= cfg.k_max; ++k) {
        const double a = std::max(k * L - reach, 1e-3);
        const double b = k * L + reach;
        if (a > cfg.window_a && b < cfg.window_b) continue;
        const SolverOptions kopt = detail::long_arc_options(M, cfg.solver, b);
        for (auto& r : window_scan(*f, a, b, kopt)) pool.push_back(std::move(r));
      }
      rep.localization = audit_localization(pool, *rep.delta_value, L, cfg.k_max);
    }
  }

  const bool torus = dynamic_cast<const FlatTorus*>(&M) != nullptr;
  if (cfg.run_unbounded.value_or(torus) && cfg.k_max >= 1) {
    const double width = cfg.unbounded_width.value_or(
        cfg.zoll_length ? *cfg.zoll_length : cfg.window_b - cfg.window_a);
    rep.unbounded = audit_unbounded(*f, cfg.k_max, width, cfg.solver, cfg.torus_classes,
                                    cfg.class_tolerance);
  }
  return rep;
}

}  // namespace tpoint
