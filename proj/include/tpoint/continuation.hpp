#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <tpoint/pathspace.hpp>
#include <tpoint/solver.hpp>

namespace tpoint {

/// The same family traversed backward: at(s) = base.at(1 - s). Transporting
/// along a family and then along its reversal is the identity up to a shift
/// budget of twice the family's displacement.
class ReversedHomotopy final : public Homotopy {
 public:
  explicit ReversedHomotopy(std::shared_ptr<const Homotopy> base)
      : Homotopy(base->manifold_ptr(), base->track_samples()), base_(std::move(base)) {}
  std::string kind() const override { return base_->kind() + "-reversed"; }
  std::shared_ptr<const SmoothMap> at(double s) const override { return base_->at(1.0 - s); }

 private:
  std::shared_ptr<const Homotopy> base_;
};

namespace detail {

/// Closed-form inverse for the concrete map kinds. Track paths need a
/// constraint sending their first node to their last; for a family that does
/// not start at the identity this requires inverting the starting map.
inline std::shared_ptr<const SmoothMap> inverse_map(const SmoothMap& f) {
  if (dynamic_cast<const IdentityMap*>(&f))
    return std::make_shared<IdentityMap>(f.manifold_ptr());
  if (const auto* rot = dynamic_cast<const RotationMap*>(&f))
    return std::make_shared<RotationMap>(f.manifold_ptr(), rot->axis(), -rot->angle());
  if (const auto* flow = dynamic_cast<const FlowMap*>(&f))
    return std::make_shared<FlowMap>(f.manifold_ptr(), flow->field(), -flow->epsilon());
  if (const auto* aff = dynamic_cast<const TorusAffineMap*>(&f)) {
    auto torus = std::dynamic_pointer_cast<const FlatTorus>(f.manifold_ptr());
    const Eigen::MatrixXd Ainv = aff->linear().inverse();
    return std::make_shared<TorusAffineMap>(torus, Ainv,
                                            Eigen::VectorXd(-Ainv * aff->shift()));
  }
  if (const auto* wave = dynamic_cast<const TorusWaveMap*>(&f)) {
    auto torus = std::dynamic_pointer_cast<const FlatTorus>(f.manifold_ptr());
    auto unshift = TorusAffineMap::translation(torus, -wave->shift());
    auto unbend = std::make_shared<TorusWaveMap>(torus, -wave->amplitude(),
                                                 Eigen::VectorXd::Zero(2));
    return std::make_shared<CompositionMap>(unbend, unshift);
  }
  if (const auto* comp = dynamic_cast<const CompositionMap*>(&f))
    return std::make_shared<CompositionMap>(inverse_map(*comp->inner_ptr()),
                                            inverse_map(*comp->outer_ptr()));
  throw std::invalid_argument("no closed-form inverse for map kind " + f.kind());
}

template <typename Fn>
inline void parallel_indices(std::size_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// The curve s -> f_s(x) a family drags a base point along, discretized as a
/// path from f_0(x) to f_1(x). Its energy prices the transport of loops.
struct HomotopyTrack {
  Eigen::VectorXd x;
  DiscretePath track;
  double energy = 0.0;
};

inline HomotopyTrack homotopy_track(const Homotopy& H, const Eigen::VectorXd& x) {
  const int S = std::max(2, H.track_samples());
  std::vector<Eigen::VectorXd> nodes;
  nodes.reserve(S);
  for (int i = 0; i < S; ++i) {
    const double s = static_cast<double>(i) / (S - 1);
    nodes.push_back(H.at(s)->eval(x));
  }
  std::shared_ptr<const SmoothMap> start = H.at(0.0);
  std::shared_ptr<const SmoothMap> cons = H.at(1.0);
  if (!dynamic_cast<const IdentityMap*>(start.get()))
    cons = std::make_shared<CompositionMap>(cons, detail::inverse_map(*start));
  DiscretePath track(std::move(cons), std::move(nodes));
  const double e = energy(track);
  return {x, std::move(track), e};
}

/// Grid estimate of the displacement sup_x sqrt(E(s -> f_s(x))). The true
/// value is a supremum over the whole manifold, so the estimate is a lower
/// bound; the doubled-density rerun makes the residual grid error visible.
struct DeltaReport {
  double value = 0.0;
  double coarse = 0.0;
  double refined = 0.0;
  int grid = 0;
  bool converged = true;
};

namespace detail {

inline std::vector<Eigen::VectorXd> base_grid(const Manifold& M, int g) {
  std::vector<Eigen::VectorXd> pts;
  if (const auto* torus = dynamic_cast<const FlatTorus*>(&M)) {
    const int n = M.dim();
    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(g);
    pts.reserve(total);
    for (std::size_t k = 0; k < total; ++k) {
      Eigen::VectorXd x(n);
      std::size_t rem = k;
      for (int d = 0; d < n; ++d) {
        const auto i = rem % static_cast<std::size_t>(g);
        rem /= static_cast<std::size_t>(g);
        x[d] = torus->periods()[d] * (static_cast<double>(i) + 0.5) / g;
      }
      pts.push_back(std::move(x));
    }
    return pts;
  }
  if (M.dim() == 2 && M.rep_dim() == 3) {
    Eigen::Vector3d scale(1.0, 1.0, 1.0);
    if (const auto* sphere = dynamic_cast<const Sphere*>(&M))
      scale.setConstant(sphere->radius());
    else if (const auto* ell = dynamic_cast<const Ellipsoid*>(&M))
      scale = ell->semi_axes();
    pts.reserve(static_cast<std::size_t>(g) * g);
    for (int i = 0; i < g; ++i) {
      const double z = -1.0 + 2.0 * (i + 0.5) / g;
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      for (int j = 0; j < g; ++j) {
        const double a = 2.0 * M_PI * (j + 0.5) / g;
        Eigen::VectorXd x(3);
        x << scale[0] * rho * std::cos(a), scale[1] * rho * std::sin(a), scale[2] * z;
        M.project_point(x);
        pts.push_back(std::move(x));
      }
    }
    return pts;
  }
  if (M.dim() == 3 && M.rep_dim() == 4) {
    pts.reserve(static_cast<std::size_t>(g) * g * g);
    for (int i = 0; i < g; ++i) {
      const double eta = std::asin(std::sqrt((i + 0.5) / g));
      for (int j = 0; j < g; ++j) {
        const double xi1 = 2.0 * M_PI * (j + 0.5) / g;
        for (int k = 0; k < g; ++k) {
          const double xi2 = 2.0 * M_PI * (k + 0.5) / g;
          Eigen::VectorXd x(4);
          x << std::cos(eta) * std::cos(xi1), std::cos(eta) * std::sin(xi1),
              std::sin(eta) * std::cos(xi2), std::sin(eta) * std::sin(xi2);
          M.project_point(x);
          pts.push_back(std::move(x));
        }
      }
    }
    return pts;
  }
  throw std::invalid_argument("no base grid rule for manifold kind " + M.kind());
}

}  // namespace detail

inline DeltaReport delta(const Homotopy& H, int grid = 20) {
  if (grid < 20) throw std::invalid_argument("displacement grid density must be at least 20");
  const auto sup_at = [&](int g) {
    double best = 0.0;
    for (const auto& x : detail::base_grid(H.manifold(), g))
      best = std::max(best, shift(homotopy_track(H, x).track));
    return best;
  };
  DeltaReport rep;
  rep.grid = grid;
  rep.coarse = sup_at(grid);
  rep.refined = sup_at(2 * grid);
  rep.value = std::max(rep.coarse, rep.refined);
  rep.converged = std::abs(rep.refined - rep.coarse) < 1e-3;
  if (!rep.converged)
    log_at(LogLevel::info,
           "displacement grid not converged: %.6f at density %d vs %.6f doubled",
           rep.coarse, rep.grid, rep.refined);
  return rep;
}

/// Drag a loop through a family: append the track of its base point. The
/// result satisfies the endpoint constraint of the final map, and its shift
/// exceeds the original by at most the family displacement.
inline DiscretePath tau_transport(const Homotopy& H, const DiscretePath& alpha) {
  const Manifold& M = H.manifold();
  if (M.dist(alpha.nodes().back(), H.at(0.0)->eval(alpha.node(0))) > 1e-8)
    throw std::invalid_argument("transport needs a path closed under the starting map");
  HomotopyTrack tr = homotopy_track(H, alpha.node(0));
  DiscretePath out = concatenate(alpha, tr.track);
  if (M.dist(out.nodes().back(), H.at(1.0)->eval(out.node(0))) > 1e-8)
    throw std::runtime_error("transported path missed its endpoint constraint");
  return out;
}

/// One solution branch dragged from s = 0 to s = 1. The trace records every
/// accepted parameter value with the shift the branch carried there.
struct BranchTrace {
  int source = 0;
  std::vector<double> s_grid;
  std::vector<double> t_trace;
  bool lost = false;
  double lost_at = 0.0;
  bool swapped = false;
  std::optional<TranslatedPointRecord> final_record;
};

struct ContinuationResult {
  std::vector<BranchTrace> branches;
  std::vector<TranslatedPointRecord> records;
};

/// Predictor-corrector continuation: each converged state seeds the solve for
/// the next parameter value. A failing step shrinks the parameter increment
/// down to 1/320 before the branch is declared lost; losing a branch is an
/// outcome, not an error. Branch identity is nearest-neighbor in the
/// deduplication metric, and a step whose assignment crosses two branches
/// flags both as swapped.
inline ContinuationResult continue_solutions(const Homotopy& H,
                                             const std::vector<TranslatedPointRecord>& start,
                                             int steps = 20, const SolverOptions& opt = {}) {
  if (steps < 1) throw std::invalid_argument("continuation needs at least one step");
  const Manifold& M = H.manifold();
  const double floor_ds = std::min(1.0 / 320.0, 1.0 / steps);

  struct Branch {
    BranchTrace trace;
    ShootingState state;
    TranslatedPointRecord rec;
    bool alive = true;
  };
  std::vector<Branch> branches(start.size());
  for (std::size_t i = 0; i < start.size(); ++i) {
    auto& b = branches[i];
    b.trace.source = static_cast<int>(i);
    b.trace.s_grid.push_back(0.0);
    b.trace.t_trace.push_back(start[i].state.t);
    b.state = start[i].state;
    b.rec = start[i];
  }

  for (int k = 0; k < steps; ++k) {
    const double s0 = static_cast<double>(k) / steps;
    const double s1 = static_cast<double>(k + 1) / steps;
    std::vector<ShootingState> prev(branches.size());
    for (std::size_t i = 0; i < branches.size(); ++i) prev[i] = branches[i].state;

    detail::parallel_indices(branches.size(), opt.threads, [&](std::size_t i) {
      auto& b = branches[i];
      if (!b.alive) return;
      double cur = s0;
      double ds = s1 - s0;
      while (cur < s1 - 1e-12) {
        const double target = std::min(cur + ds, s1);
        bool ok = false;
        std::optional<TranslatedPointRecord> sol;
        try {
          const auto f = H.at(target);
          sol = newton_solve(*f, b.state, opt);
          if (sol) {
            const double moved =
                sm_distance(M, {b.state.x, b.state.v}, {sol->state.x, sol->state.v}) +
                std::abs(sol->state.t - b.state.t);
            ok = moved < 1.0;
          }
        } catch (const std::exception&) {
          ok = false;
        }
        if (ok) {
          b.state = sol->state;
          b.rec = *sol;
          b.trace.s_grid.push_back(target);
          b.trace.t_trace.push_back(sol->state.t);
          cur = target;
        } else {
          ds *= 0.5;
          if (ds < floor_ds * (1.0 - 1e-9)) {
            b.alive = false;
            b.trace.lost = true;
            b.trace.lost_at = cur;
            log_at(LogLevel::info, "branch %d lost at s = %.4f", b.trace.source, cur);
            return;
          }
        }
      }
    });

    for (std::size_t i = 0; i < branches.size(); ++i) {
      if (!branches[i].alive) continue;
      for (std::size_t j = i + 1; j < branches.size(); ++j) {
        if (!branches[j].alive) continue;
        const TranslatedPointRecord pi{ShootingState{prev[i].x, prev[i].v, prev[i].t}};
        const TranslatedPointRecord pj{ShootingState{prev[j].x, prev[j].v, prev[j].t}};
        const TranslatedPointRecord ni{ShootingState{branches[i].state.x, branches[i].state.v,
                                                     branches[i].state.t}};
        const TranslatedPointRecord nj{ShootingState{branches[j].state.x, branches[j].state.v,
                                                     branches[j].state.t}};
        const double dii = detail::record_distance(M, ni, pi);
        const double dij = detail::record_distance(M, ni, pj);
        const double djj = detail::record_distance(M, nj, pj);
        const double dji = detail::record_distance(M, nj, pi);
        const bool crossed = dij < dii && dji < djj;
        const bool merged = detail::record_distance(M, ni, nj) < opt.dup_tol;
        if (crossed || merged) {
          branches[i].trace.swapped = true;
          branches[j].trace.swapped = true;
        }
      }
    }
  }

  ContinuationResult out;
  out.branches.reserve(branches.size());
  for (auto& b : branches) {
    if (b.alive) {
      b.trace.final_record = b.rec;
      out.records.push_back(b.rec);
    }
    out.branches.push_back(std::move(b.trace));
  }
  return out;
}

}  // namespace tpoint
