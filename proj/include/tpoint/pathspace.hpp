#pragma once

#include <algorithm>
#include <memory>
#include <utility>
#include <vector>

#include "tpoint/smoothmap.hpp"

namespace tpoint {

/// Broken-geodesic path x_0..x_N on [0,1] subject to x_N = f(x_0), where f is
/// the constraint map (identity for free loops). Parameter values are stored
/// explicitly so concatenations can keep exact breakpoints; they default to
/// the uniform grid. Immutable after construction.
class DiscretePath {
 public:
  DiscretePath(std::shared_ptr<const SmoothMap> constraint, std::vector<Eigen::VectorXd> nodes,
               std::vector<double> params = {})
      : constraint_(std::move(constraint)), nodes_(std::move(nodes)), params_(std::move(params)) {
    const Manifold& M = manifold();
    if (nodes_.size() < 2) throw std::invalid_argument("a path needs at least two nodes");
    for (auto& p : nodes_) M.project_point(p);
    if (params_.empty()) {
      const int N = segment_count();
      params_.resize(N + 1);
      for (int i = 0; i <= N; ++i) params_[i] = static_cast<double>(i) / N;
    }
    if (params_.size() != nodes_.size())
      throw std::invalid_argument("parameter grid does not match the node count");
    if (std::abs(params_.front()) > 1e-12 || std::abs(params_.back() - 1.0) > 1e-12)
      throw std::invalid_argument("parameters must span [0, 1]");
    params_.front() = 0.0;
    params_.back() = 1.0;
    for (std::size_t i = 0; i + 1 < params_.size(); ++i)
      if (params_[i + 1] <= params_[i])
        throw std::invalid_argument("parameters must be strictly increasing");
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i)
      if (M.dist(nodes_[i], nodes_[i + 1]) >= M.injectivity_radius())
        throw std::invalid_argument("consecutive nodes exceed the injectivity radius");
    if (M.dist(nodes_.back(), constraint_->eval(nodes_.front())) > 1e-9)
      throw std::invalid_argument("endpoint constraint violated");
  }

  const Manifold& manifold() const { return constraint_->manifold(); }
  const SmoothMap& constraint() const { return *constraint_; }
  std::shared_ptr<const SmoothMap> constraint_ptr() const { return constraint_; }
  int segment_count() const { return static_cast<int>(nodes_.size()) - 1; }
  const std::vector<Eigen::VectorXd>& nodes() const { return nodes_; }
  const std::vector<double>& params() const { return params_; }
  const Eigen::VectorXd& node(int i) const { return nodes_[i]; }
  double param(int i) const { return params_[i]; }

 private:
  std::shared_ptr<const SmoothMap> constraint_;
  std::vector<Eigen::VectorXd> nodes_;
  std::vector<double> params_;
};

/// Tangent vectors U_0..U_N along a path; admissible directions satisfy
/// U_N = df(U_0).
struct PathTangent {
  std::vector<Eigen::VectorXd> vectors;
};

/// How far a tangent is from the linearized endpoint constraint.
inline double linearization_defect(const DiscretePath& path, const PathTangent& tangent) {
  const auto& U = tangent.vectors;
  if (U.size() != path.nodes().size())
    throw std::invalid_argument("tangent size does not match the path");
  return (U.back() - path.constraint().differential(path.node(0), U.front())).norm();
}

/// Discrete energy: sum over segments of |log_{x_i}(x_{i+1})|^2 / dt_i.
/// Exact for geodesic segments traversed proportionally to parameter.
inline double energy(const DiscretePath& path) {
  const Manifold& M = path.manifold();
  double total = 0.0;
  for (int i = 0; i < path.segment_count(); ++i) {
    const double dt = path.param(i + 1) - path.param(i);
    total += M.log_map(path.node(i), path.node(i + 1)).squaredNorm() / dt;
  }
  return total;
}

/// Time-shift functional sqrt(E).
inline double shift(const DiscretePath& path) { return std::sqrt(energy(path)); }

/// Point on the broken-geodesic interpolation at parameter t in [0, 1].
inline Eigen::VectorXd path_sample(const DiscretePath& path, double t) {
  const Manifold& M = path.manifold();
  if (t <= 0.0) return path.node(0);
  if (t >= 1.0) return path.node(path.segment_count());
  const auto& ts = path.params();
  const int i =
      static_cast<int>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin()) - 1;
  const double lam = (t - ts[i]) / (ts[i + 1] - ts[i]);
  return exp_map(M, path.node(i), lam * M.log_map(path.node(i), path.node(i + 1)));
}

/// Discrete velocity of the segment leaving node i, evaluated at node i.
inline Eigen::VectorXd outgoing_velocity(const DiscretePath& path, int i) {
  const double dt = path.param(i + 1) - path.param(i);
  return path.manifold().log_map(path.node(i), path.node(i + 1)) / dt;
}

/// Discrete velocity of the segment arriving at node i, evaluated at node i.
inline Eigen::VectorXd incoming_velocity(const DiscretePath& path, int i) {
  const double dt = path.param(i) - path.param(i - 1);
  return -path.manifold().log_map(path.node(i), path.node(i - 1)) / dt;
}

/// Gradient of the discrete energy over the free nodes x_0..x_{N-1}
/// (x_N is eliminated through the constraint). Interior nodes get
/// 2(v^-_i - v^+_i); node 0 additionally pulls the final-segment term back
/// through df^T. Vanishes exactly at discrete critical points, where each
/// segment continues the previous one and df^T maps the arrival velocity to
/// the departure velocity.
inline std::vector<Eigen::VectorXd> first_variation(const DiscretePath& path) {
  const int N = path.segment_count();
  std::vector<Eigen::VectorXd> grad(N);
  for (int i = 1; i < N; ++i)
    grad[i] = 2.0 * (incoming_velocity(path, i) - outgoing_velocity(path, i));
  const Eigen::VectorXd arrival = incoming_velocity(path, N);
  grad[0] = 2.0 * (path.constraint().adjoint_differential(path.node(0), arrival) -
                   outgoing_velocity(path, 0));
  return grad;
}

inline double gradient_sup_norm(const std::vector<Eigen::VectorXd>& grad) {
  double sup = 0.0;
  for (const auto& g : grad) sup = std::max(sup, g.norm());
  return sup;
}

/// Path through the sample points of a geodesic, in Lambda(constraint).
inline DiscretePath sample_geodesic_path(const Manifold& M, const TangentVector& init,
                                         double duration,
                                         std::shared_ptr<const SmoothMap> constraint,
                                         int segments = 64) {
  const int per = std::max(
      1, (M.steps_for(init.vec.norm() * duration) + segments - 1) / segments);
  const GeodesicArc arc = M.geodesic(init, duration, segments * per);
  std::vector<Eigen::VectorXd> nodes;
  nodes.reserve(segments + 1);
  for (int i = 0; i <= segments; ++i) nodes.push_back(arc.points[i * per]);
  return DiscretePath(std::move(constraint), std::move(nodes));
}

/// Concatenation in Lambda(g o f): alpha (in Lambda(f)) traversed on [0, s],
/// beta (in Lambda(g), starting at alpha's endpoint) on [s, 1], with
/// s = sqrt(E(alpha)) / (sqrt(E(alpha)) + sqrt(E(beta))). This makes
/// sqrt(E) exactly additive. A vanishing-energy side contributes no nodes;
/// if both energies vanish the result is the constant path.
inline DiscretePath concatenate(const DiscretePath& alpha, const DiscretePath& beta) {
  const Manifold& M = alpha.manifold();
  if (M.dist(alpha.nodes().back(), beta.node(0)) >= 1e-9)
    throw std::invalid_argument("endpoint mismatch");
  auto combined = std::make_shared<CompositionMap>(beta.constraint_ptr(), alpha.constraint_ptr());
  const double ea = energy(alpha);
  const double eb = energy(beta);
  if (ea == 0.0 && eb == 0.0)
    return DiscretePath(combined, {alpha.node(0), alpha.node(0)});
  if (ea == 0.0) return DiscretePath(combined, beta.nodes(), beta.params());
  if (eb == 0.0) return DiscretePath(combined, alpha.nodes(), alpha.params());
  const double s = std::sqrt(ea) / (std::sqrt(ea) + std::sqrt(eb));
  std::vector<Eigen::VectorXd> nodes = alpha.nodes();
  std::vector<double> params;
  params.reserve(alpha.nodes().size() + beta.nodes().size() - 1);
  for (const double t : alpha.params()) params.push_back(s * t);
  for (std::size_t i = 1; i < beta.nodes().size(); ++i) {
    nodes.push_back(beta.node(static_cast<int>(i)));
    params.push_back(s + (1.0 - s) * beta.param(static_cast<int>(i)));
  }
  return DiscretePath(std::move(combined), std::move(nodes), std::move(params));
}

/// A negative time-shift restated as a positive-shift problem: (x, v) has
/// time-shift t < 0 for f exactly when (x, -v) has time-shift |t|, by
/// reversing the geodesic.
struct ReducedShiftProblem {
  TangentVector seed;
  double t_abs;

  /// Maps a solution (x', v', t') of the positive problem back to the
  /// negative-shift translated point it represents.
  static std::pair<TangentVector, double> restore(const TangentVector& sol, double t_pos) {
    return {{sol.base, -sol.vec}, -t_pos};
  }
};

inline ReducedShiftProblem reverse_reduction(const SmoothMap& /*f*/, const TangentVector& s,
                                             double t) {
  if (t >= 0.0)
    throw std::invalid_argument("reverse reduction only applies to negative time-shifts");
  return {{s.base, -s.vec}, -t};
}

}  // namespace tpoint
