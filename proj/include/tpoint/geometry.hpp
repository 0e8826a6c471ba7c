#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tpoint {

inline constexpr int kMaxRepDim = 8;

/// Thrown when a logarithm is requested at or beyond the injectivity radius.
struct CutLocusError : std::runtime_error {
  CutLocusError() : std::runtime_error("cut-locus") {}
};

/// A tangent vector attached to a base point. Coordinates are ambient for
/// embedded models and periodic chart coordinates for the flat torus.
struct TangentVector {
  Eigen::VectorXd base;
  Eigen::VectorXd vec;
};

/// A geodesic segment with its integration samples. Sample k sits at
/// parameter k * duration / steps; velocities are in parameter units, so the
/// segment's arc length is |duration| * |initial.vec|.
struct GeodesicArc {
  TangentVector initial;
  double duration = 0.0;
  int steps = 0;
  std::vector<Eigen::VectorXd> points;
  std::vector<Eigen::VectorXd> velocities;

  double speed() const { return initial.vec.norm(); }
  double length() const { return std::abs(duration) * speed(); }
  const Eigen::VectorXd& endpoint() const { return points.back(); }
  const Eigen::VectorXd& end_velocity() const { return velocities.back(); }
};

namespace detail {

// Fixed-step RK4 for the first-order geodesic system with per-step
// reprojection. Model supplies non-virtual accel_raw / project_raw /
// tangent_raw so the loop inlines fully; this is the hot path of the
// shooting solver.
template <class Model>
void rk4_geodesic_core(const Model& m, int d, double* x, double* v, double duration, int steps,
                       double* xs, double* vs) {
  const double h = duration / steps;
  std::array<double, kMaxRepDim> a1{}, a2{}, a3{}, a4{};
  std::array<double, kMaxRepDim> v2{}, v3{}, v4{};
  std::array<double, kMaxRepDim> tx{};
  auto record = [&](int k) {
    if (xs != nullptr) {
      std::copy(x, x + d, xs + static_cast<std::size_t>(k) * d);
      std::copy(v, v + d, vs + static_cast<std::size_t>(k) * d);
    }
  };
  record(0);
  for (int s = 0; s < steps; ++s) {
    m.accel_raw(x, v, a1.data());
    for (int i = 0; i < d; ++i) {
      tx[i] = x[i] + 0.5 * h * v[i];
      v2[i] = v[i] + 0.5 * h * a1[i];
    }
    m.accel_raw(tx.data(), v2.data(), a2.data());
    for (int i = 0; i < d; ++i) {
      tx[i] = x[i] + 0.5 * h * v2[i];
      v3[i] = v[i] + 0.5 * h * a2[i];
    }
    m.accel_raw(tx.data(), v3.data(), a3.data());
    for (int i = 0; i < d; ++i) {
      tx[i] = x[i] + h * v3[i];
      v4[i] = v[i] + h * a3[i];
    }
    m.accel_raw(tx.data(), v4.data(), a4.data());
    for (int i = 0; i < d; ++i) {
      x[i] += h / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
      v[i] += h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
    }
    m.project_raw(x);
    m.tangent_raw(x, v);
    record(s + 1);
  }
}

// Joint RK4 for the geodesic together with m Jacobi pairs (J, K), where K is
// the covariant derivative of J along the curve. In ambient coordinates
//   J' = K - <J, S(v)> n,   K' = R(v, J) v - <K, S(v)> n,
// with S the shape operator and n the unit normal; flat models drop the
// normal corrections and have R = 0.
template <class Model>
void rk4_jacobi_core(const Model& m, int d, int cols, const double* x0, const double* v0,
                     double duration, int steps, double* J, double* K, double* samples) {
  const double h = duration / steps;
  const int nj = d * cols;
  std::vector<double> st(static_cast<std::size_t>(2 * d + 2 * nj));
  double* x = st.data();
  double* v = x + d;
  double* j = v + d;
  double* k = j + nj;
  std::copy(x0, x0 + d, x);
  std::copy(v0, v0 + d, v);
  std::copy(J, J + nj, j);
  std::copy(K, K + nj, k);

  const int nstate = 2 * d + 2 * nj;
  std::vector<double> k1(nstate), k2(nstate), k3(nstate), k4(nstate), tmp(nstate);
  std::array<double, kMaxRepDim> curv{}, nrm{}, sv{};

  auto rhs = [&](const double* s, double* out) {
    const double* sx = s;
    const double* svel = s + d;
    const double* sj = s + 2 * d;
    const double* sk = sj + nj;
    double* ox = out;
    double* ov = out + d;
    double* oj = out + 2 * d;
    double* ok = oj + nj;
    for (int i = 0; i < d; ++i) ox[i] = svel[i];
    m.accel_raw(sx, svel, ov);
    const bool emb = m.embedded();
    if (emb) {
      m.normal_raw(sx, nrm.data());
      m.shape_raw(sx, svel, sv.data());
    }
    for (int c = 0; c < cols; ++c) {
      const double* jc = sj + c * d;
      const double* kc = sk + c * d;
      double* ojc = oj + c * d;
      double* okc = ok + c * d;
      m.curvature_raw(sx, svel, jc, curv.data());
      if (emb) {
        double js = 0.0, ks = 0.0;
        for (int i = 0; i < d; ++i) {
          js += jc[i] * sv[i];
          ks += kc[i] * sv[i];
        }
        for (int i = 0; i < d; ++i) {
          ojc[i] = kc[i] - js * nrm[i];
          okc[i] = curv[i] - ks * nrm[i];
        }
      } else {
        for (int i = 0; i < d; ++i) {
          ojc[i] = kc[i];
          okc[i] = curv[i];
        }
      }
    }
  };

  auto record = [&](int step) {
    if (samples != nullptr)
      std::copy(j, j + nj, samples + static_cast<std::size_t>(step) * nj);
  };
  record(0);
  for (int s = 0; s < steps; ++s) {
    rhs(st.data(), k1.data());
    for (int i = 0; i < nstate; ++i) tmp[i] = st[i] + 0.5 * h * k1[i];
    rhs(tmp.data(), k2.data());
    for (int i = 0; i < nstate; ++i) tmp[i] = st[i] + 0.5 * h * k2[i];
    rhs(tmp.data(), k3.data());
    for (int i = 0; i < nstate; ++i) tmp[i] = st[i] + h * k3[i];
    rhs(tmp.data(), k4.data());
    for (int i = 0; i < nstate; ++i)
      st[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    m.project_raw(x);
    m.tangent_raw(x, v);
    for (int c = 0; c < cols; ++c) {
      m.tangent_raw(x, j + c * d);
      m.tangent_raw(x, k + c * d);
    }
    record(s + 1);
  }
  std::copy(j, j + nj, J);
  std::copy(k, k + nj, K);
}

// Parallel transport of w along the geodesic of (x0, v0):  w' = -<w, S(v)> n.
template <class Model>
void rk4_transport_core(const Model& m, int d, const double* x0, const double* v0,
                        double duration, int steps, double* w) {
  if (!m.embedded()) return;
  const double h = duration / steps;
  const int nstate = 3 * d;
  std::vector<double> st(nstate), k1(nstate), k2(nstate), k3(nstate), k4(nstate), tmp(nstate);
  std::copy(x0, x0 + d, st.data());
  std::copy(v0, v0 + d, st.data() + d);
  std::copy(w, w + d, st.data() + 2 * d);
  std::array<double, kMaxRepDim> nrm{}, sv{};
  auto rhs = [&](const double* s, double* out) {
    const double* sx = s;
    const double* svel = s + d;
    const double* sw = s + 2 * d;
    for (int i = 0; i < d; ++i) out[i] = svel[i];
    m.accel_raw(sx, svel, out + d);
    m.normal_raw(sx, nrm.data());
    m.shape_raw(sx, svel, sv.data());
    double ws = 0.0;
    for (int i = 0; i < d; ++i) ws += sw[i] * sv[i];
    for (int i = 0; i < d; ++i) out[2 * d + i] = -ws * nrm[i];
  };
  for (int s = 0; s < steps; ++s) {
    rhs(st.data(), k1.data());
    for (int i = 0; i < nstate; ++i) tmp[i] = st[i] + 0.5 * h * k1[i];
    rhs(tmp.data(), k2.data());
    for (int i = 0; i < nstate; ++i) tmp[i] = st[i] + 0.5 * h * k2[i];
    rhs(tmp.data(), k3.data());
    for (int i = 0; i < nstate; ++i) tmp[i] = st[i] + h * k3[i];
    rhs(tmp.data(), k4.data());
    for (int i = 0; i < nstate; ++i)
      st[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    m.project_raw(st.data());
    m.tangent_raw(st.data(), st.data() + d);
    m.tangent_raw(st.data(), st.data() + 2 * d);
  }
  std::copy(st.data() + 2 * d, st.data() + 3 * d, w);
}

}  // namespace detail

/// Riemannian manifold interface shared by the concrete models. Curvature
/// follows R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y], under which the Jacobi
/// equation along a geodesic reads J'' = R(gdot, J) gdot.
class Manifold {
 public:
  virtual ~Manifold() = default;

  virtual std::string kind() const = 0;
  virtual int dim() const = 0;
  virtual int rep_dim() const = 0;
  virtual double injectivity_radius() const = 0;
  virtual std::optional<double> zoll_length() const { return std::nullopt; }

  virtual void project_point(Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd project_tangent(const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& w) const = 0;
  /// Absolute defect of the point constraint (0 for chart models).
  virtual double constraint_violation(const Eigen::VectorXd& x) const = 0;

  /// Riemannian logarithm; requires dist(x, y) < injectivity_radius().
  virtual Eigen::VectorXd log_map(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const = 0;
  virtual double dist(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    return log_map(x, y).norm();
  }
  /// Parallel transport of w from x to y along the minimizing geodesic.
  virtual Eigen::VectorXd transport_between(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& w) const = 0;
  /// R(gdot, j) gdot, the right side of the Jacobi equation.
  virtual Eigen::VectorXd curvature_term(const Eigen::VectorXd& x, const Eigen::VectorXd& gdot,
                                         const Eigen::VectorXd& j) const = 0;

  /// Integrate the geodesic with initial data `init` over [0, duration],
  /// storing samples.
  virtual GeodesicArc geodesic(const TangentVector& init, double duration, int steps = 0) const = 0;
  /// Same integration without sample storage; hot path of the solver.
  virtual void geodesic_endpoint(const TangentVector& init, double duration, Eigen::VectorXd& x1,
                                 Eigen::VectorXd& v1) const = 0;
  /// Parallel transport along an integrated arc (numerical, any length).
  virtual Eigen::VectorXd transport_along(const GeodesicArc& arc,
                                          const Eigen::VectorXd& w) const = 0;
  /// Propagate Jacobi pairs (columns of J and K = DJ/dt) along arc's
  /// geodesic; optionally record J at every sample into `samples`.
  virtual void propagate_jacobi(const GeodesicArc& arc, Eigen::MatrixXd& J, Eigen::MatrixXd& K,
                                std::vector<Eigen::MatrixXd>* samples = nullptr) const = 0;

  int steps_for(double arc_length) const {
    const double q = 128.0 * std::abs(arc_length) / injectivity_radius();
    return std::max(128, static_cast<int>(std::ceil(q)));
  }
};

/// Orthonormal tangent frame at x, columns built by Gram-Schmidt on the
/// projected ambient basis; pivot order is by descending projected norm with
/// index ties resolved ascending, which makes the frame deterministic.
inline Eigen::MatrixXd tangent_frame(const Manifold& M, const Eigen::VectorXd& x) {
  const int d = M.rep_dim();
  const int n = M.dim();
  std::vector<std::pair<double, int>> order;
  std::vector<Eigen::VectorXd> proj(d);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e[i] = 1.0;
    proj[i] = M.project_tangent(x, e);
    order.emplace_back(-proj[i].norm(), i);
  }
  std::sort(order.begin(), order.end());
  Eigen::MatrixXd frame(d, n);
  int c = 0;
  for (const auto& [negnorm, idx] : order) {
    if (c == n) break;
    Eigen::VectorXd u = proj[idx];
    for (int j = 0; j < c; ++j) u -= frame.col(j).dot(u) * frame.col(j);
    const double nn = u.norm();
    if (nn > 1e-8) frame.col(c++) = u / nn;
  }
  if (c != n) throw std::runtime_error("tangent frame construction failed");
  return frame;
}

/// Round sphere of the given dimension and radius, ambient coordinates.
class Sphere final : public Manifold {
 public:
  Sphere(int n, double radius) : n_(n), r_(radius) {
    if (n < 2 || n + 1 > kMaxRepDim) throw std::invalid_argument("unsupported sphere dimension");
    if (radius <= 0.0) throw std::invalid_argument("sphere radius must be positive");
  }

  std::string kind() const override { return "round-sphere"; }
  int dim() const override { return n_; }
  int rep_dim() const override { return n_ + 1; }
  double radius() const { return r_; }
  double injectivity_radius() const override { return M_PI * r_; }
  std::optional<double> zoll_length() const override { return 2.0 * M_PI * r_; }

  void accel_raw(const double* x, const double* v, double* a) const {
    double vv = 0.0;
    for (int i = 0; i <= n_; ++i) vv += v[i] * v[i];
    const double f = -vv / (r_ * r_);
    for (int i = 0; i <= n_; ++i) a[i] = f * x[i];
  }
  void project_raw(double* x) const {
    double nn = 0.0;
    for (int i = 0; i <= n_; ++i) nn += x[i] * x[i];
    const double f = r_ / std::sqrt(nn);
    for (int i = 0; i <= n_; ++i) x[i] *= f;
  }
  void tangent_raw(const double* x, double* w) const {
    double dot = 0.0;
    for (int i = 0; i <= n_; ++i) dot += x[i] * w[i];
    const double f = dot / (r_ * r_);
    for (int i = 0; i <= n_; ++i) w[i] -= f * x[i];
  }
  void normal_raw(const double* x, double* n) const {
    for (int i = 0; i <= n_; ++i) n[i] = x[i] / r_;
  }
  void shape_raw(const double* /*x*/, const double* u, double* out) const {
    for (int i = 0; i <= n_; ++i) out[i] = u[i] / r_;
  }
  void curvature_raw(const double* /*x*/, const double* gdot, const double* j, double* out) const {
    double jg = 0.0, gg = 0.0;
    for (int i = 0; i <= n_; ++i) {
      jg += j[i] * gdot[i];
      gg += gdot[i] * gdot[i];
    }
    const double k = 1.0 / (r_ * r_);
    for (int i = 0; i <= n_; ++i) out[i] = k * (jg * gdot[i] - gg * j[i]);
  }
  bool embedded() const { return true; }

  void project_point(Eigen::VectorXd& x) const override { project_raw(x.data()); }
  Eigen::VectorXd project_tangent(const Eigen::VectorXd& x, const Eigen::VectorXd& w) const override {
    Eigen::VectorXd out = w;
    tangent_raw(x.data(), out.data());
    return out;
  }
  double constraint_violation(const Eigen::VectorXd& x) const override {
    return std::abs(x.norm() - r_);
  }

  // Central angle via atan2(sin, cos); acos(c) loses half the significant
  // digits for nearby points, which matters under finite differencing.
  double angle_between(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    const double c = std::clamp(x.dot(y) / (r_ * r_), -1.0, 1.0);
    const double s = (y - c * x).norm() / r_;
    return std::atan2(s, c);
  }
  double dist(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const override {
    return r_ * angle_between(x, y);
  }
  Eigen::VectorXd log_map(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const override {
    const double c = std::clamp(x.dot(y) / (r_ * r_), -1.0, 1.0);
    const Eigen::VectorXd q = y - c * x;
    const double qn = q.norm();
    const double theta = std::atan2(qn / r_, c);
    if (r_ * theta >= injectivity_radius()) throw CutLocusError();
    if (theta < 1e-12) return project_tangent(x, y - x);
    if (qn < 1e-12) throw CutLocusError();
    return q * (r_ * theta / qn);
  }
  Eigen::VectorXd transport_between(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& w) const override {
    const double c = std::clamp(x.dot(y) / (r_ * r_), -1.0, 1.0);
    Eigen::VectorXd q = y - c * x;
    const double theta = std::atan2(q.norm() / r_, c);
    if (theta < 1e-12) return w;
    const double qn = q.norm();
    if (qn < 1e-12) throw CutLocusError();
    const Eigen::VectorXd a = x / r_;
    const Eigen::VectorXd b = q / qn;
    const double beta = w.dot(b);
    return w + beta * ((std::cos(theta) - 1.0) * b - std::sin(theta) * a);
  }
  Eigen::VectorXd curvature_term(const Eigen::VectorXd& x, const Eigen::VectorXd& gdot,
                                 const Eigen::VectorXd& j) const override {
    Eigen::VectorXd out(n_ + 1);
    curvature_raw(x.data(), gdot.data(), j.data(), out.data());
    return out;
  }

  GeodesicArc geodesic(const TangentVector& init, double duration, int steps = 0) const override;
  void geodesic_endpoint(const TangentVector& init, double duration, Eigen::VectorXd& x1,
                         Eigen::VectorXd& v1) const override;
  Eigen::VectorXd transport_along(const GeodesicArc& arc, const Eigen::VectorXd& w) const override;
  void propagate_jacobi(const GeodesicArc& arc, Eigen::MatrixXd& J, Eigen::MatrixXd& K,
                        std::vector<Eigen::MatrixXd>* samples = nullptr) const override;

 private:
  int n_;
  double r_;
};

/// Flat torus R^n / (periods Z^n) in periodic chart coordinates.
class FlatTorus final : public Manifold {
 public:
  explicit FlatTorus(Eigen::VectorXd periods) : periods_(std::move(periods)) {
    if (periods_.size() < 2 || periods_.size() > kMaxRepDim)
      throw std::invalid_argument("unsupported torus dimension");
    if (periods_.minCoeff() <= 0.0) throw std::invalid_argument("torus periods must be positive");
  }

  std::string kind() const override { return "flat-torus"; }
  int dim() const override { return static_cast<int>(periods_.size()); }
  int rep_dim() const override { return dim(); }
  const Eigen::VectorXd& periods() const { return periods_; }
  double injectivity_radius() const override { return 0.5 * periods_.minCoeff(); }

  void accel_raw(const double* /*x*/, const double* /*v*/, double* a) const {
    for (int i = 0; i < dim(); ++i) a[i] = 0.0;
  }
  void project_raw(double* x) const {
    for (int i = 0; i < dim(); ++i) {
      const double L = periods_[i];
      x[i] -= L * std::floor(x[i] / L);
    }
  }
  void tangent_raw(const double* /*x*/, double* /*w*/) const {}
  void normal_raw(const double* /*x*/, double* /*n*/) const {}
  void shape_raw(const double* /*x*/, const double* /*u*/, double* out) const {
    for (int i = 0; i < dim(); ++i) out[i] = 0.0;
  }
  void curvature_raw(const double* /*x*/, const double* /*gdot*/, const double* /*j*/,
                     double* out) const {
    for (int i = 0; i < dim(); ++i) out[i] = 0.0;
  }
  bool embedded() const { return false; }

  void project_point(Eigen::VectorXd& x) const override { project_raw(x.data()); }
  Eigen::VectorXd project_tangent(const Eigen::VectorXd& /*x*/,
                                  const Eigen::VectorXd& w) const override {
    return w;
  }
  double constraint_violation(const Eigen::VectorXd& /*x*/) const override { return 0.0; }

  /// Minimal periodic representative of y - x, coordinates in [-L/2, L/2).
  Eigen::VectorXd displacement(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    Eigen::VectorXd d = y - x;
    for (int i = 0; i < dim(); ++i) {
      const double L = periods_[i];
      d[i] -= L * std::round(d[i] / L);
    }
    return d;
  }
  double dist(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const override {
    return displacement(x, y).norm();
  }
  Eigen::VectorXd log_map(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const override {
    Eigen::VectorXd d = displacement(x, y);
    if (d.norm() >= injectivity_radius()) throw CutLocusError();
    return d;
  }
  Eigen::VectorXd transport_between(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                    const Eigen::VectorXd& w) const override {
    return w;
  }
  Eigen::VectorXd curvature_term(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                 const Eigen::VectorXd& j) const override {
    return Eigen::VectorXd::Zero(j.size());
  }

  GeodesicArc geodesic(const TangentVector& init, double duration, int steps = 0) const override;
  void geodesic_endpoint(const TangentVector& init, double duration, Eigen::VectorXd& x1,
                         Eigen::VectorXd& v1) const override;
  Eigen::VectorXd transport_along(const GeodesicArc&, const Eigen::VectorXd& w) const override {
    return w;
  }
  void propagate_jacobi(const GeodesicArc& arc, Eigen::MatrixXd& J, Eigen::MatrixXd& K,
                        std::vector<Eigen::MatrixXd>* samples = nullptr) const override;

 private:
  Eigen::VectorXd periods_;
};

/// Ellipsoid sum (x_i / a_i)^2 = 1 with the induced metric, ambient
/// coordinates. Curvature comes from the shape operator via the Gauss
/// equation; the logarithm is a damped shooting solve, so this model is the
/// slow but generic one.
class Ellipsoid final : public Manifold {
 public:
  explicit Ellipsoid(Eigen::VectorXd semi_axes) : a_(std::move(semi_axes)) {
    if (a_.size() < 3 || a_.size() > kMaxRepDim)
      throw std::invalid_argument("unsupported ellipsoid dimension");
    if (a_.minCoeff() <= 0.0) throw std::invalid_argument("semi-axes must be positive");
  }

  std::string kind() const override { return "ellipsoid"; }
  int dim() const override { return static_cast<int>(a_.size()) - 1; }
  int rep_dim() const override { return static_cast<int>(a_.size()); }
  const Eigen::VectorXd& semi_axes() const { return a_; }
  /// Conservative bound: pi/2 times the shortest semi-axis.
  double injectivity_radius() const override { return 0.5 * M_PI * a_.minCoeff(); }

  void gradient_raw(const double* x, double* g) const {
    for (int i = 0; i < rep_dim(); ++i) g[i] = 2.0 * x[i] / (a_[i] * a_[i]);
  }
  void accel_raw(const double* x, const double* v, double* acc) const {
    std::array<double, kMaxRepDim> g{};
    gradient_raw(x, g.data());
    double gg = 0.0, vGv = 0.0;
    for (int i = 0; i < rep_dim(); ++i) {
      gg += g[i] * g[i];
      vGv += 2.0 * v[i] * v[i] / (a_[i] * a_[i]);
    }
    const double f = -vGv / gg;
    for (int i = 0; i < rep_dim(); ++i) acc[i] = f * g[i];
  }
  void project_raw(double* x) const {
    double s = 0.0;
    for (int i = 0; i < rep_dim(); ++i) s += (x[i] / a_[i]) * (x[i] / a_[i]);
    const double f = 1.0 / std::sqrt(s);
    for (int i = 0; i < rep_dim(); ++i) x[i] *= f;
  }
  void normal_raw(const double* x, double* n) const {
    gradient_raw(x, n);
    double nn = 0.0;
    for (int i = 0; i < rep_dim(); ++i) nn += n[i] * n[i];
    const double f = 1.0 / std::sqrt(nn);
    for (int i = 0; i < rep_dim(); ++i) n[i] *= f;
  }
  void tangent_raw(const double* x, double* w) const {
    std::array<double, kMaxRepDim> n{};
    normal_raw(x, n.data());
    double dot = 0.0;
    for (int i = 0; i < rep_dim(); ++i) dot += n[i] * w[i];
    for (int i = 0; i < rep_dim(); ++i) w[i] -= dot * n[i];
  }
  // Differential of the unit normal, tangentially projected.
  void shape_raw(const double* x, const double* u, double* out) const {
    std::array<double, kMaxRepDim> g{}, n{};
    gradient_raw(x, g.data());
    double gn = 0.0;
    for (int i = 0; i < rep_dim(); ++i) gn += g[i] * g[i];
    gn = std::sqrt(gn);
    for (int i = 0; i < rep_dim(); ++i) n[i] = g[i] / gn;
    std::array<double, kMaxRepDim> Gu{};
    double nGu = 0.0;
    for (int i = 0; i < rep_dim(); ++i) {
      Gu[i] = 2.0 * u[i] / (a_[i] * a_[i]);
      nGu += n[i] * Gu[i];
    }
    for (int i = 0; i < rep_dim(); ++i) out[i] = (Gu[i] - nGu * n[i]) / gn;
  }
  void curvature_raw(const double* x, const double* gdot, const double* j, double* out) const {
    std::array<double, kMaxRepDim> sg{}, sj{};
    shape_raw(x, gdot, sg.data());
    shape_raw(x, j, sj.data());
    double sj_g = 0.0, sg_g = 0.0;
    for (int i = 0; i < rep_dim(); ++i) {
      sj_g += sj[i] * gdot[i];
      sg_g += sg[i] * gdot[i];
    }
    for (int i = 0; i < rep_dim(); ++i) out[i] = sj_g * sg[i] - sg_g * sj[i];
  }
  bool embedded() const { return true; }

  void project_point(Eigen::VectorXd& x) const override { project_raw(x.data()); }
  Eigen::VectorXd project_tangent(const Eigen::VectorXd& x, const Eigen::VectorXd& w) const override {
    Eigen::VectorXd out = w;
    tangent_raw(x.data(), out.data());
    return out;
  }
  double constraint_violation(const Eigen::VectorXd& x) const override {
    double s = 0.0;
    for (int i = 0; i < rep_dim(); ++i) s += (x[i] / a_[i]) * (x[i] / a_[i]);
    return std::abs(s - 1.0);
  }

  Eigen::VectorXd log_map(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const override;
  Eigen::VectorXd transport_between(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& w) const override;
  Eigen::VectorXd curvature_term(const Eigen::VectorXd& x, const Eigen::VectorXd& gdot,
                                 const Eigen::VectorXd& j) const override {
    Eigen::VectorXd out(rep_dim());
    curvature_raw(x.data(), gdot.data(), j.data(), out.data());
    return out;
  }

  GeodesicArc geodesic(const TangentVector& init, double duration, int steps = 0) const override;
  void geodesic_endpoint(const TangentVector& init, double duration, Eigen::VectorXd& x1,
                         Eigen::VectorXd& v1) const override;
  Eigen::VectorXd transport_along(const GeodesicArc& arc, const Eigen::VectorXd& w) const override;
  void propagate_jacobi(const GeodesicArc& arc, Eigen::MatrixXd& J, Eigen::MatrixXd& K,
                        std::vector<Eigen::MatrixXd>* samples = nullptr) const override;

 private:
  Eigen::VectorXd a_;
};

namespace detail {

template <class Model>
GeodesicArc make_arc(const Model& m, const Manifold& base, const TangentVector& init,
                     double duration, int steps) {
  if (duration < 0.0) throw std::invalid_argument("arc duration must be nonnegative");
  GeodesicArc arc;
  arc.initial = init;
  arc.duration = duration;
  arc.steps = steps > 0 ? steps : base.steps_for(duration * init.vec.norm());
  const int d = base.rep_dim();
  std::vector<double> xs(static_cast<std::size_t>(arc.steps + 1) * d);
  std::vector<double> vs(xs.size());
  std::array<double, kMaxRepDim> x{}, v{};
  std::copy(init.base.data(), init.base.data() + d, x.data());
  std::copy(init.vec.data(), init.vec.data() + d, v.data());
  rk4_geodesic_core(m, d, x.data(), v.data(), duration, arc.steps, xs.data(), vs.data());
  arc.points.resize(arc.steps + 1);
  arc.velocities.resize(arc.steps + 1);
  for (int k = 0; k <= arc.steps; ++k) {
    arc.points[k] = Eigen::Map<const Eigen::VectorXd>(xs.data() + static_cast<std::size_t>(k) * d, d);
    arc.velocities[k] =
        Eigen::Map<const Eigen::VectorXd>(vs.data() + static_cast<std::size_t>(k) * d, d);
  }
  return arc;
}

template <class Model>
void endpoint_only(const Model& m, const Manifold& base, const TangentVector& init, double duration,
                   Eigen::VectorXd& x1, Eigen::VectorXd& v1) {
  const int d = base.rep_dim();
  std::array<double, kMaxRepDim> x{}, v{};
  std::copy(init.base.data(), init.base.data() + d, x.data());
  std::copy(init.vec.data(), init.vec.data() + d, v.data());
  const int steps = base.steps_for(duration * init.vec.norm());
  rk4_geodesic_core(m, d, x.data(), v.data(), duration, steps, nullptr, nullptr);
  x1.resize(d);
  v1.resize(d);
  std::copy(x.data(), x.data() + d, x1.data());
  std::copy(v.data(), v.data() + d, v1.data());
}

template <class Model>
void jacobi_batch(const Model& m, const Manifold& base, const GeodesicArc& arc, Eigen::MatrixXd& J,
                  Eigen::MatrixXd& K, std::vector<Eigen::MatrixXd>* samples) {
  const int d = base.rep_dim();
  const int cols = static_cast<int>(J.cols());
  std::vector<double> jj(static_cast<std::size_t>(d) * cols), kk(jj.size());
  Eigen::Map<Eigen::MatrixXd>(jj.data(), d, cols) = J;
  Eigen::Map<Eigen::MatrixXd>(kk.data(), d, cols) = K;
  std::vector<double> smp;
  double* smp_ptr = nullptr;
  if (samples != nullptr) {
    smp.resize(static_cast<std::size_t>(arc.steps + 1) * d * cols);
    smp_ptr = smp.data();
  }
  rk4_jacobi_core(m, d, cols, arc.initial.base.data(), arc.initial.vec.data(), arc.duration,
                  arc.steps, jj.data(), kk.data(), smp_ptr);
  J = Eigen::Map<Eigen::MatrixXd>(jj.data(), d, cols);
  K = Eigen::Map<Eigen::MatrixXd>(kk.data(), d, cols);
  if (samples != nullptr) {
    samples->resize(arc.steps + 1);
    for (int k = 0; k <= arc.steps; ++k)
      (*samples)[k] =
          Eigen::Map<Eigen::MatrixXd>(smp.data() + static_cast<std::size_t>(k) * d * cols, d, cols);
  }
}

template <class Model>
Eigen::VectorXd transport_arc(const Model& m, const Manifold& base, const GeodesicArc& arc,
                              const Eigen::VectorXd& w) {
  Eigen::VectorXd out = w;
  rk4_transport_core(m, base.rep_dim(), arc.initial.base.data(), arc.initial.vec.data(),
                     arc.duration, arc.steps, out.data());
  return out;
}

}  // namespace detail

inline GeodesicArc Sphere::geodesic(const TangentVector& init, double duration, int steps) const {
  return detail::make_arc(*this, *this, init, duration, steps);
}
inline void Sphere::geodesic_endpoint(const TangentVector& init, double duration,
                                      Eigen::VectorXd& x1, Eigen::VectorXd& v1) const {
  detail::endpoint_only(*this, *this, init, duration, x1, v1);
}
inline Eigen::VectorXd Sphere::transport_along(const GeodesicArc& arc,
                                               const Eigen::VectorXd& w) const {
  return detail::transport_arc(*this, *this, arc, w);
}
inline void Sphere::propagate_jacobi(const GeodesicArc& arc, Eigen::MatrixXd& J, Eigen::MatrixXd& K,
                                     std::vector<Eigen::MatrixXd>* samples) const {
  detail::jacobi_batch(*this, *this, arc, J, K, samples);
}

inline GeodesicArc FlatTorus::geodesic(const TangentVector& init, double duration, int steps) const {
  return detail::make_arc(*this, *this, init, duration, steps);
}
inline void FlatTorus::geodesic_endpoint(const TangentVector& init, double duration,
                                         Eigen::VectorXd& x1, Eigen::VectorXd& v1) const {
  detail::endpoint_only(*this, *this, init, duration, x1, v1);
}
inline void FlatTorus::propagate_jacobi(const GeodesicArc& arc, Eigen::MatrixXd& J,
                                        Eigen::MatrixXd& K,
                                        std::vector<Eigen::MatrixXd>* samples) const {
  detail::jacobi_batch(*this, *this, arc, J, K, samples);
}

inline GeodesicArc Ellipsoid::geodesic(const TangentVector& init, double duration, int steps) const {
  return detail::make_arc(*this, *this, init, duration, steps);
}
inline void Ellipsoid::geodesic_endpoint(const TangentVector& init, double duration,
                                         Eigen::VectorXd& x1, Eigen::VectorXd& v1) const {
  detail::endpoint_only(*this, *this, init, duration, x1, v1);
}
inline Eigen::VectorXd Ellipsoid::transport_along(const GeodesicArc& arc,
                                                  const Eigen::VectorXd& w) const {
  return detail::transport_arc(*this, *this, arc, w);
}
inline void Ellipsoid::propagate_jacobi(const GeodesicArc& arc, Eigen::MatrixXd& J,
                                        Eigen::MatrixXd& K,
                                        std::vector<Eigen::MatrixXd>* samples) const {
  detail::jacobi_batch(*this, *this, arc, J, K, samples);
}

// Damped shooting solve for the ellipsoid logarithm: minimize the ambient
// endpoint mismatch of exp_x(w) over w in the tangent frame at x.
inline Eigen::VectorXd Ellipsoid::log_map(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  const int n = dim();
  const Eigen::MatrixXd frame = tangent_frame(*this, x);
  Eigen::VectorXd w = project_tangent(x, y - x);
  const double inj = injectivity_radius();
  if (w.norm() > inj) w *= inj / w.norm();
  Eigen::VectorXd coeff = frame.transpose() * w;
  Eigen::VectorXd x1(rep_dim()), v1(rep_dim());
  auto residual = [&](const Eigen::VectorXd& c) {
    geodesic_endpoint({x, frame * c}, 1.0, x1, v1);
    return Eigen::VectorXd(x1 - y);
  };
  Eigen::VectorXd r = residual(coeff);
  for (int it = 0; it < 40 && r.norm() > 1e-12; ++it) {
    Eigen::MatrixXd Jm(rep_dim(), n);
    const double h = 1e-6 * (1.0 + coeff.norm());
    for (int c = 0; c < n; ++c) {
      Eigen::VectorXd cp = coeff, cm = coeff;
      cp[c] += h;
      cm[c] -= h;
      Jm.col(c) = (residual(cp) - residual(cm)) / (2.0 * h);
    }
    const Eigen::MatrixXd JtJ =
        Jm.transpose() * Jm + 1e-12 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd step = JtJ.ldlt().solve(Jm.transpose() * r);
    double lambda = 1.0;
    const double r0 = r.norm();
    bool ok = false;
    for (int half = 0; half < 25; ++half) {
      const Eigen::VectorXd trial = coeff - lambda * step;
      const Eigen::VectorXd rt = residual(trial);
      if (rt.norm() < r0) {
        coeff = trial;
        r = rt;
        ok = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!ok) break;
  }
  if (r.norm() > 1e-9) throw CutLocusError();
  const Eigen::VectorXd w_final = frame * coeff;
  if (w_final.norm() >= inj) throw CutLocusError();
  return w_final;
}

inline Eigen::VectorXd Ellipsoid::transport_between(const Eigen::VectorXd& x,
                                                    const Eigen::VectorXd& y,
                                                    const Eigen::VectorXd& w) const {
  const GeodesicArc arc = geodesic({x, log_map(x, y)}, 1.0);
  return transport_along(arc, w);
}

/// Exponential map, integrator backed.
inline Eigen::VectorXd exp_map(const Manifold& M, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& w) {
  Eigen::VectorXd x1, v1;
  M.geodesic_endpoint({x, w}, 1.0, x1, v1);
  return x1;
}

/// Unit-speed geodesic flow on SM for either sign of t.
inline TangentVector geodesic_flow(const Manifold& M, const TangentVector& s, double t) {
  if (t == 0.0) return s;
  TangentVector init = s;
  if (t < 0.0) init.vec = -init.vec;
  Eigen::VectorXd x1, v1;
  M.geodesic_endpoint(init, std::abs(t), x1, v1);
  if (t < 0.0) v1 = -v1;
  return {x1, v1};
}

}  // namespace tpoint
