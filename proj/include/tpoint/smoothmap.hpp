#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "tpoint/geometry.hpp"

namespace tpoint {

/// Thrown when an inverse-adjoint is requested but the assembled differential
/// is numerically singular (condition number above 1e8).
struct NotDiffeomorphismError : std::runtime_error {
  NotDiffeomorphismError() : std::runtime_error("not-a-diffeomorphism") {}
};

/// Smooth self-map of a manifold. Derivative accessors have finite-difference
/// defaults; analytic kinds override them. The adjoint df^T at x maps
/// T_f(x)M to T_xM and is assembled between deterministic tangent frames.
class SmoothMap {
 public:
  explicit SmoothMap(std::shared_ptr<const Manifold> manifold) : manifold_(std::move(manifold)) {}
  virtual ~SmoothMap() = default;

  const Manifold& manifold() const { return *manifold_; }
  std::shared_ptr<const Manifold> manifold_ptr() const { return manifold_; }
  virtual std::string kind() const = 0;
  virtual bool is_isometry() const { return false; }

  virtual Eigen::VectorXd eval(const Eigen::VectorXd& x) const = 0;

  /// df_x(u), a tangent vector at f(x).
  virtual Eigen::VectorXd differential(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return fd_differential(x, u);
  }

  /// df_x^T(w) for w at f(x), a tangent vector at x.
  virtual Eigen::VectorXd adjoint_differential(const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& w) const {
    const Eigen::MatrixXd Fx = tangent_frame(manifold(), x);
    const Eigen::MatrixXd Ff = tangent_frame(manifold(), eval(x));
    const Eigen::MatrixXd D = differential_matrix(x, Fx, Ff);
    return Fx * (D.transpose() * (Ff.transpose() * w));
  }

  /// Covariant second differential d^2f_x[u, v]: the covariant derivative of
  /// df in the direction u, applied to v; a tangent vector at f(x).
  virtual Eigen::VectorXd second_differential(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                              const Eigen::VectorXd& v) const {
    return fd_second_differential(x, u, v);
  }

  /// Matrix of df_x between given orthonormal frames at x and f(x).
  Eigen::MatrixXd differential_matrix(const Eigen::VectorXd& x, const Eigen::MatrixXd& frame_x,
                                      const Eigen::MatrixXd& frame_fx) const {
    const int n = manifold().dim();
    Eigen::MatrixXd D(n, n);
    for (int j = 0; j < n; ++j)
      D.col(j) = frame_fx.transpose() * differential(x, frame_x.col(j));
    return D;
  }

  /// df_x^{-T}(w) for w at x, a tangent vector at f(x). Errors if the
  /// assembled differential is numerically singular.
  Eigen::VectorXd inverse_adjoint(const Eigen::VectorXd& x, const Eigen::VectorXd& w) const {
    const Eigen::MatrixXd Fx = tangent_frame(manifold(), x);
    const Eigen::MatrixXd Ff = tangent_frame(manifold(), eval(x));
    const Eigen::MatrixXd D = differential_matrix(x, Fx, Ff);
    return Ff * solve_inverse_transpose(D, Fx.transpose() * w);
  }

  /// Ambient-coordinate operator of nabla_u (df^{-T}), mapping tangent
  /// vectors at x to tangent vectors at f(x), via
  /// nabla_u(df^{-T}) = -df^{-T} (nabla_u df)^T df^{-T}.
  Eigen::MatrixXd nabla_inverse_adjoint(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    const int n = manifold().dim();
    const Eigen::MatrixXd Fx = tangent_frame(manifold(), x);
    const Eigen::MatrixXd Ff = tangent_frame(manifold(), eval(x));
    const Eigen::MatrixXd D = differential_matrix(x, Fx, Ff);
    Eigen::MatrixXd Bmat(n, n);
    for (int a = 0; a < n; ++a)
      Bmat.col(a) = Ff.transpose() * second_differential(x, u, Fx.col(a));
    Eigen::MatrixXd core(n, n);
    for (int c = 0; c < n; ++c)
      core.col(c) = -solve_inverse_transpose(
          D, Bmat.transpose() * solve_inverse_transpose(D, Eigen::VectorXd::Unit(n, c)));
    return Ff * core * Fx.transpose();
  }

 protected:
  Eigen::VectorXd fd_differential(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    const Manifold& M = manifold();
    const double un = u.norm();
    if (un == 0.0) return Eigen::VectorXd::Zero(M.rep_dim());
    const Eigen::VectorXd uhat = u / un;
    const double h = 1e-5 * (1.0 + x.norm());
    const Eigen::VectorXd yp = eval(exp_map(M, x, h * uhat));
    const Eigen::VectorXd ym = eval(exp_map(M, x, -h * uhat));
    const Eigen::VectorXd fx = eval(x);
    const Eigen::VectorXd delta = (M.log_map(fx, yp) - M.log_map(fx, ym)) / (2.0 * h);
    return un * M.project_tangent(fx, delta);
  }

  Eigen::VectorXd fd_second_differential(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                         const Eigen::VectorXd& v) const {
    const Manifold& M = manifold();
    const double un = u.norm();
    if (un == 0.0 || v.norm() == 0.0) return Eigen::VectorXd::Zero(M.rep_dim());
    const Eigen::VectorXd uhat = u / un;
    const double h = 1e-4 * (1.0 + x.norm());
    const Eigen::VectorXd fx = eval(x);
    auto transported_value = [&](double s) {
      const Eigen::VectorXd xs = exp_map(M, x, s * uhat);
      const Eigen::VectorXd vs = M.transport_between(x, xs, v);
      const Eigen::VectorXd w = differential(xs, vs);
      return Eigen::VectorXd(M.transport_between(eval(xs), fx, w));
    };
    return un * (transported_value(h) - transported_value(-h)) / (2.0 * h);
  }

  static Eigen::VectorXd solve_inverse_transpose(const Eigen::MatrixXd& D,
                                                 const Eigen::VectorXd& rhs) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(D.transpose(),
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double cond = svd.singularValues()(0) / svd.singularValues().tail(1)(0);
    if (!std::isfinite(cond) || cond >= 1e8) throw NotDiffeomorphismError();
    return svd.solve(rhs);
  }

 private:
  std::shared_ptr<const Manifold> manifold_;
};

/// Lift of f to the unit tangent bundle:
/// (x, v) -> (f(x), df^{-T} v / |df^{-T} v|).
inline TangentVector contact_lift(const SmoothMap& f, const TangentVector& s) {
  const Eigen::VectorXd w = f.inverse_adjoint(s.base, s.vec);
  return {f.eval(s.base), w / w.norm()};
}

class IdentityMap final : public SmoothMap {
 public:
  using SmoothMap::SmoothMap;
  std::string kind() const override { return "identity"; }
  bool is_isometry() const override { return true; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override { return x; }
  Eigen::VectorXd differential(const Eigen::VectorXd&, const Eigen::VectorXd& u) const override {
    return u;
  }
  Eigen::VectorXd adjoint_differential(const Eigen::VectorXd&,
                                       const Eigen::VectorXd& w) const override {
    return w;
  }
  Eigen::VectorXd second_differential(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                      const Eigen::VectorXd&) const override {
    return Eigen::VectorXd::Zero(manifold().rep_dim());
  }
};

/// Ambient rotation about an axis, for embedded surfaces in R^3 that the
/// rotation maps to themselves.
class RotationMap final : public SmoothMap {
 public:
  RotationMap(std::shared_ptr<const Manifold> manifold, const Eigen::Vector3d& axis, double angle)
      : SmoothMap(std::move(manifold)), axis_(axis.normalized()), angle_(angle) {
    if (this->manifold().rep_dim() != 3)
      throw std::invalid_argument("rotation maps need ambient dimension 3");
    Q_ = Eigen::AngleAxisd(angle_, axis_).toRotationMatrix();
    for (const double s : {0.3, -0.8, 0.6}) {
      Eigen::VectorXd p = Eigen::Vector3d(1.0, s, s * s);
      this->manifold().project_point(p);
      Eigen::VectorXd q = Q_ * p;
      if (this->manifold().constraint_violation(q) > 1e-9)
        throw std::invalid_argument("rotation axis does not preserve the surface");
    }
  }

  std::string kind() const override { return "rotation"; }
  bool is_isometry() const override { return true; }
  const Eigen::Vector3d& axis() const { return axis_; }
  double angle() const { return angle_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override { return Q_ * x; }
  Eigen::VectorXd differential(const Eigen::VectorXd&, const Eigen::VectorXd& u) const override {
    return Q_ * u;
  }
  Eigen::VectorXd adjoint_differential(const Eigen::VectorXd&,
                                       const Eigen::VectorXd& w) const override {
    return Q_.transpose() * w;
  }
  Eigen::VectorXd second_differential(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                      const Eigen::VectorXd&) const override {
    return Eigen::VectorXd::Zero(3);
  }

 private:
  Eigen::Vector3d axis_;
  double angle_;
  Eigen::Matrix3d Q_;
};

/// x -> A x + c on a flat torus; A must preserve the period lattice.
class TorusAffineMap final : public SmoothMap {
 public:
  TorusAffineMap(std::shared_ptr<const FlatTorus> torus, Eigen::MatrixXd linear,
                 Eigen::VectorXd shift)
      : SmoothMap(torus), A_(std::move(linear)), c_(std::move(shift)) {
    const auto& L = torus->periods();
    const int n = torus->dim();
    if (A_.rows() != n || A_.cols() != n || c_.size() != n)
      throw std::invalid_argument("affine data does not match the torus dimension");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double lattice = A_(i, j) * L[j] / L[i];
        if (std::abs(lattice - std::round(lattice)) > 1e-12)
          throw std::invalid_argument("linear part does not preserve the period lattice");
      }
  }

  static std::shared_ptr<TorusAffineMap> translation(std::shared_ptr<const FlatTorus> torus,
                                                     const Eigen::VectorXd& shift) {
    const int n = torus->dim();
    return std::make_shared<TorusAffineMap>(torus, Eigen::MatrixXd::Identity(n, n), shift);
  }

  std::string kind() const override { return "torus-affine"; }
  bool is_isometry() const override {
    return (A_.transpose() * A_ - Eigen::MatrixXd::Identity(A_.rows(), A_.cols())).norm() < 1e-12;
  }
  const Eigen::MatrixXd& linear() const { return A_; }
  const Eigen::VectorXd& shift() const { return c_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override {
    Eigen::VectorXd y = A_ * x + c_;
    manifold().project_point(y);
    return y;
  }
  Eigen::VectorXd differential(const Eigen::VectorXd&, const Eigen::VectorXd& u) const override {
    return A_ * u;
  }
  Eigen::VectorXd adjoint_differential(const Eigen::VectorXd&,
                                       const Eigen::VectorXd& w) const override {
    return A_.transpose() * w;
  }
  Eigen::VectorXd second_differential(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                      const Eigen::VectorXd&) const override {
    return Eigen::VectorXd::Zero(A_.rows());
  }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd c_;
};

/// Non-affine torus diffeomorphism (x1, x2) -> (x1 + c1 + a sin(2 pi x2/L2),
/// x2 + c2); the analytic kind with a nonvanishing second differential.
class TorusWaveMap final : public SmoothMap {
 public:
  TorusWaveMap(std::shared_ptr<const FlatTorus> torus, double amplitude, Eigen::VectorXd shift)
      : SmoothMap(torus), a_(amplitude), c_(std::move(shift)) {
    if (torus->dim() != 2) throw std::invalid_argument("wave maps are two dimensional");
    if (c_.size() != 2) throw std::invalid_argument("shift dimension mismatch");
    om_ = 2.0 * M_PI / torus->periods()[1];
  }

  std::string kind() const override { return "torus-wave"; }
  double amplitude() const { return a_; }
  const Eigen::VectorXd& shift() const { return c_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override {
    Eigen::VectorXd y(2);
    y[0] = x[0] + c_[0] + a_ * std::sin(om_ * x[1]);
    y[1] = x[1] + c_[1];
    manifold().project_point(y);
    return y;
  }
  Eigen::VectorXd differential(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override {
    Eigen::VectorXd out(2);
    out[0] = u[0] + a_ * om_ * std::cos(om_ * x[1]) * u[1];
    out[1] = u[1];
    return out;
  }
  Eigen::VectorXd adjoint_differential(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& w) const override {
    Eigen::VectorXd out(2);
    out[0] = w[0];
    out[1] = a_ * om_ * std::cos(om_ * x[1]) * w[0] + w[1];
    return out;
  }
  Eigen::VectorXd second_differential(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                      const Eigen::VectorXd& v) const override {
    Eigen::VectorXd out(2);
    out[0] = -a_ * om_ * om_ * std::sin(om_ * x[1]) * u[1] * v[1];
    out[1] = 0.0;
    return out;
  }

 private:
  double a_;
  Eigen::VectorXd c_;
  double om_;
};

namespace detail {

enum class FieldHost { embedded_height, torus_cosine };

// Built-in "height-gradient" vector field: the tangential gradient of the
// last ambient coordinate on embedded surfaces, and the gradient of
// sum_i 2^(1-i) cos(2 pi x_i / L_i) on the flat torus.
struct BuiltinField {
  FieldHost host;
  const Manifold* M;
  const FlatTorus* torus;

  explicit BuiltinField(const Manifold& m) : M(&m) {
    torus = dynamic_cast<const FlatTorus*>(&m);
    host = torus != nullptr ? FieldHost::torus_cosine : FieldHost::embedded_height;
  }

  void eval_raw(const double* x, double* out) const {
    const int d = M->rep_dim();
    if (host == FieldHost::torus_cosine) {
      double w = 1.0;
      for (int i = 0; i < d; ++i) {
        const double om = 2.0 * M_PI / torus->periods()[i];
        out[i] = -w * om * std::sin(om * x[i]);
        w *= 0.5;
      }
      return;
    }
    for (int i = 0; i < d; ++i) out[i] = (i == d - 1) ? 1.0 : 0.0;
    if (const auto* sphere = dynamic_cast<const Sphere*>(M)) {
      sphere->tangent_raw(x, out);
    } else {
      dynamic_cast<const Ellipsoid&>(*M).tangent_raw(x, out);
    }
  }
};

}  // namespace detail

/// Time-1 flow of epsilon times a built-in vector field, integrated with the
/// manifold's fixed-step RK4 scheme. Derivatives use the finite-difference
/// defaults.
class FlowMap final : public SmoothMap {
 public:
  FlowMap(std::shared_ptr<const Manifold> manifold, std::string field, double epsilon)
      : SmoothMap(std::move(manifold)), field_name_(std::move(field)), eps_(epsilon),
        field_(this->manifold()) {
    if (field_name_ != "height-gradient")
      throw std::invalid_argument("unknown flow field: " + field_name_);
  }

  std::string kind() const override { return "flow"; }
  const std::string& field() const { return field_name_; }
  double epsilon() const { return eps_; }

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override {
    const Manifold& M = manifold();
    const int d = M.rep_dim();
    const int steps = 128;
    const double h = 1.0 / steps;
    std::array<double, kMaxRepDim> y{}, k1{}, k2{}, k3{}, k4{}, tmp{};
    std::copy(x.data(), x.data() + d, y.data());
    auto rhs = [&](const double* p, double* out) {
      field_.eval_raw(p, out);
      for (int i = 0; i < d; ++i) out[i] *= eps_;
    };
    for (int s = 0; s < steps; ++s) {
      rhs(y.data(), k1.data());
      for (int i = 0; i < d; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
      rhs(tmp.data(), k2.data());
      for (int i = 0; i < d; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
      rhs(tmp.data(), k3.data());
      for (int i = 0; i < d; ++i) tmp[i] = y[i] + h * k3[i];
      rhs(tmp.data(), k4.data());
      for (int i = 0; i < d; ++i)
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      project_raw_dispatch(y.data());
    }
    Eigen::VectorXd out(d);
    std::copy(y.data(), y.data() + d, out.data());
    return out;
  }

 private:
  void project_raw_dispatch(double* y) const {
    if (const auto* sphere = dynamic_cast<const Sphere*>(&manifold())) {
      sphere->project_raw(y);
    } else if (const auto* torus = dynamic_cast<const FlatTorus*>(&manifold())) {
      torus->project_raw(y);
    } else {
      dynamic_cast<const Ellipsoid&>(manifold()).project_raw(y);
    }
  }

  std::string field_name_;
  double eps_;
  detail::BuiltinField field_;
};

/// Wraps a pointwise evaluator; every derivative goes through the
/// finite-difference defaults. Wrapping an analytic kind gives an
/// independent check of its hand-written derivatives.
class FiniteDifferenceMap final : public SmoothMap {
 public:
  FiniteDifferenceMap(std::shared_ptr<const Manifold> manifold,
                      std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn,
                      std::string label = "finite-difference")
      : SmoothMap(std::move(manifold)), fn_(std::move(fn)), label_(std::move(label)) {}

  explicit FiniteDifferenceMap(std::shared_ptr<const SmoothMap> inner)
      : SmoothMap(inner->manifold_ptr()),
        fn_([inner](const Eigen::VectorXd& x) { return inner->eval(x); }),
        label_("finite-difference(" + inner->kind() + ")") {}

  std::string kind() const override { return label_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override {
    Eigen::VectorXd y = fn_(x);
    manifold().project_point(y);
    return y;
  }

 private:
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn_;
  std::string label_;
};

/// g after f, with chain-rule derivatives.
class CompositionMap final : public SmoothMap {
 public:
  CompositionMap(std::shared_ptr<const SmoothMap> outer, std::shared_ptr<const SmoothMap> inner)
      : SmoothMap(inner->manifold_ptr()), g_(std::move(outer)), f_(std::move(inner)) {}

  std::string kind() const override { return g_->kind() + "*" + f_->kind(); }
  bool is_isometry() const override { return g_->is_isometry() && f_->is_isometry(); }
  std::shared_ptr<const SmoothMap> outer_ptr() const { return g_; }
  std::shared_ptr<const SmoothMap> inner_ptr() const { return f_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override { return g_->eval(f_->eval(x)); }
  Eigen::VectorXd differential(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override {
    return g_->differential(f_->eval(x), f_->differential(x, u));
  }
  Eigen::VectorXd adjoint_differential(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& w) const override {
    return f_->adjoint_differential(x, g_->adjoint_differential(f_->eval(x), w));
  }
  Eigen::VectorXd second_differential(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                      const Eigen::VectorXd& v) const override {
    const Eigen::VectorXd fx = f_->eval(x);
    const Eigen::VectorXd du = f_->differential(x, u);
    const Eigen::VectorXd dv = f_->differential(x, v);
    return g_->second_differential(fx, du, dv) +
           g_->differential(fx, f_->second_differential(x, u, v));
  }

 private:
  std::shared_ptr<const SmoothMap> g_;
  std::shared_ptr<const SmoothMap> f_;
};

/// Smooth family s -> f_s with f_0 = id; the basis of transport and
/// continuation. Tracks t -> f_t(x) are sampled at track_samples nodes.
class Homotopy {
 public:
  explicit Homotopy(std::shared_ptr<const Manifold> manifold, int track_samples = 64)
      : manifold_(std::move(manifold)), track_samples_(track_samples) {}
  virtual ~Homotopy() = default;

  const Manifold& manifold() const { return *manifold_; }
  std::shared_ptr<const Manifold> manifold_ptr() const { return manifold_; }
  int track_samples() const { return track_samples_; }
  virtual std::string kind() const = 0;
  virtual std::shared_ptr<const SmoothMap> at(double s) const = 0;

 private:
  std::shared_ptr<const Manifold> manifold_;
  int track_samples_;
};

class ConstantHomotopy final : public Homotopy {
 public:
  using Homotopy::Homotopy;
  std::string kind() const override { return "constant"; }
  std::shared_ptr<const SmoothMap> at(double) const override {
    return std::make_shared<IdentityMap>(manifold_ptr());
  }
};

class RotationHomotopy final : public Homotopy {
 public:
  RotationHomotopy(std::shared_ptr<const Manifold> manifold, const Eigen::Vector3d& axis,
                   double angle, int track_samples = 64)
      : Homotopy(std::move(manifold), track_samples), axis_(axis), angle_(angle) {}
  std::string kind() const override { return "rotation"; }
  const Eigen::Vector3d& axis() const { return axis_; }
  double angle() const { return angle_; }
  std::shared_ptr<const SmoothMap> at(double s) const override {
    if (s == 0.0) return std::make_shared<IdentityMap>(manifold_ptr());
    return std::make_shared<RotationMap>(manifold_ptr(), axis_, s * angle_);
  }

 private:
  Eigen::Vector3d axis_;
  double angle_;
};

class FlowHomotopy final : public Homotopy {
 public:
  FlowHomotopy(std::shared_ptr<const Manifold> manifold, std::string field, double epsilon,
               int track_samples = 64)
      : Homotopy(std::move(manifold), track_samples), field_(std::move(field)), eps_(epsilon) {}
  std::string kind() const override { return "flow"; }
  const std::string& field() const { return field_; }
  double epsilon() const { return eps_; }
  std::shared_ptr<const SmoothMap> at(double s) const override {
    if (s == 0.0) return std::make_shared<IdentityMap>(manifold_ptr());
    return std::make_shared<FlowMap>(manifold_ptr(), field_, s * eps_);
  }

 private:
  std::string field_;
  double eps_;
};

class TorusTranslationHomotopy final : public Homotopy {
 public:
  TorusTranslationHomotopy(std::shared_ptr<const FlatTorus> torus, Eigen::VectorXd shift,
                           int track_samples = 64)
      : Homotopy(torus, track_samples), torus_(std::move(torus)), c_(std::move(shift)) {}
  std::string kind() const override { return "torus-translation"; }
  const Eigen::VectorXd& shift() const { return c_; }
  std::shared_ptr<const SmoothMap> at(double s) const override {
    return TorusAffineMap::translation(torus_, s * c_);
  }

 private:
  std::shared_ptr<const FlatTorus> torus_;
  Eigen::VectorXd c_;
};

class TorusWaveHomotopy final : public Homotopy {
 public:
  TorusWaveHomotopy(std::shared_ptr<const FlatTorus> torus, double amplitude, Eigen::VectorXd shift,
                    int track_samples = 64)
      : Homotopy(torus, track_samples), torus_(std::move(torus)), a_(amplitude),
        c_(std::move(shift)) {}
  std::string kind() const override { return "torus-wave"; }
  std::shared_ptr<const SmoothMap> at(double s) const override {
    return std::make_shared<TorusWaveMap>(torus_, s * a_, s * c_);
  }

 private:
  std::shared_ptr<const FlatTorus> torus_;
  double a_;
  Eigen::VectorXd c_;
};

}  // namespace tpoint
