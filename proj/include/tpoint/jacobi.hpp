#pragma once

#include <algorithm>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "tpoint/solver.hpp"

namespace tpoint {

/// Jacobi field data along a geodesic arc: value and covariant derivative at
/// the start, value and derivative at the end after integration.
struct JacobiFrame {
  GeodesicArc arc;
  Eigen::VectorXd J0;
  Eigen::VectorXd Jdot0;
  Eigen::VectorXd J1;
  Eigen::VectorXd Jdot1;
};

/// Integrates the Jacobi system J'' = R(gdot, J) gdot along the arc's own
/// step grid and returns the endpoint data.
inline JacobiFrame jacobi_propagate(const Manifold& M, const GeodesicArc& arc,
                                    const Eigen::VectorXd& J0, const Eigen::VectorXd& Jdot0) {
  Eigen::MatrixXd J(M.rep_dim(), 1), K(M.rep_dim(), 1);
  J.col(0) = J0;
  K.col(0) = Jdot0;
  M.propagate_jacobi(arc, J, K);
  return {arc, J0, Jdot0, J.col(0), K.col(0)};
}

namespace detail {

/// Propagates Jacobi columns from the arc end back to the arc start: a field
/// J on the reversed geodesic has value J(1-s) and derivative -Jdot(1-s), so
/// feeding (J1, -Jdot1) forward along the reversal returns (J0, -Jdot0).
inline void jacobi_backward(const Manifold& M, const GeodesicArc& arc, Eigen::MatrixXd& J,
                            Eigen::MatrixXd& K) {
  GeodesicArc rev;
  rev.initial = {arc.points.back(), -arc.velocities.back()};
  rev.duration = arc.duration;
  rev.steps = arc.steps;
  K = -K;
  M.propagate_jacobi(rev, J, K);
  K = -K;
}

}  // namespace detail

/// Kernel of the degeneracy boundary system at a record.
struct KernelReport {
  int dim = 0;
  bool borderline = false;
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd basis;
};

/// Degeneracy test through Jacobi fields: a positive-shift solution is
/// degenerate exactly when some field J along its arc closes up under f,
///   J(1) = df(J(0)),
///   (d2f . J(0))^T gdot(1) + df^T(Jdot(1)) = Jdot(0),
/// where (d2f . J(0))^T is the adjoint of u -> d2f[J(0), u]. The report
/// carries the kernel dimension of the assembled 2n x 2n map over a frame
/// basis of (J(0), Jdot(0)), the singular values, and the kernel basis in
/// those frame coordinates. Singular values below 1e-6 of the largest count
/// as zero; anything in the ambiguous band [1e-8, 1e-4] flags the record as
/// borderline.
inline KernelReport kernel_test(const SmoothMap& f, const TranslatedPointRecord& rec) {
  const Manifold& M = f.manifold();
  const int n = M.dim();
  const int d = M.rep_dim();
  const GeodesicArc& arc = rec.geodesic;
  if (arc.points.empty())
    throw std::invalid_argument("record carries no geodesic samples; rebuild them first");
  const Eigen::VectorXd& x = rec.state.x;
  const Eigen::VectorXd fx = f.eval(x);
  const Eigen::VectorXd& y = arc.points.back();
  const Eigen::MatrixXd Fx = tangent_frame(M, x);
  const Eigen::MatrixXd Fy = tangent_frame(M, y);
  const Eigen::VectorXd gdot1 = M.transport_between(y, fx, arc.velocities.back());

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, 2 * n);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d, 2 * n);
  J.leftCols(n) = Fx;
  K.rightCols(n) = Fx;
  M.propagate_jacobi(arc, J, K);

  Eigen::MatrixXd A(2 * n, 2 * n);
  for (int c = 0; c < 2 * n; ++c) {
    Eigen::VectorXd pos = J.col(c);
    Eigen::VectorXd vel(n);
    if (c < n) {
      pos -= M.transport_between(fx, y, f.differential(x, Fx.col(c)));
      for (int a = 0; a < n; ++a)
        vel(a) = f.second_differential(x, Fx.col(c), Fx.col(a)).dot(gdot1);
    } else {
      vel.setZero();
    }
    Eigen::VectorXd back = f.adjoint_differential(x, M.transport_between(y, fx, K.col(c)));
    if (c >= n) back -= Fx.col(c - n);
    A.col(c).head(n) = Fy.transpose() * pos;
    A.col(c).tail(n) = vel + Fx.transpose() * back;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double top = sv(0);
  KernelReport report;
  report.singular_values = sv;
  for (int i = 0; i < sv.size(); ++i) {
    const double rel = top > 0.0 ? sv(i) / top : 0.0;
    if (rel < 1e-6) ++report.dim;
    if (rel >= 1e-8 && rel <= 1e-4) report.borderline = true;
  }
  if (report.dim > 2 * n - 1)
    throw std::runtime_error("degeneracy kernel exceeds the structural bound 2 dim - 1");
  report.basis = svd.matrixV().rightCols(report.dim);
  return report;
}

/// Spectrum of the linearized return map at a record.
struct DynamicalReport {
  bool nondegenerate = false;
  double spectral_gap = 0.0;
  Eigen::VectorXcd eigenvalues;
  Eigen::MatrixXd matrix;
};

/// Degeneracy test through dynamics: the record's lifted point (x, v) is a
/// fixed point of the contact lift of f composed with the backward geodesic
/// flow, taken at the flowed point (gamma(1), gdot(1)/t). This assembles that
/// composition's linearization in the (J, Jdot/t) splitting of the unit
/// bundle tangent and reports the distance of its spectrum to 1; the record
/// is nondegenerate when no eigenvalue sits within 1e-6 of 1. Errors if df
/// is numerically singular.
inline DynamicalReport dynamical_test(const SmoothMap& f, const TranslatedPointRecord& rec) {
  const Manifold& M = f.manifold();
  const int n = M.dim();
  const int d = M.rep_dim();
  const double t = rec.state.t;
  if (!(t > 0.0)) throw std::invalid_argument("dynamical test needs a positive shift");
  const GeodesicArc& arc = rec.geodesic;
  const Eigen::VectorXd& x = rec.state.x;
  const Eigen::VectorXd& v = rec.state.v;
  const Eigen::VectorXd fx = f.eval(x);
  const Eigen::VectorXd& y = arc.points.back();
  Eigen::VectorXd w = M.project_tangent(y, arc.velocities.back() / t);
  w /= w.norm();
  const Eigen::MatrixXd Fy = tangent_frame(M, y);
  const Eigen::MatrixXd Pw = detail::perp_frame(M, y, w);
  const int m = 2 * n - 1;

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, m);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d, m);
  J.leftCols(n) = Fy;
  K.rightCols(n - 1) = t * Pw;
  detail::jacobi_backward(M, arc, J, K);

  Eigen::MatrixXd A(m, m);
  for (int c = 0; c < m; ++c) {
    Eigen::VectorXd dx = M.project_tangent(x, J.col(c));
    Eigen::VectorXd du = M.project_tangent(x, K.col(c)) / t;
    du -= v * v.dot(du);
    Eigen::VectorXd pos = f.differential(x, dx);
    Eigen::VectorXd fib = f.inverse_adjoint(x, du) + f.nabla_inverse_adjoint(x, dx) * v;
    pos = M.transport_between(fx, y, pos);
    fib = M.transport_between(fx, y, fib);
    fib -= w * w.dot(fib);
    A.col(c).head(n) = Fy.transpose() * pos;
    A.col(c).tail(n - 1) = Pw.transpose() * fib;
  }

  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  DynamicalReport report;
  report.eigenvalues = es.eigenvalues();
  report.matrix = A;
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) gap = std::min(gap, std::abs(report.eigenvalues(i) - 1.0));
  report.spectral_gap = gap;
  report.nondegenerate = gap > 1e-6;
  return report;
}

/// Discrete second variation of the energy on the constrained path space:
/// nodes x_0 .. x_{N-1} are free, x_N = f(x_0) rides along, and entries are
/// cross differences of the energy over exp-chart moves in orthonormal
/// frames at the free nodes. Coordinate i*n + a is direction a of the frame
/// at node i.
struct HessianMatrix {
  std::vector<Eigen::VectorXd> nodes;
  std::vector<Eigen::MatrixXd> frames;
  Eigen::MatrixXd entries;
  int segments = 0;
};

inline HessianMatrix build_hessian(const std::shared_ptr<const SmoothMap>& f,
                                   const TranslatedPointRecord& rec, int segments = 32) {
  const SmoothMap& map = *f;
  const Manifold& M = map.manifold();
  const int n = M.dim();
  const int N = segments;
  const double h = 1e-4;

  HessianMatrix H;
  H.segments = N;
  H.nodes = record_to_path(rec, f, N).nodes();
  H.frames.reserve(N);
  for (int i = 0; i < N; ++i) H.frames.push_back(tangent_frame(M, H.nodes[i]));

  std::vector<double> seg(N);
  for (int s = 0; s < N; ++s) seg[s] = M.log_map(H.nodes[s], H.nodes[s + 1]).squaredNorm();

  const auto entry = [&](int p, int q) {
    const int ip = p / n, ap = p % n;
    const int iq = q / n, aq = q % n;
    std::vector<int> segs;
    const auto touch = [&](int k) {
      if (k > 0) segs.push_back(k - 1);
      segs.push_back(k);
    };
    touch(ip);
    if (iq != ip) touch(iq);
    if (ip == 0 || iq == 0) segs.push_back(N - 1);
    std::sort(segs.begin(), segs.end());
    segs.erase(std::unique(segs.begin(), segs.end()), segs.end());

    double quad = 0.0;
    for (int sp = 0; sp < 2; ++sp) {
      for (int sq = 0; sq < 2; ++sq) {
        const double hp = sp == 0 ? h : -h;
        const double hq = sq == 0 ? h : -h;
        Eigen::VectorXd xi, xj, xN;
        if (ip == iq) {
          xi = exp_map(M, H.nodes[ip], hp * H.frames[ip].col(ap) + hq * H.frames[iq].col(aq));
        } else {
          xi = exp_map(M, H.nodes[ip], hp * H.frames[ip].col(ap));
          xj = exp_map(M, H.nodes[iq], hq * H.frames[iq].col(aq));
        }
        const bool zero_moved = ip == 0 || iq == 0;
        if (zero_moved) xN = map.eval(ip == 0 ? xi : xj);
        const auto at = [&](int k) -> const Eigen::VectorXd& {
          if (k == ip) return xi;
          if (k == iq && iq != ip) return xj;
          if (k == N && zero_moved) return xN;
          return H.nodes[k];
        };
        double delta = 0.0;
        for (int s : segs) delta += M.log_map(at(s), at(s + 1)).squaredNorm() - seg[s];
        quad += (sp == sq ? 1.0 : -1.0) * delta;
      }
    }
    return quad * N / (4.0 * h * h);
  };

  const int dim = n * N;
  H.entries.resize(dim, dim);
  for (int p = 0; p < dim; ++p)
    for (int q = p; q < dim; ++q) {
      const double val = entry(p, q);
      H.entries(p, q) = val;
      H.entries(q, p) = val;
    }
  return H;
}

inline Eigen::VectorXd hessian_spectrum(const HessianMatrix& H) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.entries);
  return es.eigenvalues();
}

/// Eigenvalues below -1e-6 of the spectral scale count as negative; the
/// scale is the largest eigenvalue magnitude.
inline int negative_count(const Eigen::VectorXd& eigenvalues) {
  const double scale = eigenvalues.cwiseAbs().maxCoeff();
  int count = 0;
  for (int i = 0; i < eigenvalues.size(); ++i)
    if (eigenvalues(i) < -1e-6 * scale) ++count;
  return count;
}

/// Eigenvalue magnitudes below 1e-5 of the spectral scale count as kernel.
inline int kernel_count(const Eigen::VectorXd& eigenvalues) {
  const double scale = eigenvalues.cwiseAbs().maxCoeff();
  int count = 0;
  for (int i = 0; i < eigenvalues.size(); ++i)
    if (std::abs(eigenvalues(i)) < 1e-5 * scale) ++count;
  return count;
}

/// Number of descending directions of the energy at the record, counted from
/// the discrete second variation.
inline int morse_index(const std::shared_ptr<const SmoothMap>& f,
                       const TranslatedPointRecord& rec, int segments = 32) {
  return negative_count(hessian_spectrum(build_hessian(f, rec, segments)));
}

/// Second variation of the energy at the record as a bilinear form on path
/// tangents sampled over the record's own arc grid; U and V must satisfy the
/// linearized endpoint constraint U_end = df(U_0). Equals
///   2 [ integral of <R(V, gdot) U, gdot> + <U', V'>  +  <d2f[U_0, V_0], gdot(1)> ],
/// the full second derivative of the energy along exp-chart rays.
inline double hessian_form(const SmoothMap& f, const TranslatedPointRecord& rec,
                           const PathTangent& U, const PathTangent& V) {
  const Manifold& M = f.manifold();
  const GeodesicArc& arc = rec.geodesic;
  const int S = static_cast<int>(arc.points.size()) - 1;
  if (static_cast<int>(U.vectors.size()) != S + 1 || static_cast<int>(V.vectors.size()) != S + 1)
    throw std::invalid_argument("tangent size does not match the arc grid");
  const double hs = 1.0 / S;

  double curv = 0.0;
  for (int i = 0; i <= S; ++i) {
    const double wgt = (i == 0 || i == S) ? 0.5 : 1.0;
    curv +=
        wgt * M.curvature_term(arc.points[i], arc.velocities[i], V.vectors[i]).dot(U.vectors[i]);
  }
  curv *= hs;

  double deriv = 0.0;
  for (int i = 0; i < S; ++i) {
    const Eigen::VectorXd Ud =
        (M.transport_between(arc.points[i + 1], arc.points[i], U.vectors[i + 1]) - U.vectors[i]) /
        hs;
    const Eigen::VectorXd Vd =
        (M.transport_between(arc.points[i + 1], arc.points[i], V.vectors[i + 1]) - V.vectors[i]) /
        hs;
    deriv += Ud.dot(Vd) * hs;
  }

  const Eigen::VectorXd& x = arc.points.front();
  const Eigen::VectorXd fx = f.eval(x);
  const Eigen::VectorXd gdot1 = M.transport_between(arc.points.back(), fx, arc.velocities.back());
  const double boundary = f.second_differential(x, U.vectors.front(), V.vectors.front()).dot(gdot1);
  return 2.0 * (curv + deriv + boundary);
}

struct ClassifyOptions {
  int segments = 32;
  bool with_index = true;
  int threads = 1;
};

/// Fills kernel_dim, nondegenerate, borderline, and morse_index on a
/// positive-shift record; zero-shift records come back unchanged. Borderline
/// records keep morse_index = -1 ("unknown").
inline TranslatedPointRecord classify_record(const std::shared_ptr<const SmoothMap>& f,
                                             TranslatedPointRecord rec,
                                             const ClassifyOptions& opt = {}) {
  if (!(rec.state.t > 0.0)) return rec;
  const KernelReport report = kernel_test(*f, rec);
  rec.kernel_dim = report.dim;
  rec.nondegenerate = report.dim == 0;
  rec.borderline = report.borderline;
  if (opt.with_index && !report.borderline)
    rec.morse_index = morse_index(f, rec, opt.segments);
  else
    rec.morse_index = -1;
  return rec;
}

inline std::vector<TranslatedPointRecord> classify_records(
    const std::shared_ptr<const SmoothMap>& f, const std::vector<TranslatedPointRecord>& records,
    const ClassifyOptions& opt = {}) {
  return detail::run_seeds(records.size(), opt.threads,
                           [&](std::uint64_t i) -> std::optional<TranslatedPointRecord> {
                             return classify_record(f, records[i], opt);
                           });
}

}  // namespace tpoint
