#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "test_support.hpp"
#include "tpoint/jacobi.hpp"

using namespace tpoint;

namespace {

std::shared_ptr<const Sphere> unit_sphere() { return std::make_shared<Sphere>(2, 1.0); }

std::shared_ptr<const FlatTorus> wide_torus() {
  Eigen::VectorXd periods(2);
  periods << 2.0 * M_PI, 2.6 * M_PI;
  return std::make_shared<FlatTorus>(periods);
}

Eigen::VectorXd equator_point(double phi) {
  Eigen::VectorXd x(3);
  x << std::cos(phi), std::sin(phi), 0.0;
  return x;
}

Eigen::VectorXd east_direction(double phi) {
  Eigen::VectorXd v(3);
  v << -std::sin(phi), std::cos(phi), 0.0;
  return v;
}

TranslatedPointRecord converged(const std::shared_ptr<const SmoothMap>& f,
                                const Eigen::VectorXd& x, const Eigen::VectorXd& v, double t,
                                double tol = 1e-8) {
  SolverOptions opt;
  opt.tol = tol;
  auto rec = newton_solve(*f, {x, v, t}, opt);
  REQUIRE(rec.has_value());
  REQUIRE(rec->residual_norm < 10.0 * tol);
  return *rec;
}

Eigen::VectorXd translation_shift() {
  Eigen::VectorXd c(2);
  c << 1.0, 0.7;
  return c;
}

TranslatedPointRecord wave_record(const std::shared_ptr<const TorusWaveMap>& wave) {
  const auto& torus = wave->manifold();
  const double l2 = dynamic_cast<const FlatTorus&>(torus).periods()[1];
  Eigen::VectorXd x(2);
  x << 0.37, 0.25 * l2;
  Eigen::VectorXd w = translation_shift();
  w[0] += wave->amplitude();
  const double t = w.norm();
  return converged(wave, x, w / t, t);
}

PathTangent arc_tangent(const Manifold& M, const GeodesicArc& arc,
                        const std::function<Eigen::VectorXd(double)>& field) {
  PathTangent U;
  const int S = static_cast<int>(arc.points.size()) - 1;
  U.vectors.resize(S + 1);
  for (int i = 0; i <= S; ++i) {
    const double s = static_cast<double>(i) / S;
    U.vectors[i] = M.project_tangent(arc.points[i], field(s));
  }
  return U;
}

double fd_quadratic(const SmoothMap& f, const TranslatedPointRecord& rec, const PathTangent& U,
                    double eps) {
  const Manifold& M = f.manifold();
  const GeodesicArc& arc = rec.geodesic;
  const int S = static_cast<int>(arc.points.size()) - 1;
  const auto energy_of = [&](double e) {
    std::vector<Eigen::VectorXd> nod(S + 1);
    for (int i = 0; i < S; ++i) nod[i] = exp_map(M, arc.points[i], e * U.vectors[i]);
    nod[S] = f.eval(nod[0]);
    double acc = 0.0;
    for (int i = 0; i < S; ++i) acc += M.log_map(nod[i], nod[i + 1]).squaredNorm();
    return acc * S;
  };
  return (energy_of(eps) - 2.0 * energy_of(0.0) + energy_of(-eps)) / (eps * eps);
}

}  // namespace

TEST_CASE("jacobi propagation reproduces the constant-curvature closed form") {
  auto S = unit_sphere();
  const Eigen::VectorXd x = equator_point(0.0);
  const Eigen::VectorXd v = east_direction(0.0);
  const Eigen::VectorXd normal = Eigen::VectorXd::Unit(3, 2);

  const GeodesicArc full = S->geodesic({x, v}, M_PI);
  const JacobiFrame at_pi = jacobi_propagate(*S, full, Eigen::VectorXd::Zero(3), normal);
  CHECK(at_pi.J1.norm() < 1e-6);
  CHECK((at_pi.Jdot1 + normal).norm() < 1e-6);

  const GeodesicArc half = S->geodesic({x, v}, 0.5 * M_PI);
  const JacobiFrame at_half = jacobi_propagate(*S, half, Eigen::VectorXd::Zero(3), normal);
  CHECK((at_half.J1 - normal).norm() < 1e-6);
  CHECK(at_half.Jdot1.norm() < 1e-6);
}

TEST_CASE("velocity fields propagate as jacobi fields") {
  std::mt19937 rng(41);
  Eigen::VectorXd axes(3);
  axes << 1.0, 1.3, 0.8;
  const std::vector<std::shared_ptr<const Manifold>> models = {unit_sphere(),
                                                              std::make_shared<Ellipsoid>(axes)};
  for (const auto& M : models) {
    const Eigen::VectorXd x = testing::random_point(*M, rng);
    const Eigen::VectorXd v = testing::random_unit_tangent(*M, x, rng);
    const GeodesicArc arc = M->geodesic({x, 1.4 * v}, 0.7);
    const JacobiFrame fr =
        jacobi_propagate(*M, arc, arc.initial.vec, Eigen::VectorXd::Zero(M->rep_dim()));
    CHECK((fr.J1 - arc.velocities.back()).norm() < 1e-8);
    CHECK(fr.Jdot1.norm() < 1e-8);
  }
}

TEST_CASE("jacobi propagation is linear in its initial data") {
  std::mt19937 rng(42);
  Eigen::VectorXd axes(3);
  axes << 1.1, 0.9, 1.4;
  const std::vector<std::shared_ptr<const Manifold>> models = {unit_sphere(),
                                                              std::make_shared<Ellipsoid>(axes)};
  for (const auto& M : models) {
    for (int trial = 0; trial < 3; ++trial) {
      const Eigen::VectorXd x = testing::random_point(*M, rng);
      const Eigen::VectorXd v = testing::random_unit_tangent(*M, x, rng);
      const GeodesicArc arc = M->geodesic({x, v}, 1.1);
      const Eigen::VectorXd Ja = testing::random_tangent(*M, x, rng);
      const Eigen::VectorXd Ka = testing::random_tangent(*M, x, rng);
      const Eigen::VectorXd Jb = testing::random_tangent(*M, x, rng);
      const Eigen::VectorXd Kb = testing::random_tangent(*M, x, rng);
      const JacobiFrame fa = jacobi_propagate(*M, arc, Ja, Ka);
      const JacobiFrame fb = jacobi_propagate(*M, arc, Jb, Kb);
      const JacobiFrame combo =
          jacobi_propagate(*M, arc, 2.0 * Ja - 0.3 * Jb, 2.0 * Ka - 0.3 * Kb);
      CHECK((combo.J1 - (2.0 * fa.J1 - 0.3 * fb.J1)).norm() < 1e-8);
      CHECK((combo.Jdot1 - (2.0 * fa.Jdot1 - 0.3 * fb.Jdot1)).norm() < 1e-8);
    }
  }
}

TEST_CASE("flat torus jacobi fields are affine in the parameter") {
  auto T = wide_torus();
  std::mt19937 rng(43);
  const Eigen::VectorXd x = testing::random_point(*T, rng);
  const Eigen::VectorXd v = testing::random_tangent(*T, x, rng);
  const double tau = 1.37;
  const GeodesicArc arc = T->geodesic({x, v}, tau);
  const Eigen::VectorXd J0 = testing::random_tangent(*T, x, rng);
  const Eigen::VectorXd K0 = testing::random_tangent(*T, x, rng);
  const JacobiFrame fr = jacobi_propagate(*T, arc, J0, K0);
  CHECK((fr.J1 - (J0 + tau * K0)).norm() < 1e-10);
  CHECK((fr.Jdot1 - K0).norm() < 1e-10);
}

TEST_CASE("backward propagation returns jacobi data to the arc start") {
  auto S = unit_sphere();
  std::mt19937 rng(44);
  const Eigen::VectorXd x = testing::random_point(*S, rng);
  const Eigen::VectorXd v = testing::random_unit_tangent(*S, x, rng);
  const GeodesicArc arc = S->geodesic({x, v}, 1.2);
  Eigen::MatrixXd J(3, 2), K(3, 2);
  for (int c = 0; c < 2; ++c) {
    J.col(c) = testing::random_tangent(*S, x, rng);
    K.col(c) = testing::random_tangent(*S, x, rng);
  }
  const Eigen::MatrixXd J0 = J, K0 = K;
  S->propagate_jacobi(arc, J, K);
  detail::jacobi_backward(*S, arc, J, K);
  CHECK((J - J0).norm() < 1e-8);
  CHECK((K - K0).norm() < 1e-8);
}

TEST_CASE("kernel dimensions at closed-form records") {
  auto S = unit_sphere();
  auto id = std::make_shared<IdentityMap>(S);

  SECTION("identity at a full great circle turns the whole bundle tangent") {
    const TranslatedPointRecord rec =
        converged(id, equator_point(0.3), east_direction(0.3), 2.0 * M_PI);
    const KernelReport report = kernel_test(*id, rec);
    CHECK(report.dim == 3);
    CHECK(report.singular_values.size() == 4);
    CHECK(report.basis.cols() == 3);

    TranslatedPointRecord finer = rec;
    finer.geodesic = S->geodesic(rec.geodesic.initial, rec.geodesic.duration,
                                 2 * rec.geodesic.steps);
    CHECK(kernel_test(*id, finer).dim == 3);
  }

  SECTION("rotation records carry exactly the solution circle") {
    auto rot =
        std::make_shared<RotationMap>(S, Eigen::Vector3d::UnitZ(), M_PI / 3.0);
    const TranslatedPointRecord rec =
        converged(rot, equator_point(1.0), east_direction(1.0), M_PI / 3.0);
    const KernelReport report = kernel_test(*rot, rec);
    CHECK(report.dim == 1);
    CHECK_FALSE(report.borderline);
  }

  SECTION("torus translations are flat two-parameter families") {
    auto T = wide_torus();
    auto f = TorusAffineMap::translation(T, translation_shift());
    const Eigen::VectorXd c = translation_shift();
    Eigen::VectorXd x(2);
    x << 0.4, 1.9;
    const TranslatedPointRecord rec = converged(f, x, c / c.norm(), c.norm());
    CHECK(kernel_test(*f, rec).dim == 2);
  }

  SECTION("wave maps keep the circle their symmetry provides") {
    auto T = wide_torus();
    auto wave = std::make_shared<TorusWaveMap>(T, 0.3, translation_shift());
    const KernelReport report = kernel_test(*wave, wave_record(wave));
    CHECK(report.dim == 1);
    CHECK_FALSE(report.borderline);
  }

  SECTION("zero-shift records trip the structural bound") {
    TranslatedPointRecord fixed;
    fixed.state = {equator_point(0.0), east_direction(0.0), 0.0};
    fixed.geodesic = S->geodesic({fixed.state.x, Eigen::VectorXd::Zero(3)}, 0.0);
    CHECK_THROWS_AS(kernel_test(*id, fixed), std::runtime_error);
  }
}

TEST_CASE("dynamical and kernel verdicts agree across kinds") {
  auto S = unit_sphere();
  auto T = wide_torus();
  auto id = std::make_shared<IdentityMap>(S);
  auto rot = std::make_shared<RotationMap>(S, Eigen::Vector3d::UnitZ(), M_PI / 3.0);
  auto trans = TorusAffineMap::translation(T, translation_shift());
  auto wave = std::make_shared<TorusWaveMap>(T, 0.3, translation_shift());
  auto flow = std::make_shared<FlowMap>(S, "height-gradient", 0.05);

  std::vector<std::pair<std::shared_ptr<const SmoothMap>, TranslatedPointRecord>> cases;
  cases.emplace_back(id, converged(id, equator_point(0.7), east_direction(0.7), 2.0 * M_PI));
  for (const double phi : {0.0, 2.2})
    cases.emplace_back(rot, converged(rot, equator_point(phi), east_direction(phi), M_PI / 3.0));
  {
    const Eigen::VectorXd c = translation_shift();
    Eigen::VectorXd x(2);
    x << 5.1, 0.6;
    cases.emplace_back(trans, converged(trans, x, c / c.norm(), c.norm()));
  }
  cases.emplace_back(wave, wave_record(wave));
  for (const double phi : {0.4, 2.8}) {
    auto rec = newton_solve(*flow, {equator_point(phi), east_direction(phi), 2.0 * M_PI},
                            SolverOptions{});
    REQUIRE(rec.has_value());
    cases.emplace_back(flow, *rec);
  }

  for (const auto& [f, rec] : cases) {
    const KernelReport ker = kernel_test(*f, rec);
    const DynamicalReport dyn = dynamical_test(*f, rec);
    INFO("kind " << f->kind() << " at t " << rec.state.t);
    CHECK(dyn.nondegenerate == (ker.dim == 0));
  }
}

TEST_CASE("degenerate spectra sit at one across symmetric kinds") {
  auto S = unit_sphere();
  auto T = wide_torus();
  auto id = std::make_shared<IdentityMap>(S);
  auto trans = TorusAffineMap::translation(T, translation_shift());
  auto flow = std::make_shared<FlowMap>(S, "height-gradient", 0.05);

  const TranslatedPointRecord zoll =
      converged(id, equator_point(0.7), east_direction(0.7), 2.0 * M_PI);
  const DynamicalReport zoll_dyn = dynamical_test(*id, zoll);
  CHECK_FALSE(zoll_dyn.nondegenerate);
  for (int i = 0; i < zoll_dyn.eigenvalues.size(); ++i)
    CHECK(std::abs(zoll_dyn.eigenvalues(i) - 1.0) < 1e-6);

  const Eigen::VectorXd c = translation_shift();
  Eigen::VectorXd x(2);
  x << 5.1, 0.6;
  const DynamicalReport flat_dyn =
      dynamical_test(*trans, converged(trans, x, c / c.norm(), c.norm()));
  CHECK_FALSE(flat_dyn.nondegenerate);
  const Eigen::MatrixXd nil =
      flat_dyn.matrix - Eigen::MatrixXd::Identity(flat_dyn.matrix.rows(), flat_dyn.matrix.cols());
  CHECK((nil * nil).norm() < 1e-10);
  for (int i = 0; i < flat_dyn.eigenvalues.size(); ++i)
    CHECK(std::abs(flat_dyn.eigenvalues(i) - 1.0) < 1e-5);

  auto rec = newton_solve(*flow, {equator_point(0.4), east_direction(0.4), 2.0 * M_PI},
                          SolverOptions{});
  REQUIRE(rec.has_value());
  const DynamicalReport flow_dyn = dynamical_test(*flow, *rec);
  const KernelReport flow_ker = kernel_test(*flow, *rec);
  CHECK_FALSE(flow_dyn.nondegenerate);
  CHECK(flow_ker.dim == 1);
  CHECK(flow_ker.borderline);
}

TEST_CASE("discrete hessian symmetry and the reparametrization kernel") {
  auto S = unit_sphere();
  auto id = std::make_shared<IdentityMap>(S);
  const TranslatedPointRecord rec =
      converged(id, equator_point(0.0), east_direction(0.0), 2.0 * M_PI);
  const HessianMatrix H = build_hessian(id, rec, 24);

  const double entry_scale = H.entries.cwiseAbs().maxCoeff();
  CHECK((H.entries - H.entries.transpose()).cwiseAbs().maxCoeff() < 1e-9 * entry_scale);

  const Eigen::VectorXd spectrum = hessian_spectrum(H);
  const double scale = spectrum.cwiseAbs().maxCoeff();

  const int n = S->dim();
  Eigen::VectorXd reparam(n * H.segments);
  for (int i = 0; i < H.segments; ++i)
    reparam.segment(i * n, n) =
        H.frames[i].transpose() * S->log_map(H.nodes[i], H.nodes[i + 1]);
  reparam /= reparam.norm();
  CHECK((H.entries * reparam).norm() < 1e-5 * scale);

  CHECK(kernel_count(spectrum) == 3);
  CHECK(negative_count(spectrum) == 1);
}

TEST_CASE("hessian kernels agree with the boundary system on every kind") {
  auto S = unit_sphere();
  auto T = wide_torus();
  auto id = std::make_shared<IdentityMap>(S);
  auto rot = std::make_shared<RotationMap>(S, Eigen::Vector3d::UnitZ(), M_PI / 3.0);
  auto trans = TorusAffineMap::translation(T, translation_shift());
  auto wave = std::make_shared<TorusWaveMap>(T, 0.3, translation_shift());

  std::vector<std::pair<std::shared_ptr<const SmoothMap>, TranslatedPointRecord>> cases;
  cases.emplace_back(id, converged(id, equator_point(0.0), east_direction(0.0), 2.0 * M_PI));
  cases.emplace_back(rot, converged(rot, equator_point(1.0), east_direction(1.0), M_PI / 3.0));
  {
    const Eigen::VectorXd c = translation_shift();
    Eigen::VectorXd x(2);
    x << 0.4, 1.9;
    cases.emplace_back(trans, converged(trans, x, c / c.norm(), c.norm()));
  }
  cases.emplace_back(wave, wave_record(wave));

  for (const auto& [f, rec] : cases) {
    const Eigen::VectorXd spectrum = hessian_spectrum(build_hessian(f, rec, 32));
    INFO("kind " << f->kind());
    CHECK(kernel_count(spectrum) == kernel_test(*f, rec).dim);
  }
}

TEST_CASE("morse indices match the classical counts and survive refinement") {
  auto S = unit_sphere();
  auto T = wide_torus();
  auto id = std::make_shared<IdentityMap>(S);
  auto trans = TorusAffineMap::translation(T, translation_shift());

  const TranslatedPointRecord once =
      converged(id, equator_point(0.0), east_direction(0.0), 2.0 * M_PI);
  CHECK(morse_index(id, once, 32) == 1);
  CHECK(morse_index(id, once, 64) == 1);

  const TranslatedPointRecord twice =
      converged(id, equator_point(0.0), east_direction(0.0), 4.0 * M_PI, 1e-7);
  CHECK(morse_index(id, twice, 32) == 3);
  CHECK(morse_index(id, twice, 64) == 3);

  const Eigen::VectorXd c = translation_shift();
  Eigen::VectorXd x(2);
  x << 0.4, 1.9;
  const TranslatedPointRecord shortest = converged(trans, x, c / c.norm(), c.norm());
  CHECK(morse_index(trans, shortest, 32) == 0);
  CHECK(morse_index(trans, shortest, 64) == 0);
}

TEST_CASE("hessian form matches finite differences of the energy") {
  auto S = unit_sphere();
  auto T = wide_torus();
  auto id = std::make_shared<IdentityMap>(S);
  auto rot = std::make_shared<RotationMap>(S, Eigen::Vector3d::UnitZ(), M_PI / 3.0);
  auto trans = TorusAffineMap::translation(T, translation_shift());
  auto wave = std::make_shared<TorusWaveMap>(T, 0.3, translation_shift());
  std::mt19937 rng(45);
  std::normal_distribution<double> g(0.0, 1.0);

  SECTION("the closed-circle reparametrization direction is null") {
    const TranslatedPointRecord rec =
        converged(id, equator_point(0.0), east_direction(0.0), 2.0 * M_PI);
    PathTangent U;
    U.vectors.assign(rec.geodesic.velocities.begin(), rec.geodesic.velocities.end());
    CHECK(std::abs(hessian_form(*id, rec, U, U)) < 1e-6);
  }

  SECTION("isometries contribute no boundary term") {
    const Eigen::VectorXd x = equator_point(1.0);
    CHECK(rot->second_differential(x, east_direction(1.0), Eigen::VectorXd::Unit(3, 2)).norm() <
          1e-10);
  }

  SECTION("second differences on interior variations") {
    const TranslatedPointRecord rec =
        converged(rot, equator_point(1.0), east_direction(1.0), M_PI / 3.0);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::MatrixXd amp(3, 3);
      for (int i = 0; i < amp.size(); ++i) amp(i / 3, i % 3) = g(rng);
      const PathTangent U = arc_tangent(*S, rec.geodesic, [&](double s) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
        for (int k = 0; k < 3; ++k) w += std::sin((k + 1) * M_PI * s) * amp.col(k);
        return w;
      });
      const double form = hessian_form(*rot, rec, U, U);
      const double fd = fd_quadratic(*rot, rec, U, 1e-3);
      CHECK(std::abs(form - fd) < 1e-3 * std::max(1.0, std::abs(fd)));
    }
  }

  SECTION("second differences with a live boundary term") {
    const TranslatedPointRecord rec = wave_record(wave);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd u0(2), bump(2);
      u0 << g(rng), g(rng);
      bump << g(rng), g(rng);
      const Eigen::VectorXd u1 = wave->differential(rec.state.x, u0);
      const PathTangent U = arc_tangent(*T, rec.geodesic, [&](double s) {
        return Eigen::VectorXd((1.0 - s) * u0 + s * u1 + std::sin(M_PI * s) * bump);
      });
      const double form = hessian_form(*wave, rec, U, U);
      const double fd = fd_quadratic(*wave, rec, U, 1e-3);
      CHECK(std::abs(form - fd) < 1e-3 * std::max(1.0, std::abs(fd)));
    }
  }

  SECTION("second differences on flat translations") {
    const Eigen::VectorXd c = translation_shift();
    Eigen::VectorXd x(2);
    x << 0.4, 1.9;
    const TranslatedPointRecord rec = converged(trans, x, c / c.norm(), c.norm());
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd u0(2), bump(2);
      u0 << g(rng), g(rng);
      bump << g(rng), g(rng);
      const PathTangent U = arc_tangent(*T, rec.geodesic, [&](double s) {
        return Eigen::VectorXd(u0 + std::sin(2.0 * M_PI * s) * bump);
      });
      const double form = hessian_form(*trans, rec, U, U);
      const double fd = fd_quadratic(*trans, rec, U, 1e-3);
      CHECK(std::abs(form - fd) < 1e-3 * std::max(1.0, std::abs(fd)));
    }
  }

  SECTION("the form is symmetric in its arguments") {
    const TranslatedPointRecord rec =
        converged(rot, equator_point(1.0), east_direction(1.0), M_PI / 3.0);
    const PathTangent U = arc_tangent(*S, rec.geodesic, [&](double s) {
      return Eigen::VectorXd(std::sin(M_PI * s) * Eigen::VectorXd::Unit(3, 2));
    });
    const PathTangent V = arc_tangent(*S, rec.geodesic, [&](double s) {
      return Eigen::VectorXd(std::sin(2.0 * M_PI * s) * Eigen::VectorXd::Unit(3, 0));
    });
    const double uv = hessian_form(*rot, rec, U, V);
    const double vu = hessian_form(*rot, rec, V, U);
    CHECK(std::abs(uv - vu) < 1e-9 * std::max(1.0, std::abs(uv)));
  }
}

TEST_CASE("quadrature form agrees with the discrete second variation") {
  auto S = unit_sphere();
  auto id = std::make_shared<IdentityMap>(S);
  const TranslatedPointRecord rec =
      converged(id, equator_point(0.0), east_direction(0.0), 2.0 * M_PI);
  const HessianMatrix H = build_hessian(id, rec, 32);
  const int n = S->dim();

  const auto compare = [&](const Eigen::VectorXd& ambient) {
    const PathTangent U = arc_tangent(*S, rec.geodesic, [&](double) { return ambient; });
    const double form = hessian_form(*id, rec, U, U);
    Eigen::VectorXd u(n * H.segments);
    for (int i = 0; i < H.segments; ++i)
      u.segment(i * n, n) =
          H.frames[i].transpose() * S->project_tangent(H.nodes[i], ambient);
    const double quad = u.dot(H.entries * u);
    CHECK(std::abs(form - quad) < 0.02 * std::max(0.1, std::abs(quad)));
    return form;
  };

  const double northward = compare(Eigen::VectorXd::Unit(3, 2));
  CHECK(northward < 0.0);
  compare(0.5 * Eigen::VectorXd::Unit(3, 0) + Eigen::VectorXd::Unit(3, 2));
}

TEST_CASE("classification fills the record flags") {
  auto S = unit_sphere();
  auto T = wide_torus();
  auto rot = std::make_shared<RotationMap>(S, Eigen::Vector3d::UnitZ(), M_PI / 3.0);
  auto trans = TorusAffineMap::translation(T, translation_shift());

  const TranslatedPointRecord rot_rec =
      converged(rot, equator_point(1.0), east_direction(1.0), M_PI / 3.0);
  const TranslatedPointRecord rot_classified = classify_record(rot, rot_rec);
  CHECK(rot_classified.kernel_dim == 1);
  CHECK_FALSE(rot_classified.nondegenerate);
  CHECK_FALSE(rot_classified.borderline);
  CHECK(rot_classified.morse_index >= 1);

  const Eigen::VectorXd c = translation_shift();
  Eigen::VectorXd x(2);
  x << 0.4, 1.9;
  const TranslatedPointRecord flat_rec = converged(trans, x, c / c.norm(), c.norm());
  const TranslatedPointRecord flat_classified = classify_record(trans, flat_rec);
  CHECK(flat_classified.kernel_dim == 2);
  CHECK_FALSE(flat_classified.nondegenerate);
  CHECK(flat_classified.morse_index == 0);

  ClassifyOptions no_index;
  no_index.with_index = false;
  CHECK(classify_record(trans, flat_rec, no_index).morse_index == -1);

  TranslatedPointRecord fixed;
  fixed.state = {equator_point(0.0), east_direction(0.0), 0.0};
  fixed.kernel_dim = 3;
  const TranslatedPointRecord untouched = classify_record(rot, fixed);
  CHECK(untouched.morse_index == -1);
  CHECK(untouched.kernel_dim == 3);

  const auto batch = classify_records(trans, {flat_rec, flat_rec});
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].kernel_dim == 2);
  CHECK(batch[1].morse_index == 0);
}
