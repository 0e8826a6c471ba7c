#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "tpoint/audit.hpp"

using namespace tpoint;

namespace {

std::shared_ptr<Sphere> unit_sphere() { return std::make_shared<Sphere>(2, 1.0); }

std::shared_ptr<FlatTorus> square_torus() {
  return std::make_shared<FlatTorus>(Eigen::Vector2d(2.0 * M_PI, 2.0 * M_PI));
}

const double kTheta = M_PI / 3.0;

SolverOptions scan_options() {
  SolverOptions opt;
  opt.sm_density = 6;
  opt.shift_density = 8;
  return opt;
}

struct RotationFixture {
  std::shared_ptr<Sphere> sphere;
  std::shared_ptr<const SmoothMap> map;
  std::vector<TranslatedPointRecord> records;
};

const RotationFixture& rotation_fixture() {
  static const RotationFixture fixture = [] {
    RotationFixture f;
    f.sphere = unit_sphere();
    f.map = std::make_shared<RotationMap>(f.sphere, Eigen::Vector3d(0, 0, 1), kTheta);
    f.records = window_scan(*f.map, 0.3, 2.0 * M_PI, scan_options());
    return f;
  }();
  return fixture;
}

TranslatedPointRecord synthetic(double t, int kernel_dim = 0, bool borderline = false,
                                bool is_family = false) {
  TranslatedPointRecord r;
  r.state.x = Eigen::Vector3d(1, 0, 0);
  r.state.v = Eigen::Vector3d(0, 1, 0);
  r.state.t = t;
  r.kernel_dim = kernel_dim;
  r.nondegenerate = kernel_dim == 0;
  r.borderline = borderline;
  r.is_family = is_family;
  return r;
}

}  // namespace

TEST_CASE("tower extensions land whole circuits up") {
  auto S = unit_sphere();
  SolverOptions opt;
  opt.steps_multiplier = 2;

  SECTION("identity records climb by one and two circuits") {
    auto id = std::make_shared<IdentityMap>(S);
    const Eigen::Vector3d x(1, 0, 0), v(0, 0, 1);
    const auto base = newton_solve(*id, {x, v, 2.0 * M_PI}, opt);
    REQUIRE(base.has_value());
    const auto up = tower_extend(*id, *base, 1, 2.0 * M_PI, opt);
    CHECK(std::abs(up.state.t - base->state.t - 2.0 * M_PI) < 1e-6);
    CHECK(up.residual_norm < 1e-8);
    const auto up2 = tower_extend(*id, *base, 2, 2.0 * M_PI, opt);
    CHECK(std::abs(up2.state.t - base->state.t - 4.0 * M_PI) < 1e-6);
    CHECK(up2.residual_norm < 1e-8);
  }

  SECTION("rotation records keep their shift offset") {
    const auto& fix = rotation_fixture();
    auto east = newton_solve(*fix.map, {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0), kTheta},
                             opt);
    REQUIRE(east.has_value());
    const auto up = tower_extend(*fix.map, *east, 2, 2.0 * M_PI, opt);
    CHECK(std::abs(up.state.t - (kTheta + 4.0 * M_PI)) < 1e-6);
    CHECK(up.residual_norm < 1e-8);
  }

  SECTION("bad arguments are rejected") {
    auto id = std::make_shared<IdentityMap>(S);
    const auto base = newton_solve(*id, {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 0, 1),
                                         2.0 * M_PI}, opt);
    REQUIRE(base.has_value());
    CHECK_THROWS_AS(tower_extend(*id, *base, 0, 2.0 * M_PI), std::invalid_argument);
    CHECK_THROWS_AS(tower_extend(*id, *base, 1, 0.0), std::invalid_argument);
  }

  SECTION("a torus translation has no circuit to climb") {
    auto T = square_torus();
    const Eigen::Vector2d c(1.0, 0.7);
    auto f = TorusAffineMap::translation(T, c);
    const auto base = newton_solve(*f, {Eigen::Vector2d(0.4, 1.1), c.normalized(), c.norm()});
    REQUIRE(base.has_value());
    CHECK_THROWS_AS(tower_extend(*f, *base, 1, 2.0 * M_PI), std::runtime_error);
  }
}

TEST_CASE("the tower audit bijects adjacent shift windows") {
  const auto& fix = rotation_fixture();

  SECTION("rotation families extend and translate one window up") {
    REQUIRE(fix.records.size() == 2);
    const auto audit = audit_zoll_tower(*fix.map, fix.records, 0.3, 2.0 * M_PI, 2.0 * M_PI,
                                        scan_options());
    CHECK(audit.verdict == Verdict::pass);
    CHECK(audit.matched == 2);
    CHECK(audit.unmatched_base.empty());
    CHECK(audit.unmatched_upper.empty());
    CHECK(audit.worst_drift < 1e-6);
    for (const auto& ext : audit.extensions) {
      CHECK(ext.ok);
      CHECK(ext.moved < 1e-4);
    }
  }

  SECTION("no circuit length means no verdict") {
    const auto audit =
        audit_zoll_tower(*fix.map, fix.records, 0.3, 2.0 * M_PI, std::nullopt, scan_options());
    CHECK(audit.verdict == Verdict::not_applicable);
    CHECK(audit.extensions.empty());
  }

  SECTION("a fabricated record fails loudly") {
    std::vector<TranslatedPointRecord> bogus = {synthetic(0.7)};
    const auto audit =
        audit_zoll_tower(*fix.map, bogus, 0.5, 1.0, 0.3, scan_options());
    CHECK(audit.verdict == Verdict::fail);
    REQUIRE(audit.extensions.size() == 1);
    CHECK_FALSE(audit.extensions[0].ok);
    CHECK_FALSE(audit.note.empty());
  }
}

TEST_CASE("the morse count audit enforces its hypothesis") {
  SECTION("nondegenerate records pass by count") {
    const auto a = audit_morse_count({synthetic(1.0), synthetic(2.0)}, 2);
    CHECK(a.verdict == Verdict::pass);
    CHECK(a.clusters == 2);
    CHECK(a.slack == 0);
  }

  SECTION("too few records fail") {
    const auto a = audit_morse_count({synthetic(1.0)}, 2);
    CHECK(a.verdict == Verdict::fail);
    CHECK(a.slack == -1);
  }

  SECTION("an empty window fails with a note") {
    const auto a = audit_morse_count({}, 2);
    CHECK(a.verdict == Verdict::fail);
    CHECK_FALSE(a.note.empty());
  }

  SECTION("any degenerate record voids the hypothesis") {
    const auto a = audit_morse_count({synthetic(1.0), synthetic(2.0, 1)}, 2);
    CHECK(a.verdict == Verdict::hypothesis_violated);
    CHECK(a.degenerate == 1);
  }

  SECTION("borderline records void the hypothesis too") {
    const auto a = audit_morse_count({synthetic(1.0), synthetic(2.0, 0, true)}, 2);
    CHECK(a.verdict == Verdict::hypothesis_violated);
    CHECK(a.borderline == 1);
  }

  SECTION("rotation families are degenerate by symmetry") {
    const auto& fix = rotation_fixture();
    auto classified = classify_records(fix.map, fix.records, {24});
    const auto a = audit_morse_count(classified, 2);
    CHECK(a.verdict == Verdict::hypothesis_violated);
    CHECK(a.degenerate >= 2);
  }
}

TEST_CASE("localization distances respect the displacement allowance") {
  const double L = 2.0 * M_PI;

  SECTION("records near every circuit multiple pass") {
    const std::vector<TranslatedPointRecord> recs = {synthetic(L - 0.5), synthetic(2 * L + 0.49)};
    const auto a = audit_localization(recs, 0.5, L, 2);
    CHECK(a.verdict == Verdict::pass);
    REQUIRE(a.nearest.size() == 2);
    CHECK(a.nearest[0] == Catch::Approx(0.5).margin(1e-12));
    CHECK(a.nearest[1] == Catch::Approx(0.49).margin(1e-12));
  }

  SECTION("a multiple left uncovered fails") {
    const std::vector<TranslatedPointRecord> recs = {synthetic(L - 0.5), synthetic(2 * L + 0.52)};
    const auto a = audit_localization(recs, 0.5, L, 2);
    CHECK(a.verdict == Verdict::fail);
    CHECK(a.nearest[1] > a.allowance);
  }

  SECTION("bad arguments are rejected") {
    CHECK_THROWS_AS(audit_localization({}, 0.1, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(audit_localization({}, 0.1, L, 0), std::invalid_argument);
  }
}

TEST_CASE("unbounded windows stay populated and torus classes are realized") {
  auto T = square_torus();
  std::vector<Eigen::VectorXd> classes;
  for (auto [a, b] : {std::pair{1, 0}, {0, 1}, {1, 1}, {2, 1}})
    classes.push_back(Eigen::Vector2d(a, b));

  SECTION("identity shifts sit exactly on lattice lengths") {
    auto id = std::make_shared<IdentityMap>(T);
    const auto a = audit_unbounded(*id, 3, 2.0 * M_PI, scan_options(), classes, 0.2);
    CHECK(a.verdict == Verdict::pass);
    REQUIRE(a.window_counts.size() == 3);
    for (int c : a.window_counts) CHECK(c >= 1);
    REQUIRE(a.class_shifts.size() == 4);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(a.class_shifts[i] == Catch::Approx(a.class_lengths[i]).margin(1e-6));
    CHECK_FALSE(a.shifts_increasing);
  }

  SECTION("a wave perturbation splits the equal-length classes") {
    auto wave = std::make_shared<TorusWaveMap>(T, 0.05, Eigen::Vector2d(0, 0));
    const auto a = audit_unbounded(*wave, 3, 2.0 * M_PI, scan_options(), classes, 0.2);
    CHECK(a.verdict == Verdict::pass);
    CHECK(a.shifts_increasing);
    CHECK(a.matched_shifts.size() >= 4);
    for (std::size_t i = 1; i < a.matched_shifts.size(); ++i)
      CHECK(a.matched_shifts[i] > a.matched_shifts[i - 1]);
    const auto near = [&](double target) {
      for (double v : a.matched_shifts)
        if (std::abs(v - target) < 2e-3) return true;
      return false;
    };
    CHECK(near(2.0 * M_PI - 0.05));
    CHECK(near(2.0 * M_PI + 0.05));
  }

  SECTION("an unreachable class fails with a note") {
    auto id = std::make_shared<IdentityMap>(T);
    const std::vector<Eigen::VectorXd> far = {Eigen::Vector2d(3, 2)};
    const auto a = audit_unbounded(*id, 3, 2.0 * M_PI, scan_options(), far, 0.2);
    CHECK(a.verdict == Verdict::fail);
    CHECK_FALSE(a.note.empty());
  }

  SECTION("bad arguments are rejected") {
    auto id = std::make_shared<IdentityMap>(T);
    CHECK_THROWS_AS(audit_unbounded(*id, 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(audit_unbounded(*id, 1, 0.0), std::invalid_argument);
  }
}

TEST_CASE("sparse shift spectra require degenerate families") {
  const double L = 2.0 * M_PI;

  SECTION("one shift value with a family present passes") {
    const auto a = audit_family_presence({synthetic(L, 3, false, true)}, L, 1);
    CHECK(a.verdict == Verdict::pass);
    CHECK(a.distinct_mod_ell == 1);
    CHECK(a.family_present);
  }

  SECTION("one shift value with only isolated records fails") {
    const auto a = audit_family_presence({synthetic(L)}, L, 1);
    CHECK(a.verdict == Verdict::fail);
  }

  SECTION("two distinct values make the audit inapplicable") {
    const auto a = audit_family_presence({synthetic(kTheta), synthetic(L - kTheta)}, L, 1);
    CHECK(a.verdict == Verdict::not_applicable);
    CHECK(a.distinct_mod_ell == 2);
  }

  SECTION("an empty record set fails") {
    const auto a = audit_family_presence({}, L, 1);
    CHECK(a.verdict == Verdict::fail);
    CHECK(a.distinct_mod_ell == 0);
  }

  SECTION("values straddling the modulus wrap into one") {
    const std::vector<TranslatedPointRecord> recs = {synthetic(L - 1e-4, 1),
                                                     synthetic(2 * L + 1e-4)};
    const auto a = audit_family_presence(recs, L, 1);
    CHECK(a.distinct_mod_ell == 1);
    CHECK(a.verdict == Verdict::pass);
  }

  SECTION("a zero modulus is rejected") {
    CHECK_THROWS_AS(audit_family_presence({}, 0.0, 1), std::invalid_argument);
  }
}

TEST_CASE("the full audit assembles every applicable verdict") {
  auto S = unit_sphere();
  AuditConfig cfg;
  cfg.manifold = S;
  cfg.homotopy = std::make_shared<RotationHomotopy>(S, Eigen::Vector3d(0, 0, 1), kTheta);
  cfg.window_a = 0.3;
  cfg.window_b = 2.0 * M_PI;
  cfg.zoll_length = 2.0 * M_PI;
  cfg.k_max = 1;
  cfg.delta_grid = 40;
  cfg.solver = scan_options();
  cfg.hessian_segments = 24;

  const SpectrumReport rep = run_audit(cfg);

  REQUIRE(rep.records.size() == 2);
  CHECK(rep.records[0].state.t == Catch::Approx(kTheta).margin(1e-6));
  CHECK(rep.records[1].state.t == Catch::Approx(2.0 * M_PI - kTheta).margin(1e-6));
  for (const auto& r : rep.records) {
    CHECK(r.kernel_dim >= 1);
    CHECK(r.is_family);
  }

  REQUIRE(rep.delta_value.has_value());
  CHECK(*rep.delta_value <= kTheta);
  CHECK(*rep.delta_value == Catch::Approx(kTheta).margin(1e-3));
  CHECK(rep.delta_converged);
  REQUIRE(rep.delta_below_half_ell.has_value());
  CHECK(*rep.delta_below_half_ell);

  REQUIRE(rep.tower.has_value());
  CHECK(rep.tower->verdict == Verdict::pass);
  CHECK(rep.tower->matched == 2);

  REQUIRE(rep.count.has_value());
  CHECK(rep.count->verdict == Verdict::hypothesis_violated);
  CHECK(rep.count->clusters == 2);

  REQUIRE(rep.localization.has_value());
  CHECK(rep.localization->verdict == Verdict::pass);
  REQUIRE(rep.localization->nearest.size() == 1);
  CHECK(rep.localization->nearest[0] == Catch::Approx(kTheta).margin(1e-3));

  REQUIRE(rep.presence.has_value());
  CHECK(rep.presence->verdict == Verdict::not_applicable);
  CHECK(rep.presence->distinct_mod_ell == 2);

  CHECK_FALSE(rep.unbounded.has_value());
  CHECK_FALSE(rep.all_ok());
}

TEST_CASE("audit configurations are validated up front") {
  auto S = unit_sphere();

  AuditConfig cfg;
  cfg.manifold = S;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);

  cfg.map = std::make_shared<IdentityMap>(S);
  cfg.window_a = 1.0;
  cfg.window_b = 0.5;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);

  cfg.window_a = 0.0;
  cfg.window_b = 1.0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);

  cfg.window_a = 0.5;
  cfg.window_b = 1.0;
  cfg.zoll_length = -1.0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);

  cfg.zoll_length = 2.0 * M_PI;
  CHECK_NOTHROW(validate(cfg));

  CHECK(default_betti_sum(*S) == 2);
  CHECK(default_betti_sum(Sphere(3, 1.0)) == 4);
  CHECK(default_betti_sum(*square_torus()) == 1);
}
