#include <doctest.h>

#include <random>

#include "iamod/errors.hpp"
#include "iamod/qpsolver.hpp"
#include "support/active_set_oracle.hpp"
#include "support/test_util.hpp"

using namespace iamod;
using iamod::testing::active_set_oracle;
using iamod::testing::random_qp;

namespace {

QuadraticProgram dense_qp(const Eigen::VectorXd& q, const Eigen::VectorXd& c,
                          const Eigen::MatrixXd& a_eq, const Eigen::VectorXd& b_eq,
                          const Eigen::MatrixXd& a_in, const Eigen::VectorXd& b_in,
                          std::vector<std::uint8_t> is_free = {}) {
  QuadraticProgram qp;
  qp.q_diag = q;
  qp.c = c;
  qp.a_eq = a_eq.sparseView();
  qp.b_eq = b_eq;
  qp.a_in = a_in.sparseView();
  qp.b_in = b_in;
  qp.is_free = std::move(is_free);
  return qp;
}

}  // namespace

TEST_SUITE("qpsolver") {

TEST_CASE("unconstrained scalar: min x^2 - 2x") {
  // Hand solution: x* = 1, no constraints, no active duals.
  auto qp = dense_qp(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, -2.0),
                     Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), Eigen::MatrixXd(0, 1),
                     Eigen::VectorXd(0), {1});
  SolveResult r = solve(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.objective == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("equality pair: min (x^2+y^2)/2 s.t. x + y = 2") {
  // KKT by hand: x = y = 1 and, under Qx + c + A'y = 0, the multiplier is -1.
  Eigen::MatrixXd a_eq(1, 2);
  a_eq << 1.0, 1.0;
  auto qp = dense_qp(Eigen::VectorXd::Constant(2, 1.0), Eigen::VectorXd::Zero(2), a_eq,
                     Eigen::VectorXd::Constant(1, 2.0), Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                     {1, 1});
  SolveResult r = solve(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.y[0] == doctest::Approx(-1.0).epsilon(1e-8));
}

TEST_CASE("binding lower bound: min x s.t. 0 <= x <= c, tiny quadratic") {
  // Hand KKT: x* = 0; stationarity 1 + z - w = 0 with slack capacity so z = 0
  // and the bound dual is exactly 1.
  Eigen::MatrixXd a_in(1, 1);
  a_in << 1.0;
  auto qp = dense_qp(Eigen::VectorXd::Constant(1, 2e-6), Eigen::VectorXd::Constant(1, 1.0),
                     Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), a_in,
                     Eigen::VectorXd::Constant(1, 5.0));
  SolveResult r = solve(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(std::abs(r.x[0]) < 1e-8);
  CHECK(r.z[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(r.w[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("kkt_residuals: hand-solved point evaluates to ~0") {
  Eigen::MatrixXd a_eq(1, 2);
  a_eq << 1.0, 1.0;
  auto qp = dense_qp(Eigen::VectorXd::Constant(2, 1.0), Eigen::VectorXd::Zero(2), a_eq,
                     Eigen::VectorXd::Constant(1, 2.0), Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                     {1, 1});
  Eigen::VectorXd x(2), y(1), z(0), w(2);
  x << 1.0, 1.0;
  y << -1.0;
  w << 0.0, 0.0;
  ResidualReport r = kkt_residuals(qp, x, y, z, w);
  CHECK(r.primal_feas < 1e-12);
  CHECK(r.dual_feas < 1e-12);
  CHECK(r.comp_slack < 1e-12);
  CHECK(r.duality_gap < 1e-12);

  SUBCASE("perturbing one coordinate is detected") {
    x[0] += 1e-3;
    ResidualReport p = kkt_residuals(qp, x, y, z, w);
    CHECK(std::max(p.primal_feas, p.dual_feas) >= 1e-4);
  }
}

TEST_CASE("kkt_residuals: all-zero candidate reports max |b_eq|") {
  Eigen::MatrixXd a_eq(2, 3);
  a_eq << 1.0, 2.0, 0.0, 0.0, 1.0, -1.0;
  Eigen::VectorXd b_eq(2);
  b_eq << 3.0, -7.0;
  auto qp = dense_qp(Eigen::VectorXd::Constant(3, 1.0), Eigen::VectorXd::Zero(3), a_eq, b_eq,
                     Eigen::MatrixXd(0, 3), Eigen::VectorXd(0));
  ResidualReport r = kkt_residuals(qp, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2),
                                   Eigen::VectorXd(0), Eigen::VectorXd::Zero(3));
  CHECK(r.primal_feas == doctest::Approx(7.0));
}

TEST_CASE("matches active-set enumeration oracle on random dense QPs") {
  std::mt19937_64 rng(20260808);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    QuadraticProgram qp = random_qp(rng);
    auto oracle = active_set_oracle(qp);
    REQUIRE(oracle.has_value());
    SolveResult r = solve(qp);
    REQUIRE(r.status == SolveStatus::Optimal);
    const double scale = std::max(1.0, oracle->x.cwiseAbs().maxCoeff());
    CHECK((r.x - oracle->x).cwiseAbs().maxCoeff() / scale < 1e-6);
    ++checked;
  }
  CHECK(checked == 60);
}

TEST_CASE("residual report within tolerance at optimal") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    QuadraticProgram qp = random_qp(rng);
    SolveResult r = solve(qp);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.residuals.scaled_primal <= 1e-8);
    CHECK(r.residuals.scaled_dual <= 1e-8);
    CHECK(r.residuals.scaled_comp <= 1e-8);
    CHECK(r.residuals.duality_gap <= 1e-8);
    // complementary slackness per inequality row, relative to its rhs
    Eigen::VectorXd slack = qp.b_in - qp.a_in * r.x;
    for (int i = 0; i < slack.size(); ++i) {
      CHECK(std::abs(r.z[i] * slack[i]) <= 1e-6 * std::max(1.0, std::abs(qp.b_in[i])));
    }
  }
}

TEST_CASE("solves are reproducible and seed-independent at the optimum") {
  std::mt19937_64 rng(7);
  QuadraticProgram qp = random_qp(rng);
  SolverOptions a, b;
  a.seed = 1;
  b.seed = 2026;
  SolveResult ra = solve(qp, a);
  SolveResult rb = solve(qp, b);
  REQUIRE(ra.status == SolveStatus::Optimal);
  REQUIRE(rb.status == SolveStatus::Optimal);
  const double scale = std::max(1.0, ra.x.cwiseAbs().maxCoeff());
  CHECK((ra.x - rb.x).cwiseAbs().maxCoeff() / scale < 1e-5);

  SolveResult ra2 = solve(qp, a);
  CHECK((ra.x - ra2.x).cwiseAbs().maxCoeff() == 0.0);  // bitwise deterministic
}

TEST_CASE("infeasible equality system yields a Farkas certificate") {
  // x1 + x2 = -1 with x >= 0 cannot hold.
  Eigen::MatrixXd a_eq(1, 2);
  a_eq << 1.0, 1.0;
  auto qp = dense_qp(Eigen::VectorXd::Constant(2, 1.0), Eigen::VectorXd::Zero(2), a_eq,
                     Eigen::VectorXd::Constant(1, -1.0), Eigen::MatrixXd(0, 2),
                     Eigen::VectorXd(0));
  SolveResult r = solve(qp);
  REQUIRE(r.status == SolveStatus::Infeasible);
  REQUIRE(r.certificate.has_value());
  // Verify the ray: A_eq'u >= 0 on nonnegative columns, b'u < 0.
  Eigen::VectorXd sigma = qp.a_eq.transpose() * r.certificate->eq_ray;
  CHECK(sigma.minCoeff() >= -1e-7);
  CHECK(r.certificate->b_combination < 0.0);
}

TEST_CASE("conflicting inequalities yield a certificate") {
  // x <= 1 and -x <= -3 conflict.
  Eigen::MatrixXd a_in(2, 1);
  a_in << 1.0, -1.0;
  Eigen::VectorXd b_in(2);
  b_in << 1.0, -3.0;
  auto qp = dense_qp(Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Zero(1),
                     Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), a_in, b_in, {1});
  SolveResult r = solve(qp);
  REQUIRE(r.status == SolveStatus::Infeasible);
  REQUIRE(r.certificate.has_value());
  CHECK(r.certificate->in_ray.minCoeff() >= 0.0);
  CHECK(r.certificate->b_combination < 0.0);
}

TEST_CASE("zero-capacity rows presolve to exact fixed variables") {
  // min x1^2 + c1 x1 + x2^2 + c2 x2 s.t. x1 <= 0, x >= 0: x1 is forced to
  // zero and its capacity dual must absorb any negative reduced cost.
  Eigen::MatrixXd a_in(1, 2);
  a_in << 1.0, 0.0;
  for (double c1 : {-3.0, 0.5}) {
    Eigen::VectorXd c(2);
    c << c1, -1.0;
    auto qp = dense_qp(Eigen::VectorXd::Constant(2, 2.0), c, Eigen::MatrixXd(0, 2),
                       Eigen::VectorXd(0), a_in, Eigen::VectorXd::Zero(1));
    SolveResult r = solve(qp);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.x[0] == 0.0);
    CHECK(r.x[1] == doctest::Approx(0.5).epsilon(1e-8));  // unconstrained minimum of x^2 - x
    CHECK(r.z[0] == doctest::Approx(std::max(-c1, 0.0)).epsilon(1e-9));
    CHECK(r.w[0] == doctest::Approx(std::max(c1, 0.0)).epsilon(1e-9));
    ResidualReport check = kkt_residuals(qp, r.x, r.y, r.z, r.w);
    CHECK(check.dual_feas < 1e-9);
    CHECK(check.comp_slack < 1e-9);
  }
  SUBCASE("all columns forced") {
    Eigen::MatrixXd both(1, 2);
    both << 1.0, 1.0;
    auto qp = dense_qp(Eigen::VectorXd::Constant(2, 2.0), Eigen::VectorXd::Constant(2, -1.0),
                       Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), both, Eigen::VectorXd::Zero(1));
    SolveResult r = solve(qp);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.x.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.z[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("negative rhs over nonnegative columns is infeasible outright") {
    auto qp = dense_qp(Eigen::VectorXd::Constant(2, 2.0), Eigen::VectorXd::Zero(2),
                       Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), a_in,
                       Eigen::VectorXd::Constant(1, -1.0));
    SolveResult r = solve(qp);
    CHECK(r.status == SolveStatus::Infeasible);
    CHECK(r.certificate.has_value());
  }
}

TEST_CASE("dimension mismatches are rejected") {
  QuadraticProgram qp;
  qp.q_diag = Eigen::VectorXd::Constant(2, 1.0);
  qp.c = Eigen::VectorXd::Zero(3);  // inconsistent
  qp.a_eq.resize(0, 2);
  qp.b_eq.resize(0);
  qp.a_in.resize(0, 2);
  qp.b_in.resize(0);
  CHECK_THROWS_WITH_AS(solve(qp), doctest::Contains("q_diag"), Error);
}

}  // TEST_SUITE
