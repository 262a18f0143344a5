#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "iamod/qpmodel.hpp"

namespace iamod {

struct SolverOptions {
  double tol = 1e-8;         // shared by primal/dual/comp (scaled) and gap (relative)
  int max_iter = 200;
  std::uint64_t seed = 0;    // starting-point jitter
  double static_reg = 1e-9;  // KKT regularization on scaled data
  int refine_steps = 2;
  bool polish = true;        // active-set polish after convergence
  bool verbose = false;
};

enum class SolveStatus { Optimal, Infeasible, IterationLimit };

const char* to_string(SolveStatus status);

/// KKT residuals in original (unscaled) units. scaled_* mirrors the
/// solver-internal equilibrated values the convergence test uses.
struct ResidualReport {
  double primal_feas = 0.0;  // max violation over equalities, inequalities, bounds
  double dual_feas = 0.0;    // ||Qx + c + A_eq'y + A_in'z - w||_inf, plus dual sign violations
  double comp_slack = 0.0;   // max of z.(b - A_in x) and w.x products
  double duality_gap = 0.0;  // relative
  double scaled_primal = 0.0;
  double scaled_dual = 0.0;
  double scaled_comp = 0.0;
};

/// Farkas-type certificate of primal infeasibility: eq_ray (free sign) and
/// in_ray >= 0 with A_eq'u + A_in'v >= 0 on nonnegative columns, = 0 on free
/// columns, and b_eq'u + b_in'v < 0.
struct InfeasibilityCertificate {
  Eigen::VectorXd eq_ray;
  Eigen::VectorXd in_ray;
  double b_combination = 0.0;
  double max_component_violation = 0.0;
  std::vector<int> most_violated_rows;  // equality rows first, offset by m_eq for inequalities
};

struct SolveResult {
  SolveStatus status = SolveStatus::IterationLimit;
  Eigen::VectorXd x;  // primal
  Eigen::VectorXd y;  // equality duals (customer-balance, then vehicle-balance)
  Eigen::VectorXd z;  // inequality duals >= 0 (road capacities, then transit)
  Eigen::VectorXd w;  // bound duals >= 0
  ResidualReport residuals;
  int iterations = 0;
  double objective = 0.0;
  bool polished = false;
  std::optional<InfeasibilityCertificate> certificate;
};

/// Primal-dual interior-point solve (Mehrotra predictor-corrector over a
/// regularized sparse LDL' of the reduced KKT system, with Ruiz equilibration
/// and iterative refinement). Status Optimal guarantees the residual report
/// is within tolerances; throws NumericalBreakdown if factorization fails
/// after regularization retries.
SolveResult solve(const QuadraticProgram& qp, const SolverOptions& opts = {});

/// Pure KKT residual evaluation on original data; no solving.
ResidualReport kkt_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                             const Eigen::VectorXd& w);

}  // namespace iamod
