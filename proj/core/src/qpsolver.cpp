#include "iamod/qpsolver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/SparseCholesky>

#include "iamod/errors.hpp"

namespace iamod {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::IterationLimit: return "iteration_limit";
  }
  return "?";
}

namespace {

using Vec = Eigen::VectorXd;

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct Dimensions {
  int n = 0;
  int m_eq = 0;
  int m_in = 0;
};

Dimensions check_dimensions(const QuadraticProgram& qp) {
  Dimensions d;
  d.n = qp.columns();
  d.m_eq = static_cast<int>(qp.a_eq.rows());
  d.m_in = static_cast<int>(qp.a_in.rows());
  if (qp.q_diag.size() != d.n) fail(ErrorCode::DimensionMismatch, "q_diag size != columns");
  if (d.m_eq > 0 && qp.a_eq.cols() != d.n) fail(ErrorCode::DimensionMismatch, "a_eq column count");
  if (d.m_in > 0 && qp.a_in.cols() != d.n) fail(ErrorCode::DimensionMismatch, "a_in column count");
  if (qp.b_eq.size() != d.m_eq) fail(ErrorCode::DimensionMismatch, "b_eq size");
  if (qp.b_in.size() != d.m_in) fail(ErrorCode::DimensionMismatch, "b_in size");
  if (!qp.is_free.empty() && static_cast<int>(qp.is_free.size()) != d.n) {
    fail(ErrorCode::DimensionMismatch, "is_free mask size");
  }
  if (d.n > 0 && qp.q_diag.minCoeff() < 0.0) {
    fail(ErrorCode::BadArgument, "q_diag must be nonnegative");
  }
  return d;
}

// Equilibrated copy of the problem. x = col .* x_s; row scales premultiply the
// constraint rows; the objective is multiplied by cost_scale.
struct ScaledProblem {
  Vec q, c, b_eq, b_in;
  SpMat a_eq, a_in;
  Vec col, row_eq, row_in;
  double cost_scale = 1.0;
};

ScaledProblem equilibrate(const QuadraticProgram& qp, const Dimensions& d) {
  ScaledProblem sp;
  sp.col = Vec::Ones(d.n);
  sp.row_eq = Vec::Ones(d.m_eq);
  sp.row_in = Vec::Ones(d.m_in);

  // Ruiz iterations on the stacked constraint matrix.
  for (int pass = 0; pass < 10; ++pass) {
    Vec col_norm = Vec::Zero(d.n);
    Vec eq_norm = Vec::Zero(d.m_eq);
    Vec in_norm = Vec::Zero(d.m_in);
    for (int k = 0; k < qp.a_eq.outerSize(); ++k) {
      for (SpMat::InnerIterator it(qp.a_eq, k); it; ++it) {
        const double v = std::abs(it.value()) * sp.row_eq[it.row()] * sp.col[it.col()];
        col_norm[it.col()] = std::max(col_norm[it.col()], v);
        eq_norm[it.row()] = std::max(eq_norm[it.row()], v);
      }
    }
    for (int k = 0; k < qp.a_in.outerSize(); ++k) {
      for (SpMat::InnerIterator it(qp.a_in, k); it; ++it) {
        const double v = std::abs(it.value()) * sp.row_in[it.row()] * sp.col[it.col()];
        col_norm[it.col()] = std::max(col_norm[it.col()], v);
        in_norm[it.row()] = std::max(in_norm[it.row()], v);
      }
    }
    double worst = 1.0;
    auto update = [&worst](Vec& scale, const Vec& norm) {
      for (int i = 0; i < norm.size(); ++i) {
        if (norm[i] > 0.0) {
          scale[i] /= std::sqrt(norm[i]);
          worst = std::max(worst, std::max(norm[i], 1.0 / norm[i]));
        }
      }
    };
    update(sp.col, col_norm);
    update(sp.row_eq, eq_norm);
    update(sp.row_in, in_norm);
    if (worst < 1.0 + 1e-3) break;
  }

  // Normalize the right-hand-side magnitude into the column scales so primal
  // iterates are O(1).
  double b_mag = 1.0;
  for (int i = 0; i < d.m_eq; ++i) b_mag = std::max(b_mag, std::abs(qp.b_eq[i]) * sp.row_eq[i]);
  for (int i = 0; i < d.m_in; ++i) b_mag = std::max(b_mag, std::abs(qp.b_in[i]) * sp.row_in[i]);
  sp.col *= b_mag;
  sp.row_eq /= b_mag;
  sp.row_in /= b_mag;

  double c_mag = 1.0;
  for (int j = 0; j < d.n; ++j) c_mag = std::max(c_mag, std::abs(qp.c[j]) * sp.col[j]);
  sp.cost_scale = 1.0 / c_mag;

  sp.q = (sp.cost_scale * sp.col.array().square() * qp.q_diag.array()).matrix();
  sp.c = (sp.cost_scale * sp.col.array() * qp.c.array()).matrix();
  sp.a_eq = sp.row_eq.asDiagonal() * qp.a_eq * sp.col.asDiagonal();
  sp.a_in = sp.row_in.asDiagonal() * qp.a_in * sp.col.asDiagonal();
  sp.b_eq = sp.row_eq.cwiseProduct(qp.b_eq);
  sp.b_in = sp.row_in.cwiseProduct(qp.b_in);
  return sp;
}

struct Iterate {
  Vec x, w;  // primal and bound duals (w = 0 on free columns)
  Vec y;     // equality duals
  Vec z, s;  // inequality duals and slacks
};

// Candidate point in original units.
struct Candidate {
  Vec x, y, z, w;
};

Candidate unscale(const ScaledProblem& sp, const Iterate& it) {
  Candidate c;
  c.x = sp.col.cwiseProduct(it.x);
  c.y = sp.row_eq.cwiseProduct(it.y) / sp.cost_scale;
  c.z = sp.row_in.cwiseProduct(it.z) / sp.cost_scale;
  c.w = (it.w.array() / (sp.cost_scale * sp.col.array())).matrix();
  return c;
}

Iterate rescale(const ScaledProblem& sp, const Candidate& c) {
  Iterate it;
  it.x = c.x.cwiseQuotient(sp.col);
  it.y = sp.cost_scale * c.y.cwiseQuotient(sp.row_eq);
  it.z = sp.cost_scale * c.z.cwiseQuotient(sp.row_in);
  it.w = (sp.cost_scale * sp.col.array() * c.w.array()).matrix();
  it.s = sp.b_in - sp.a_in * it.x;
  return it;
}

double primal_objective(const QuadraticProgram& qp, const Vec& x) {
  return 0.5 * x.dot(qp.q_diag.cwiseProduct(x)) + qp.c.dot(x);
}

// Scaled-space residual triple used by the convergence test.
struct ScaledResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double comp = 0.0;
};

ScaledResiduals scaled_residuals(const ScaledProblem& sp, const Iterate& it,
                                 const std::vector<std::uint8_t>& nonneg) {
  ScaledResiduals r;
  Vec r_eq = sp.a_eq * it.x - sp.b_eq;
  Vec r_in = sp.a_in * it.x + it.s - sp.b_in;
  r.primal = std::max(inf_norm(r_eq), inf_norm(r_in));
  Vec r_d = sp.q.cwiseProduct(it.x) + sp.c + sp.a_eq.transpose() * it.y +
            sp.a_in.transpose() * it.z - it.w;
  r.dual = inf_norm(r_d);
  for (int j = 0; j < it.x.size(); ++j) {
    if (nonneg[static_cast<size_t>(j)]) r.comp = std::max(r.comp, std::abs(it.x[j] * it.w[j]));
  }
  for (int i = 0; i < it.s.size(); ++i) r.comp = std::max(r.comp, std::abs(it.s[i] * it.z[i]));
  return r;
}

// Quasidefinite KKT system
//   [ Q + X^-1 W + delta I   A_eq'              A_in'            ]
//   [ A_eq                   -delta_d I         0                ]
//   [ A_in                   0                  -Z^-1 S - delta_d]
// assembled lower-triangular for LDL'; diagonal blocks are refreshed each
// iteration, the off-diagonal pattern is constant.
class KktSystem {
 public:
  KktSystem(const ScaledProblem& sp, const Dimensions& d,
            const std::vector<std::uint8_t>& nonneg)
      : sp_(sp), d_(d), nonneg_(nonneg), size_(d.n + d.m_eq + d.m_in) {
    constant_.reserve(static_cast<size_t>(sp.a_eq.nonZeros() + sp.a_in.nonZeros()));
    for (int k = 0; k < sp.a_eq.outerSize(); ++k) {
      for (SpMat::InnerIterator jt(sp.a_eq, k); jt; ++jt) {
        constant_.emplace_back(d_.n + static_cast<int>(jt.row()), static_cast<int>(jt.col()),
                               jt.value());
      }
    }
    for (int k = 0; k < sp.a_in.outerSize(); ++k) {
      for (SpMat::InnerIterator jt(sp.a_in, k); jt; ++jt) {
        constant_.emplace_back(d_.n + d_.m_eq + static_cast<int>(jt.row()),
                               static_cast<int>(jt.col()), jt.value());
      }
    }
  }

  // Returns false when the factorization is unusable at this regularization.
  bool factorize(const Iterate& it, double reg) {
    std::vector<Eigen::Triplet<double>> trips = constant_;
    trips.reserve(constant_.size() + static_cast<size_t>(size_));
    for (int j = 0; j < d_.n; ++j) {
      double dj = sp_.q[j] + reg;
      if (nonneg_[static_cast<size_t>(j)]) dj += it.w[j] / it.x[j];
      trips.emplace_back(j, j, dj);
    }
    for (int i = 0; i < d_.m_eq; ++i) trips.emplace_back(d_.n + i, d_.n + i, -reg);
    for (int i = 0; i < d_.m_in; ++i) {
      trips.emplace_back(d_.n + d_.m_eq + i, d_.n + d_.m_eq + i, -it.s[i] / it.z[i] - reg);
    }
    kkt_.resize(size_, size_);
    kkt_.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed_) {
      ldlt_.analyzePattern(kkt_);
      analyzed_ = true;
    }
    ldlt_.factorize(kkt_);
    return ldlt_.info() == Eigen::Success;
  }

  Vec solve(const Vec& rhs, int refine_steps) const {
    Vec sol = ldlt_.solve(rhs);
    for (int pass = 0; pass < refine_steps; ++pass) {
      Vec resid = rhs - kkt_.selfadjointView<Eigen::Lower>() * sol;
      if (inf_norm(resid) <= 1e-13 * (1.0 + inf_norm(rhs))) break;
      sol += ldlt_.solve(resid);
    }
    return sol;
  }

 private:
  const ScaledProblem& sp_;
  Dimensions d_;
  const std::vector<std::uint8_t>& nonneg_;
  int size_;
  std::vector<Eigen::Triplet<double>> constant_;
  SpMat kkt_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
  bool analyzed_ = false;
};

// Largest step in [0, 1] keeping v + alpha dv >= (1 - gamma) v.
double max_step(const Vec& v, const Vec& dv, const std::vector<std::uint8_t>* mask,
                double gamma) {
  double alpha = 1.0;
  for (int i = 0; i < v.size(); ++i) {
    if (mask && !(*mask)[static_cast<size_t>(i)]) continue;
    if (dv[i] < 0.0) alpha = std::min(alpha, -gamma * v[i] / dv[i]);
  }
  return alpha;
}

// Farkas-style certificate test on the original data; (u, v) is certified
// when no x >= 0 (free columns unconstrained) can satisfy the constraints.
std::optional<InfeasibilityCertificate> check_certificate(const QuadraticProgram& qp,
                                                          const Dimensions& d, Vec u, Vec v) {
  const double norm = std::max(inf_norm(u), inf_norm(v));
  if (norm < 1e-12) return std::nullopt;
  u /= norm;
  v /= norm;
  for (int i = 0; i < v.size(); ++i) v[i] = std::max(v[i], 0.0);

  double a_mag = 1.0;
  Vec sigma = Vec::Zero(d.n);
  if (d.m_eq > 0) sigma += qp.a_eq.transpose() * u;
  if (d.m_in > 0) sigma += qp.a_in.transpose() * v;
  for (int k = 0; k < qp.a_eq.outerSize(); ++k) {
    for (SpMat::InnerIterator it(qp.a_eq, k); it; ++it) a_mag = std::max(a_mag, std::abs(it.value()));
  }
  for (int k = 0; k < qp.a_in.outerSize(); ++k) {
    for (SpMat::InnerIterator it(qp.a_in, k); it; ++it) a_mag = std::max(a_mag, std::abs(it.value()));
  }

  const double eps = 1e-8 * a_mag;
  for (int j = 0; j < d.n; ++j) {
    const bool free_col = qp.column_free(j);
    if (free_col && std::abs(sigma[j]) > eps) return std::nullopt;
    if (!free_col && sigma[j] < -eps) return std::nullopt;
  }
  const double combo = (d.m_eq ? qp.b_eq.dot(u) : 0.0) + (d.m_in ? qp.b_in.dot(v) : 0.0);
  const double b_mag = std::max({1.0, inf_norm(qp.b_eq), inf_norm(qp.b_in)});
  if (combo > -1e-8 * b_mag) return std::nullopt;

  InfeasibilityCertificate cert;
  cert.eq_ray = u;
  cert.in_ray = v;
  cert.b_combination = combo;
  cert.max_component_violation = 0.0;
  for (int j = 0; j < d.n; ++j) {
    cert.max_component_violation = std::max(cert.max_component_violation, std::max(0.0, -sigma[j]));
  }
  std::vector<std::pair<double, int>> ranked;
  for (int i = 0; i < d.m_eq; ++i) ranked.push_back({std::abs(u[i]), i});
  for (int i = 0; i < d.m_in; ++i) ranked.push_back({v[i], d.m_eq + i});
  std::sort(ranked.rbegin(), ranked.rend());
  for (size_t i = 0; i < ranked.size() && i < 5; ++i) {
    if (ranked[i].first > 0.1) cert.most_violated_rows.push_back(ranked[i].second);
  }
  return cert;
}

ResidualReport report_for(const QuadraticProgram& qp, const Candidate& c,
                          const ScaledResiduals& sr) {
  ResidualReport r = kkt_residuals(qp, c.x, c.y, c.z, c.w);
  r.scaled_primal = sr.primal;
  r.scaled_dual = sr.dual;
  r.scaled_comp = sr.comp;
  return r;
}

bool within_tolerance(const QuadraticProgram& qp, const ResidualReport& r, double tol) {
  // The relative original-units primal bound keys off the equality rhs
  // (demand rates) so conservation residuals stay proportional to demand.
  const double b_mag = qp.b_eq.size() ? std::max(1.0, inf_norm(qp.b_eq))
                                      : std::max(1.0, inf_norm(qp.b_in));
  const double c_mag = std::max(1.0, inf_norm(qp.c));
  return r.scaled_primal <= tol && r.scaled_dual <= tol && r.scaled_comp <= tol &&
         r.duality_gap <= tol && r.primal_feas <= tol * b_mag && r.dual_feas <= tol * c_mag * 10.0;
}

// Equality-constrained solve on a predicted active set, refined active-set
// style: constraints whose multipliers come out negative are dropped, violated
// ones are added, and the reduced system is re-solved. Warm-started from the
// interior iterate this settles in a handful of rounds and turns a nearly
// converged iterate into an essentially exact KKT point with crisp zero duals
// on inactive rows.
std::optional<Candidate> polish(const Dimensions& d, const ScaledProblem& sp, const Iterate& it,
                                const std::vector<std::uint8_t>& nonneg, int refine_steps) {
  // Pin columns whose primal is numerically zero and activate rows whose
  // slack is numerically zero. Strongly active items land well below the
  // threshold after the sharpening steps; weakly active ones (dual ~ 0) are
  // safe to leave out because dropping a constraint with zero multiplier does
  // not move the optimum.
  std::vector<std::uint8_t> col_free(static_cast<size_t>(d.n), 0);
  std::vector<std::uint8_t> row_active(static_cast<size_t>(d.m_in), 0);
  const double eps_x = 1e-6 * std::max(1.0, inf_norm(it.x));
  const double eps_s = 1e-6 * std::max(1.0, inf_norm(it.s));
  for (int j = 0; j < d.n; ++j) {
    const bool pinned = nonneg[static_cast<size_t>(j)] && it.x[j] <= eps_x;
    col_free[static_cast<size_t>(j)] = pinned ? 0 : 1;
  }
  for (int i = 0; i < d.m_in; ++i) {
    row_active[static_cast<size_t>(i)] = it.s[i] <= eps_s ? 1 : 0;
  }

  const double sign_tol = 1e-9;
  constexpr int kMaxRounds = 60;

  for (int round = 0; round < kMaxRounds; ++round) {
    std::vector<int> free_cols, active_in;
    for (int j = 0; j < d.n; ++j) {
      if (col_free[static_cast<size_t>(j)]) free_cols.push_back(j);
    }
    for (int i = 0; i < d.m_in; ++i) {
      if (row_active[static_cast<size_t>(i)]) active_in.push_back(i);
    }
    const int nf = static_cast<int>(free_cols.size());
    const int na = static_cast<int>(active_in.size());
    if (nf == 0) return std::nullopt;

    std::vector<int> col_slot(static_cast<size_t>(d.n), -1);
    for (int f = 0; f < nf; ++f) col_slot[static_cast<size_t>(free_cols[f])] = f;
    std::vector<int> in_slot(static_cast<size_t>(d.m_in), -1);
    for (int a = 0; a < na; ++a) in_slot[static_cast<size_t>(active_in[a])] = a;

    const int size = nf + d.m_eq + na;
    const double reg = 1e-10;
    std::vector<Eigen::Triplet<double>> trips;
    for (int f = 0; f < nf; ++f) trips.emplace_back(f, f, sp.q[free_cols[f]] + reg);
    for (int i = 0; i < d.m_eq + na; ++i) trips.emplace_back(nf + i, nf + i, -reg);
    for (int k = 0; k < sp.a_eq.outerSize(); ++k) {
      for (SpMat::InnerIterator jt(sp.a_eq, k); jt; ++jt) {
        const int f = col_slot[static_cast<size_t>(jt.col())];
        if (f >= 0) trips.emplace_back(nf + static_cast<int>(jt.row()), f, jt.value());
      }
    }
    for (int k = 0; k < sp.a_in.outerSize(); ++k) {
      for (SpMat::InnerIterator jt(sp.a_in, k); jt; ++jt) {
        const int a = in_slot[static_cast<size_t>(jt.row())];
        const int f = col_slot[static_cast<size_t>(jt.col())];
        if (a >= 0 && f >= 0) trips.emplace_back(nf + d.m_eq + a, f, jt.value());
      }
    }
    SpMat kkt(size, size);
    kkt.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt(kkt);
    if (ldlt.info() != Eigen::Success) return std::nullopt;

    // Proximal to the interior iterate: the regularization must not drag dual
    // null-space components (per-commodity potential shifts) away from the
    // values the interior method settled on, or pinned-column reduced costs
    // lose their signs.
    Vec rhs(size);
    for (int f = 0; f < nf; ++f) rhs[f] = -sp.c[free_cols[f]] + reg * it.x[free_cols[f]];
    rhs.segment(nf, d.m_eq) = sp.b_eq - reg * it.y;
    for (int a = 0; a < na; ++a) {
      rhs[nf + d.m_eq + a] = sp.b_in[active_in[a]] - reg * it.z[active_in[a]];
    }

    Vec sol = ldlt.solve(rhs);
    for (int pass = 0; pass < refine_steps; ++pass) {
      Vec resid = rhs - kkt.selfadjointView<Eigen::Lower>() * sol;
      if (inf_norm(resid) <= 1e-14 * (1.0 + inf_norm(rhs))) break;
      sol += ldlt.solve(resid);
    }
    if (!sol.allFinite()) return std::nullopt;

    Iterate out;
    out.x = Vec::Zero(d.n);
    for (int f = 0; f < nf; ++f) out.x[free_cols[f]] = sol[f];
    out.y = sol.segment(nf, d.m_eq);
    out.z = Vec::Zero(d.m_in);
    for (int a = 0; a < na; ++a) out.z[active_in[a]] = sol[nf + d.m_eq + a];
    out.s = sp.b_in - sp.a_in * out.x;
    out.w = sp.q.cwiseProduct(out.x) + sp.c + sp.a_eq.transpose() * out.y +
            sp.a_in.transpose() * out.z;

    // Single most-violated exchange per round; with a sharp interior iterate
    // behind the prediction this loop almost never runs.
    double worst = sign_tol;
    int worst_col = -1, worst_row = -1;
    bool make_active = false;
    for (int j = 0; j < d.n; ++j) {
      if (!nonneg[static_cast<size_t>(j)]) continue;
      if (col_free[static_cast<size_t>(j)]) {
        if (-out.x[j] > worst) {
          worst = -out.x[j];
          worst_col = j;
          worst_row = -1;
          make_active = true;
        }
      } else if (-out.w[j] > worst) {
        worst = -out.w[j];
        worst_col = j;
        worst_row = -1;
        make_active = false;
      }
    }
    for (int i = 0; i < d.m_in; ++i) {
      if (row_active[static_cast<size_t>(i)]) {
        if (-out.z[i] > worst) {
          worst = -out.z[i];
          worst_row = i;
          worst_col = -1;
          make_active = false;
        }
      } else if (-out.s[i] > worst) {
        worst = -out.s[i];
        worst_row = i;
        worst_col = -1;
        make_active = true;
      }
    }

#ifdef IAMOD_POLISH_DEBUG
    std::fprintf(stderr, "polish round %d: worst=%.2e col=%d row=%d make_active=%d\n", round,
                 worst, worst_col, worst_row, int(make_active));
#endif
    if (worst_col < 0 && worst_row < 0) {
      // Clean point: clamp the sub-tolerance negatives introduced above.
      for (int j = 0; j < d.n; ++j) {
        if (!nonneg[static_cast<size_t>(j)] || col_free[static_cast<size_t>(j)]) {
          out.w[j] = 0.0;
        } else {
          out.w[j] = std::max(out.w[j], 0.0);
        }
      }
      for (int i = 0; i < d.m_in; ++i) {
        if (row_active[static_cast<size_t>(i)]) out.z[i] = std::max(out.z[i], 0.0);
      }
      return unscale(sp, out);
    }
    if (worst_col >= 0) {
      col_free[static_cast<size_t>(worst_col)] = make_active ? 0 : 1;
    } else {
      row_active[static_cast<size_t>(worst_row)] = make_active ? 1 : 0;
    }
  }
  return std::nullopt;
}

// Inequality rows with nonpositive rhs and nonnegative coefficients over
// nonnegative columns force every touched column to zero (the zero-capacity
// regimes produce these wholesale, and they are brutally degenerate for an
// interior method). Eliminate them up front and complete their duals exactly
// afterwards.
struct Presolve {
  bool infeasible = false;
  int infeasible_row = -1;
  std::vector<std::uint8_t> col_keep;
  std::vector<std::uint8_t> row_keep;  // inequality rows
  std::vector<int> col_map, row_map;   // original -> reduced index or -1
  int kept_cols = 0, kept_rows = 0;
  bool active() const { return kept_cols < static_cast<int>(col_keep.size()) ||
                               kept_rows < static_cast<int>(row_keep.size()); }
};

Presolve analyze_forced_zero(const QuadraticProgram& qp, const Dimensions& d) {
  Presolve pre;
  pre.col_keep.assign(static_cast<size_t>(d.n), 1);
  pre.row_keep.assign(static_cast<size_t>(d.m_in), 1);

  // Row-major view of a_in for scanning.
  SpMat in_rows = qp.a_in;
  std::vector<std::vector<std::pair<int, double>>> row_entries(static_cast<size_t>(d.m_in));
  for (int k = 0; k < in_rows.outerSize(); ++k) {
    for (SpMat::InnerIterator jt(in_rows, k); jt; ++jt) {
      row_entries[static_cast<size_t>(jt.row())].push_back({static_cast<int>(jt.col()), jt.value()});
    }
  }

  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i < d.m_in; ++i) {
      if (!pre.row_keep[static_cast<size_t>(i)] || qp.b_in[i] > 0.0) continue;
      bool eligible = true;
      bool any_live = false;
      for (const auto& [j, v] : row_entries[static_cast<size_t>(i)]) {
        if (!pre.col_keep[static_cast<size_t>(j)]) continue;
        if (v < 0.0 || qp.column_free(j)) {
          eligible = false;
          break;
        }
        any_live = true;
      }
      if (!eligible) continue;
      if (qp.b_in[i] < 0.0) {
        // Nonnegative combination of nonnegative variables cannot go below 0.
        pre.infeasible = true;
        pre.infeasible_row = i;
        return pre;
      }
      if (!any_live) {
        // 0 <= 0: drop the empty row.
        pre.row_keep[static_cast<size_t>(i)] = 0;
        changed = true;
        continue;
      }
      for (const auto& [j, v] : row_entries[static_cast<size_t>(i)]) {
        if (v > 0.0 && pre.col_keep[static_cast<size_t>(j)]) {
          pre.col_keep[static_cast<size_t>(j)] = 0;
          changed = true;
        }
      }
      pre.row_keep[static_cast<size_t>(i)] = 0;
    }
  }

  pre.col_map.assign(static_cast<size_t>(d.n), -1);
  pre.row_map.assign(static_cast<size_t>(d.m_in), -1);
  for (int j = 0; j < d.n; ++j) {
    if (pre.col_keep[static_cast<size_t>(j)]) pre.col_map[static_cast<size_t>(j)] = pre.kept_cols++;
  }
  for (int i = 0; i < d.m_in; ++i) {
    if (pre.row_keep[static_cast<size_t>(i)]) pre.row_map[static_cast<size_t>(i)] = pre.kept_rows++;
  }
  return pre;
}

QuadraticProgram reduce_problem(const QuadraticProgram& qp, const Dimensions& d,
                                const Presolve& pre) {
  QuadraticProgram out;
  out.q_diag.resize(pre.kept_cols);
  out.c.resize(pre.kept_cols);
  out.is_free.assign(static_cast<size_t>(pre.kept_cols), 0);
  for (int j = 0; j < d.n; ++j) {
    const int jj = pre.col_map[static_cast<size_t>(j)];
    if (jj < 0) continue;
    out.q_diag[jj] = qp.q_diag[j];
    out.c[jj] = qp.c[j];
    out.is_free[static_cast<size_t>(jj)] = qp.column_free(j) ? 1 : 0;
  }

  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < qp.a_eq.outerSize(); ++k) {
    for (SpMat::InnerIterator jt(qp.a_eq, k); jt; ++jt) {
      const int jj = pre.col_map[static_cast<size_t>(jt.col())];
      if (jj >= 0) trips.emplace_back(static_cast<int>(jt.row()), jj, jt.value());
    }
  }
  out.a_eq.resize(d.m_eq, pre.kept_cols);
  out.a_eq.setFromTriplets(trips.begin(), trips.end());
  out.b_eq = qp.b_eq;

  trips.clear();
  for (int k = 0; k < qp.a_in.outerSize(); ++k) {
    for (SpMat::InnerIterator jt(qp.a_in, k); jt; ++jt) {
      const int ii = pre.row_map[static_cast<size_t>(jt.row())];
      const int jj = pre.col_map[static_cast<size_t>(jt.col())];
      if (ii >= 0 && jj >= 0) trips.emplace_back(ii, jj, jt.value());
    }
  }
  out.a_in.resize(pre.kept_rows, pre.kept_cols);
  out.a_in.setFromTriplets(trips.begin(), trips.end());
  out.b_in.resize(pre.kept_rows);
  for (int i = 0; i < d.m_in; ++i) {
    const int ii = pre.row_map[static_cast<size_t>(i)];
    if (ii >= 0) out.b_in[ii] = qp.b_in[i];
  }
  return out;
}

// Scatter the reduced solution back and pick exact duals for the eliminated
// rows: z_i large enough that every forced column's bound dual stays
// nonnegative, complementary because the eliminated rows are tight at zero.
SolveResult expand_solution(const QuadraticProgram& qp, const Dimensions& d, const Presolve& pre,
                            SolveResult inner) {
  SolveResult out = std::move(inner);
  Vec x = Vec::Zero(d.n), w = Vec::Zero(d.n), z = Vec::Zero(d.m_in);
  for (int j = 0; j < d.n; ++j) {
    const int jj = pre.col_map[static_cast<size_t>(j)];
    if (jj >= 0) {
      x[j] = out.x[jj];
      w[j] = out.w[jj];
    }
  }
  for (int i = 0; i < d.m_in; ++i) {
    const int ii = pre.row_map[static_cast<size_t>(i)];
    if (ii >= 0) z[i] = out.z[ii];
  }

  if (out.status == SolveStatus::Optimal) {
    Vec stat = qp.q_diag.cwiseProduct(x) + qp.c;
    if (d.m_eq > 0) stat += qp.a_eq.transpose() * out.y;
    if (d.m_in > 0) stat += qp.a_in.transpose() * z;

    std::vector<std::vector<std::pair<int, double>>> row_entries(static_cast<size_t>(d.m_in));
    for (int k = 0; k < qp.a_in.outerSize(); ++k) {
      for (SpMat::InnerIterator jt(qp.a_in, k); jt; ++jt) {
        row_entries[static_cast<size_t>(jt.row())].push_back(
            {static_cast<int>(jt.col()), jt.value()});
      }
    }
    for (int i = 0; i < d.m_in; ++i) {
      if (pre.row_map[static_cast<size_t>(i)] >= 0) continue;
      double mu = 0.0;
      for (const auto& [j, v] : row_entries[static_cast<size_t>(i)]) {
        if (v > 0.0) mu = std::max(mu, -stat[j] / v);
      }
      if (mu > 0.0) {
        z[i] = mu;
        for (const auto& [j, v] : row_entries[static_cast<size_t>(i)]) stat[j] += v * mu;
      }
    }
    for (int j = 0; j < d.n; ++j) {
      if (pre.col_map[static_cast<size_t>(j)] < 0) w[j] = std::max(stat[j], 0.0);
    }
  }

  out.x = std::move(x);
  out.w = std::move(w);
  out.z = std::move(z);
  if (out.certificate) {
    Vec in_ray = Vec::Zero(d.m_in);
    for (int i = 0; i < d.m_in; ++i) {
      const int ii = pre.row_map[static_cast<size_t>(i)];
      if (ii >= 0) in_ray[i] = out.certificate->in_ray[ii];
    }
    out.certificate->in_ray = std::move(in_ray);
  }
  if (out.status == SolveStatus::Optimal) {
    const ResidualReport inner_report = out.residuals;
    out.residuals = kkt_residuals(qp, out.x, out.y, out.z, out.w);
    out.residuals.scaled_primal = inner_report.scaled_primal;
    out.residuals.scaled_dual = inner_report.scaled_dual;
    out.residuals.scaled_comp = inner_report.scaled_comp;
    out.objective = primal_objective(qp, out.x);
  }
  return out;
}

SolveResult solve_core(const QuadraticProgram& qp, const SolverOptions& opts);

}  // namespace

ResidualReport kkt_residuals(const QuadraticProgram& qp, const Vec& x, const Vec& y,
                             const Vec& z, const Vec& w) {
  const Dimensions d = check_dimensions(qp);
  if (x.size() != d.n || y.size() != d.m_eq || z.size() != d.m_in || w.size() != d.n) {
    fail(ErrorCode::DimensionMismatch, "kkt_residuals: vector sizes do not match the program");
  }

  ResidualReport r;
  if (d.m_eq > 0) r.primal_feas = inf_norm(qp.a_eq * x - qp.b_eq);
  Vec slack = d.m_in > 0 ? Vec(qp.b_in - qp.a_in * x) : Vec();
  for (int i = 0; i < d.m_in; ++i) r.primal_feas = std::max(r.primal_feas, -slack[i]);
  for (int j = 0; j < d.n; ++j) {
    if (!qp.column_free(j)) r.primal_feas = std::max(r.primal_feas, -x[j]);
  }

  Vec r_d = qp.q_diag.cwiseProduct(x) + qp.c - w;
  if (d.m_eq > 0) r_d += qp.a_eq.transpose() * y;
  if (d.m_in > 0) r_d += qp.a_in.transpose() * z;
  r.dual_feas = inf_norm(r_d);
  for (int i = 0; i < d.m_in; ++i) r.dual_feas = std::max(r.dual_feas, -z[i]);
  for (int j = 0; j < d.n; ++j) r.dual_feas = std::max(r.dual_feas, -w[j]);

  for (int i = 0; i < d.m_in; ++i) r.comp_slack = std::max(r.comp_slack, std::abs(z[i] * slack[i]));
  for (int j = 0; j < d.n; ++j) {
    if (!qp.column_free(j)) r.comp_slack = std::max(r.comp_slack, std::abs(w[j] * x[j]));
  }

  const double p_obj = primal_objective(qp, x);
  double d_obj = -0.5 * x.dot(qp.q_diag.cwiseProduct(x));
  if (d.m_eq > 0) d_obj -= qp.b_eq.dot(y);
  if (d.m_in > 0) d_obj -= qp.b_in.dot(z);
  r.duality_gap = std::abs(p_obj - d_obj) / std::max({1.0, std::abs(p_obj), std::abs(d_obj)});
  return r;
}

SolveResult solve(const QuadraticProgram& qp, const SolverOptions& opts) {
  const Dimensions d = check_dimensions(qp);

  Presolve pre = analyze_forced_zero(qp, d);
  if (pre.infeasible) {
    SolveResult r;
    r.status = SolveStatus::Infeasible;
    r.x = Vec::Zero(d.n);
    r.y = Vec::Zero(d.m_eq);
    r.z = Vec::Zero(d.m_in);
    r.w = Vec::Zero(d.n);
    InfeasibilityCertificate cert;
    cert.eq_ray = Vec::Zero(d.m_eq);
    cert.in_ray = Vec::Zero(d.m_in);
    cert.in_ray[pre.infeasible_row] = 1.0;
    cert.b_combination = qp.b_in[pre.infeasible_row];
    cert.most_violated_rows = {d.m_eq + pre.infeasible_row};
    r.certificate = std::move(cert);
    r.residuals = kkt_residuals(qp, r.x, r.y, r.z, r.w);
    return r;
  }
  if (pre.active()) {
    QuadraticProgram reduced = reduce_problem(qp, d, pre);
    if (reduced.columns() == 0) {
      // Everything was forced to zero; the remaining equalities must be
      // trivially satisfiable.
      SolveResult r;
      r.x = Vec();
      r.y = Vec::Zero(d.m_eq);
      r.z = Vec::Zero(pre.kept_rows);
      r.w = Vec();
      r.status = inf_norm(reduced.b_eq) <= 1e-12 ? SolveStatus::Optimal : SolveStatus::Infeasible;
      return expand_solution(qp, d, pre, std::move(r));
    }
    return expand_solution(qp, d, pre, solve_core(reduced, opts));
  }
  return solve_core(qp, opts);
}

namespace {

SolveResult solve_core(const QuadraticProgram& qp, const SolverOptions& opts) {
  const Dimensions d = check_dimensions(qp);
  std::vector<std::uint8_t> nonneg(static_cast<size_t>(d.n), 1);
  for (int j = 0; j < d.n; ++j) {
    if (qp.column_free(j)) nonneg[static_cast<size_t>(j)] = 0;
  }
  int n_nonneg = 0;
  for (auto flag : nonneg) n_nonneg += flag;

  const ScaledProblem sp = equilibrate(qp, d);
  KktSystem kkt(sp, d, nonneg);

  // Starting point: O(1) primal/dual magnitudes with seeded jitter so that
  // re-solves can start from genuinely different interior points.
  std::mt19937_64 rng(opts.seed * 0x9e3779b97f4a7c15ULL + 12345ULL);
  auto jitter = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  Iterate it;
  it.x = Vec::Zero(d.n);
  it.w = Vec::Zero(d.n);
  for (int j = 0; j < d.n; ++j) {
    if (nonneg[static_cast<size_t>(j)]) {
      it.x[j] = 1.0 + jitter();
      it.w[j] = 1.0 + jitter();
    }
  }
  it.y = Vec::Zero(d.m_eq);
  it.z = Vec::Constant(d.m_in, 1.0);
  it.s = Vec::Constant(d.m_in, 1.0);
  if (d.m_in > 0) {
    Vec gap = sp.b_in - sp.a_in * it.x;
    for (int i = 0; i < d.m_in; ++i) it.s[i] = std::max(1.0, gap[i]);
  }

  SolveResult result;
  const int comp_count = n_nonneg + d.m_in;
  double reg = opts.static_reg;

  auto scaled_report_of = [&](const Candidate& c) {
    return report_for(qp, c, scaled_residuals(sp, rescale(sp, c), nonneg));
  };

  auto finish_optimal = [&](const Candidate& cand, const ScaledResiduals& sr, int iter) {
    Candidate best = cand;
    ResidualReport best_report = report_for(qp, best, sr);
    if (opts.polish) {
      if (auto polished = polish(d, sp, it, nonneg, opts.refine_steps)) {
        ResidualReport pr = scaled_report_of(*polished);
#ifdef IAMOD_POLISH_DEBUG
        std::fprintf(stderr, "polish cand: p=%.2e d=%.2e c=%.2e g=%.2e\n", pr.primal_feas,
                     pr.dual_feas, pr.comp_slack, pr.duality_gap);
#endif
        // The polished point wins whenever it meets the tolerances: exact
        // zeros on inactive duals and bounds are worth more downstream than a
        // marginally smaller worst residual.
        if (within_tolerance(qp, pr, opts.tol)) {
          best = *polished;
          best_report = pr;
          result.polished = true;
        }
      } else {
#ifdef IAMOD_POLISH_DEBUG
        std::fprintf(stderr, "polish returned nullopt\n");
#endif
      }
    }
    result.status = SolveStatus::Optimal;
    result.x = best.x;
    result.y = best.y;
    result.z = best.z;
    result.w = best.w;
    result.residuals = best_report;
    result.iterations = iter;
    result.objective = primal_objective(qp, best.x);
  };

  // Once inside tolerance, keep stepping while complementarity still improves
  // so the x/w and s/z pairs separate cleanly before the active-set polish.
  int sharpen_left = 8;
  double last_comp = std::numeric_limits<double>::infinity();
  std::optional<std::pair<Candidate, ScaledResiduals>> converged;
  int converged_iter = 0;

  // Stall tracking: degenerate instances can freeze short of tolerance with
  // the true active set already identifiable, in which case polish finishes
  // the job.
  double best_merit = std::numeric_limits<double>::infinity();
  int since_improvement = 0;

  for (int iter = 0; iter <= opts.max_iter; ++iter) {
    const ScaledResiduals sr = scaled_residuals(sp, it, nonneg);
    const Candidate cand = unscale(sp, it);
    ResidualReport report = report_for(qp, cand, sr);

    if (opts.verbose) {
      std::fprintf(stderr,
                   "iter %3d  p %9.2e  d %9.2e  comp %9.2e  gap %9.2e  orig p %9.2e d %9.2e\n",
                   iter, sr.primal, sr.dual, sr.comp, report.duality_gap, report.primal_feas,
                   report.dual_feas);
    }

    const bool in_tolerance = within_tolerance(qp, report, opts.tol);
    if (in_tolerance) {
      converged = {cand, sr};
      converged_iter = iter;
    }
    if (converged) {
      // Finish within a bounded number of extra steps even if the iterate
      // wobbles back out of tolerance; the stored snapshot stays valid.
      const bool stalled = sr.comp > 0.5 * last_comp;
      const bool sharp = (in_tolerance && sr.comp <= std::max(1e-14, 1e-5 * opts.tol)) ||
                         sharpen_left == 0 || stalled || iter == opts.max_iter;
      if (sharp) {
        if (in_tolerance) {
          finish_optimal(cand, sr, iter);
        } else {
          finish_optimal(converged->first, converged->second, converged_iter);
        }
        return result;
      }
      last_comp = sr.comp;
      --sharpen_left;
    }

    const double merit = std::max({sr.primal, sr.dual, sr.comp, report.duality_gap});
    if (merit < 0.5 * best_merit) {
      best_merit = std::min(best_merit, merit);
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    const bool periodic_rescue = iter > 0 && iter % 25 == 0;
    if (!converged && opts.polish && ((since_improvement >= 10 && iter >= 15) || periodic_rescue)) {
#ifdef IAMOD_POLISH_DEBUG
      std::fprintf(stderr, "stall rescue at iter %d (since_improvement %d)\n", iter,
                   since_improvement);
#endif
      if (auto polished = polish(d, sp, it, nonneg, opts.refine_steps)) {
        ResidualReport pr = scaled_report_of(*polished);
        if (within_tolerance(qp, pr, opts.tol)) {
          result.status = SolveStatus::Optimal;
          result.x = polished->x;
          result.y = polished->y;
          result.z = polished->z;
          result.w = polished->w;
          result.residuals = pr;
          result.iterations = iter;
          result.objective = primal_objective(qp, polished->x);
          result.polished = true;
          return result;
        }
      }
      since_improvement = 0;  // try again if the next window stalls too
    }

    // Diverging duals with stalled primal feasibility suggest infeasibility;
    // only a verified Farkas ray may declare it.
    const double dual_mag = std::max(inf_norm(it.y), inf_norm(it.z));
    if (!converged && iter >= 3 && sr.primal > 1e2 * opts.tol && dual_mag > 1e4) {
      if (auto cert = check_certificate(qp, d, cand.y, cand.z)) {
        result.status = SolveStatus::Infeasible;
        result.x = cand.x;
        result.y = cand.y;
        result.z = cand.z;
        result.w = cand.w;
        result.residuals = report;
        result.iterations = iter;
        result.objective = primal_objective(qp, cand.x);
        result.certificate = std::move(cert);
        return result;
      }
    }

    if (iter == opts.max_iter) {
      // Last chance: the active-set prediction may already be exact.
      if (opts.polish) {
        if (auto polished = polish(d, sp, it, nonneg, opts.refine_steps)) {
          ResidualReport pr = scaled_report_of(*polished);
          if (within_tolerance(qp, pr, opts.tol)) {
            result.status = SolveStatus::Optimal;
            result.x = polished->x;
            result.y = polished->y;
            result.z = polished->z;
            result.w = polished->w;
            result.residuals = pr;
            result.iterations = iter;
            result.objective = primal_objective(qp, polished->x);
            result.polished = true;
            return result;
          }
        }
      }
      result.status = SolveStatus::IterationLimit;
      result.x = cand.x;
      result.y = cand.y;
      result.z = cand.z;
      result.w = cand.w;
      result.residuals = report;
      result.iterations = iter;
      result.objective = primal_objective(qp, cand.x);
      return result;
    }

    bool ok = false;
    for (int attempt = 0; attempt < 4 && !ok; ++attempt) {
      ok = kkt.factorize(it, reg);
      if (!ok) reg *= 100.0;
    }
    if (!ok) {
      // A converged snapshot beats throwing when only the sharpening steps
      // break down.
      if (converged) {
        finish_optimal(converged->first, converged->second, converged_iter);
        return result;
      }
      fail(ErrorCode::NumericalBreakdown, "KKT factorization failed after retries");
    }

    const double mu =
        comp_count > 0
            ? ([&] {
                double acc = 0.0;
                for (int j = 0; j < d.n; ++j) {
                  if (nonneg[static_cast<size_t>(j)]) acc += it.x[j] * it.w[j];
                }
                acc += it.s.dot(it.z);
                return acc / comp_count;
              }())
            : 0.0;

    Vec r_d = sp.q.cwiseProduct(it.x) + sp.c + sp.a_eq.transpose() * it.y +
              sp.a_in.transpose() * it.z - it.w;
    Vec r_eq = sp.a_eq * it.x - sp.b_eq;
    Vec r_in = sp.a_in * it.x + it.s - sp.b_in;

    auto build_rhs = [&](const Vec& tau_x, const Vec& tau_s) {
      Vec rhs(d.n + d.m_eq + d.m_in);
      rhs.head(d.n) = -r_d;
      for (int j = 0; j < d.n; ++j) {
        if (nonneg[static_cast<size_t>(j)]) rhs[j] += (tau_x[j] - it.x[j] * it.w[j]) / it.x[j];
      }
      rhs.segment(d.n, d.m_eq) = -r_eq;
      for (int i = 0; i < d.m_in; ++i) {
        rhs[d.n + d.m_eq + i] = -r_in[i] + (it.s[i] * it.z[i] - tau_s[i]) / it.z[i];
      }
      return rhs;
    };
    auto split_direction = [&](const Vec& sol, const Vec& tau_x, Iterate& dir) {
      dir.x = sol.head(d.n);
      dir.y = sol.segment(d.n, d.m_eq);
      dir.z = sol.tail(d.m_in);
      dir.s = -r_in - sp.a_in * dir.x;
      dir.w = Vec::Zero(d.n);
      for (int j = 0; j < d.n; ++j) {
        if (nonneg[static_cast<size_t>(j)]) {
          dir.w[j] = -(it.x[j] * it.w[j] - tau_x[j] + it.w[j] * dir.x[j]) / it.x[j];
        }
      }
    };

    Iterate aff;
    {
      Vec tau_x = Vec::Zero(d.n), tau_s = Vec::Zero(d.m_in);
      Vec sol = kkt.solve(build_rhs(tau_x, tau_s), opts.refine_steps);
      if (!sol.allFinite()) fail(ErrorCode::NumericalBreakdown, "KKT solve produced non-finite step");
      split_direction(sol, tau_x, aff);
    }

    double sigma = 0.0;
    if (comp_count > 0 && mu > 0.0) {
      const double ap = std::min(max_step(it.x, aff.x, &nonneg, 1.0),
                                 max_step(it.s, aff.s, nullptr, 1.0));
      const double ad = std::min(max_step(it.w, aff.w, &nonneg, 1.0),
                                 max_step(it.z, aff.z, nullptr, 1.0));
      double mu_aff = 0.0;
      for (int j = 0; j < d.n; ++j) {
        if (nonneg[static_cast<size_t>(j)]) {
          mu_aff += (it.x[j] + ap * aff.x[j]) * (it.w[j] + ad * aff.w[j]);
        }
      }
      for (int i = 0; i < d.m_in; ++i) {
        mu_aff += (it.s[i] + ap * aff.s[i]) * (it.z[i] + ad * aff.z[i]);
      }
      mu_aff = std::max(mu_aff / comp_count, 0.0);
      sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 1e-8, 0.99);
    }

    Iterate dir;
    {
      Vec tau_x = Vec::Zero(d.n), tau_s = Vec::Zero(d.m_in);
      for (int j = 0; j < d.n; ++j) {
        if (nonneg[static_cast<size_t>(j)]) tau_x[j] = sigma * mu - aff.x[j] * aff.w[j];
      }
      for (int i = 0; i < d.m_in; ++i) tau_s[i] = sigma * mu - aff.s[i] * aff.z[i];
      Vec sol = kkt.solve(build_rhs(tau_x, tau_s), opts.refine_steps);
      if (!sol.allFinite()) fail(ErrorCode::NumericalBreakdown, "KKT solve produced non-finite step");
      split_direction(sol, tau_x, dir);
    }

    const double gamma = mu < 1e-6 ? 0.9999 : 0.995;
    const double ap = std::min(max_step(it.x, dir.x, &nonneg, gamma),
                               max_step(it.s, dir.s, nullptr, gamma));
    const double ad = std::min(max_step(it.w, dir.w, &nonneg, gamma),
                               max_step(it.z, dir.z, nullptr, gamma));

    it.x += ap * dir.x;
    it.s += ap * dir.s;
    it.y += ad * dir.y;
    it.z += ad * dir.z;
    it.w += ad * dir.w;
  }

  return result;  // unreachable
}

}  // namespace

}  // namespace iamod
