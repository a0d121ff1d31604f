#include "snmpc/qp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace snmpc::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRidge0 = 1e-8;
constexpr double kRidgeMax = 1e-2;

// One-sided constraint c'x >= d produced by expanding the two-sided rows.
struct SideRow {
  Eigen::VectorXd c;
  double d = 0.0;
  int source_row = -1;
  bool is_upper = false;  // came from the hi side (c = -C_row)
  double scale = 1.0;     // norm the row was divided by
};

double distance(double a, double b) {
  // hypot without over/underflow, as used by the classic solvers
  const double a1 = std::abs(a);
  const double b1 = std::abs(b);
  if (a1 > b1) {
    const double t = b1 / a1;
    return a1 * std::sqrt(1.0 + t * t);
  }
  if (b1 > a1) {
    const double t = a1 / b1;
    return b1 * std::sqrt(1.0 + t * t);
  }
  return a1 * std::sqrt(2.0);
}

// Incremental QR machinery of the Goldfarb-Idnani method. J = L^{-T} Q,
// R upper triangular over the active constraint normals.
struct GiWorkspace {
  int n = 0;
  Eigen::MatrixXd J;
  Eigen::MatrixXd R;
  double R_norm = 1.0;

  void compute_d(Eigen::VectorXd& d, const Eigen::VectorXd& np) const {
    d.noalias() = J.transpose() * np;
  }
  void update_z(Eigen::VectorXd& z, const Eigen::VectorXd& d, int q) const {
    z.noalias() = J.rightCols(n - q) * d.tail(n - q);
  }
  void update_r(Eigen::VectorXd& r, const Eigen::VectorXd& d, int q) const {
    if (q == 0) return;
    r.head(q) = R.topLeftCorner(q, q)
                    .triangularView<Eigen::Upper>()
                    .solve(d.head(q));
  }

  bool add_constraint(Eigen::VectorXd& d, int& q) {
    // Rotate d[q+1..n-1] into d[q] with Givens rotations applied to J.
    for (int j = n - 1; j >= q + 1; --j) {
      const double cc = d(j - 1);
      const double ss = d(j);
      const double h = distance(cc, ss);
      if (h == 0.0) continue;
      d(j) = 0.0;
      double s = ss / h;
      double c = cc / h;
      if (c < 0.0) {
        c = -c;
        s = -s;
        d(j - 1) = -h;
      } else {
        d(j - 1) = h;
      }
      const double xny = s / (1.0 + c);
      for (int k = 0; k < n; ++k) {
        const double t1 = J(k, j - 1);
        const double t2 = J(k, j);
        J(k, j - 1) = t1 * c + t2 * s;
        J(k, j) = xny * (t1 + J(k, j - 1)) - t2;
      }
    }
    ++q;
    R.col(q - 1).head(q) = d.head(q);
    R_norm = std::max(R_norm, std::abs(d(q - 1)));
    return std::abs(d(q - 1)) > std::numeric_limits<double>::epsilon() * R_norm;
  }

  void delete_constraint(std::vector<int>& active, Eigen::VectorXd& u, int& q,
                         int pos) {
    for (int i = pos; i < q - 1; ++i) {
      active[i] = active[i + 1];
      u(i) = u(i + 1);
      R.col(i) = R.col(i + 1);
    }
    active[q - 1] = -1;
    u(q - 1) = 0.0;
    --q;
    if (q == 0) return;

    for (int j = pos; j < q; ++j) {
      const double cc = R(j, j);
      const double ss = R(j + 1, j);
      const double h = distance(cc, ss);
      if (h == 0.0) continue;
      double s = ss / h;
      double c = cc / h;
      R(j + 1, j) = 0.0;
      if (c < 0.0) {
        R(j, j) = -h;
        c = -c;
        s = -s;
      } else {
        R(j, j) = h;
      }
      const double xny = s / (1.0 + c);
      for (int k = j + 1; k < q; ++k) {
        const double t1 = R(j, k);
        const double t2 = R(j + 1, k);
        R(j, k) = t1 * c + t2 * s;
        R(j + 1, k) = xny * (t1 + R(j, k)) - t2;
      }
      for (int k = 0; k < n; ++k) {
        const double t1 = J(k, j);
        const double t2 = J(k, j + 1);
        J(k, j) = t1 * c + t2 * s;
        J(k, j + 1) = xny * (J(k, j) + t1) - t2;
      }
    }
  }
};

}  // namespace

QpResult solve_qp(const QpProblem& problem, int max_iter) {
  const int n = static_cast<int>(problem.H.rows());
  if (problem.H.cols() != n || problem.g.size() != n) {
    throw std::invalid_argument("solve_qp: inconsistent H/g dimensions");
  }
  const int m_eq = static_cast<int>(problem.A_eq.rows());
  const int m_rows = static_cast<int>(problem.C.rows());
  if (m_eq > 0 && problem.A_eq.cols() != n) {
    throw std::invalid_argument("solve_qp: A_eq column count mismatch");
  }
  if (m_rows > 0 &&
      (problem.C.cols() != n || problem.lo.size() != m_rows || problem.hi.size() != m_rows)) {
    throw std::invalid_argument("solve_qp: C/lo/hi dimension mismatch");
  }

  QpResult result;
  result.eq_duals = Eigen::VectorXd::Zero(m_eq);
  result.row_duals = Eigen::VectorXd::Zero(m_rows);

  // Factorize H with an escalating ridge.
  Eigen::LLT<Eigen::MatrixXd> llt;
  double ridge = kRidge0;
  while (true) {
    Eigen::MatrixXd Hr = problem.H;
    Hr.diagonal().array() += ridge;
    llt.compute(Hr);
    if (llt.info() == Eigen::Success) break;
    ridge *= 10.0;
    if (ridge > kRidgeMax) {
      result.status = QpStatus::failed;
      return result;
    }
  }

  // Expand two-sided rows into >= constraints; drop zero rows after
  // checking they are satisfiable at all.
  std::vector<SideRow> rows;
  rows.reserve(2 * static_cast<std::size_t>(m_rows));
  for (int i = 0; i < m_rows; ++i) {
    const double norm = problem.C.row(i).norm();
    if (problem.lo(i) > problem.hi(i)) {
      result.status = QpStatus::infeasible;
      return result;
    }
    if (norm < 1e-14) {
      if (problem.lo(i) > 0.0 || problem.hi(i) < 0.0) {
        result.status = QpStatus::infeasible;  // constant row outside its bounds
        return result;
      }
      continue;
    }
    if (problem.lo(i) > -kInf) {
      rows.push_back(SideRow{problem.C.row(i).transpose() / norm,
                             problem.lo(i) / norm, i, false, norm});
    }
    if (problem.hi(i) < kInf) {
      rows.push_back(SideRow{-problem.C.row(i).transpose() / norm,
                             -problem.hi(i) / norm, i, true, norm});
    }
  }
  const int m_in = static_cast<int>(rows.size());

  GiWorkspace ws;
  ws.n = n;
  ws.R = Eigen::MatrixXd::Zero(n, n);
  // J = L^{-T}
  ws.J = llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));
  const double c1 = problem.H.trace() + ridge * n;
  const double c2 = ws.J.trace();

  Eigen::VectorXd x = -llt.solve(problem.g);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd np = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  std::vector<int> active(static_cast<std::size_t>(n) + 1, -1);
  int q = 0;
  int iter = 0;

  // Equality constraints first; they are never dropped.
  for (int i = 0; i < m_eq; ++i) {
    np = problem.A_eq.row(i).transpose();
    const double b = problem.b_eq(i);
    ws.compute_d(d, np);
    ws.update_z(z, d, q);
    ws.update_r(r, d, q);

    double t2 = 0.0;
    if (z.squaredNorm() > std::numeric_limits<double>::epsilon()) {
      t2 = (b - np.dot(x)) / z.dot(np);
    } else if (std::abs(b - np.dot(x)) >
               1e-10 * (1.0 + std::abs(b) + x.lpNorm<Eigen::Infinity>())) {
      result.status = QpStatus::infeasible;  // inconsistent equalities
      return result;
    }
    x += t2 * z;
    u.head(q) -= t2 * r.head(q);
    u(q) = t2;
    active[static_cast<std::size_t>(q)] = -(i + 1);  // negative marks equalities
    if (!ws.add_constraint(d, q)) {
      result.status = QpStatus::failed;  // linearly dependent equalities
      return result;
    }
    ++iter;
  }

  Eigen::VectorXd s(m_in);
  const double feas_tol =
      100.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, c1);
  (void)c2;

  while (true) {
    if (iter >= max_iter) {
      result.status = QpStatus::max_iterations;
      result.iterations = iter;
      return result;
    }

    // Most violated inactive inequality.
    int ip = -1;
    double ss = 0.0;
    for (int i = 0; i < m_in; ++i) {
      s(i) = rows[static_cast<std::size_t>(i)].c.dot(x) - rows[static_cast<std::size_t>(i)].d;
      bool is_active = false;
      for (int k = m_eq; k < q; ++k) {
        if (active[static_cast<std::size_t>(k)] == i) {
          is_active = true;
          break;
        }
      }
      if (!is_active && s(i) < ss - feas_tol) {
        ss = s(i);
        ip = i;
      }
    }
    if (ip < 0) break;  // all satisfied

    np = rows[static_cast<std::size_t>(ip)].c;
    double u_plus = 0.0;
    double s_ip = s(ip);

    while (true) {
      ws.compute_d(d, np);
      ws.update_z(z, d, q);
      ws.update_r(r, d, q);

      // Longest dual step retaining nonnegative multipliers.
      double t1 = kInf;
      int drop_pos = -1;
      for (int k = m_eq; k < q; ++k) {
        if (r(k) > 0.0 && u(k) / r(k) < t1) {
          t1 = u(k) / r(k);
          drop_pos = k;
        }
      }
      // Full primal step onto the violated constraint.
      double t2 = kInf;
      if (z.squaredNorm() > std::numeric_limits<double>::epsilon()) {
        t2 = -s_ip / z.dot(np);
      }
      const double t = std::min(t1, t2);

      if (t >= kInf) {
        result.status = QpStatus::infeasible;
        result.iterations = iter;
        return result;
      }

      if (t2 >= kInf) {
        // Dual-only step; drop the blocking constraint and retry.
        u.head(q) -= t * r.head(q);
        u_plus += t;
        ws.delete_constraint(active, u, q, drop_pos);
        ++iter;
        if (iter >= max_iter) {
          result.status = QpStatus::max_iterations;
          result.iterations = iter;
          return result;
        }
        continue;
      }

      x += t * z;
      u.head(q) -= t * r.head(q);
      u_plus += t;
      s_ip = np.dot(x) - rows[static_cast<std::size_t>(ip)].d;

      if (std::abs(t - t2) < std::numeric_limits<double>::epsilon() * (1.0 + std::abs(t2))) {
        u(q) = u_plus;
        active[static_cast<std::size_t>(q)] = ip;
        if (!ws.add_constraint(d, q)) {
          result.status = QpStatus::failed;
          result.iterations = iter;
          return result;
        }
        ++iter;
        break;
      }

      ws.delete_constraint(active, u, q, drop_pos);
      ++iter;
      if (iter >= max_iter) {
        result.status = QpStatus::max_iterations;
        result.iterations = iter;
        return result;
      }
    }
  }

  result.status = QpStatus::solved;
  result.iterations = iter;
  result.x = x;
  for (int k = 0; k < q; ++k) {
    const int id = active[static_cast<std::size_t>(k)];
    if (id < 0) {
      result.eq_duals(-id - 1) = -u(k);
    } else {
      const SideRow& row = rows[static_cast<std::size_t>(id)];
      const double mu = u(k) / row.scale;
      result.row_duals(row.source_row) += row.is_upper ? mu : -mu;
    }
  }

  // One equality-constrained re-solve on the final active set against the
  // unridged Hessian; removes the ridge bias and Givens rounding. Kept
  // only when it reproduces the same active-set solution.
  {
    Eigen::MatrixXd a_act(q, n);
    Eigen::VectorXd d_act(q);
    for (int k = 0; k < q; ++k) {
      const int id = active[static_cast<std::size_t>(k)];
      if (id < 0) {
        a_act.row(k) = problem.A_eq.row(-id - 1);
        d_act(k) = problem.b_eq(-id - 1);
      } else {
        a_act.row(k) = rows[static_cast<std::size_t>(id)].c.transpose();
        d_act(k) = rows[static_cast<std::size_t>(id)].d;
      }
    }
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + q, n + q);
    kkt.topLeftCorner(n, n) = problem.H;
    kkt.topRightCorner(n, q) = a_act.transpose();
    kkt.bottomLeftCorner(q, n) = a_act;
    Eigen::VectorXd rhs(n + q);
    rhs.head(n) = -problem.g;
    rhs.tail(q) = d_act;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    const Eigen::VectorXd x_ref = sol.head(n);
    bool ok = (kkt * sol - rhs).lpNorm<Eigen::Infinity>() <
                  1e-9 * (1.0 + rhs.lpNorm<Eigen::Infinity>()) &&
              (x_ref - x).lpNorm<Eigen::Infinity>() <
                  1e-4 * (1.0 + x.lpNorm<Eigen::Infinity>());
    for (int k = 0; ok && k < q; ++k) {
      if (active[static_cast<std::size_t>(k)] >= 0 && -sol(n + k) < -1e-10) {
        ok = false;  // refined multiplier left the dual cone
      }
    }
    for (int i = 0; ok && i < m_in; ++i) {
      if (rows[static_cast<std::size_t>(i)].c.dot(x_ref) <
          rows[static_cast<std::size_t>(i)].d - 1e-9) {
        ok = false;
      }
    }
    if (ok) {
      result.x = x_ref;
      result.eq_duals.setZero();
      result.row_duals.setZero();
      for (int k = 0; k < q; ++k) {
        const int id = active[static_cast<std::size_t>(k)];
        if (id < 0) {
          result.eq_duals(-id - 1) = sol(n + k);
        } else {
          const SideRow& row = rows[static_cast<std::size_t>(id)];
          const double mu = -sol(n + k) / row.scale;
          result.row_duals(row.source_row) += row.is_upper ? mu : -mu;
        }
      }
    }
  }
  return result;
}

double kkt_residual(const QpProblem& problem, const QpResult& result) {
  if (result.status != QpStatus::solved) return kInf;
  const Eigen::VectorXd& x = result.x;

  Eigen::VectorXd stat = problem.H * x + problem.g;
  if (problem.A_eq.rows() > 0) stat += problem.A_eq.transpose() * result.eq_duals;
  if (problem.C.rows() > 0) stat += problem.C.transpose() * result.row_duals;
  double res = stat.lpNorm<Eigen::Infinity>();

  if (problem.A_eq.rows() > 0) {
    res = std::max(res, (problem.A_eq * x - problem.b_eq).lpNorm<Eigen::Infinity>());
  }
  for (int i = 0; i < problem.C.rows(); ++i) {
    const double v = problem.C.row(i).dot(x);
    res = std::max(res, std::max(problem.lo(i) - v, v - problem.hi(i)));
    const double mu = result.row_duals(i);
    if (mu > 0.0) {
      res = std::max(res, mu * std::abs(problem.hi(i) - v));
    } else if (mu < 0.0) {
      res = std::max(res, -mu * std::abs(v - problem.lo(i)));
    }
  }
  return res;
}

}  // namespace snmpc::qp
