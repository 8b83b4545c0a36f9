/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace idyn {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

/// Sorted set of 0-based row/variable indices.
using IndexSet = std::vector<int>;

enum class ErrorCode {
  dimension_mismatch,
  singular_a,
  singular_sub_block,
  ray_termination,
  max_pivots_exceeded,
  no_solution,
  enumeration_cap_exceeded,
  infeasible,
  unbounded,
  zero_normal,
  coincident_centers,
  unknown_body,
  unsupported_mechanism,
  inconsistent_desired_accel,
  negative_base,
  solver_failure,
  config_error,
  io_error,
};

/// Error type shared by all modules; carries a machine-checkable code.
class IdynError : public std::runtime_error {
 public:
  IdynError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw IdynError(code, what);
}

// select rows of A
inline MatrixXd select_rows(const MatrixXd& A, const IndexSet& rows) {
  MatrixXd out(static_cast<int>(rows.size()), A.cols());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i)
    out.row(i) = A.row(rows[i]);
  return out;
}

inline VectorXd select(const VectorXd& v, const IndexSet& idx) {
  VectorXd out(static_cast<int>(idx.size()));
  for (int i = 0; i < static_cast<int>(idx.size()); ++i) out[i] = v[idx[i]];
  return out;
}

inline bool contains(const IndexSet& s, int i) {
  for (int j : s)
    if (j == i) return true;
  return false;
}

// Cholesky with an explicit pivot threshold: a pivot at or below 1e-10 times
// the max diagonal is treated as singular.  This is the singularity test
// shared by the pivoting solver and the row-selection algorithm.
inline bool cholesky_factor(const MatrixXd& G, MatrixXd& L) {
  const int n = static_cast<int>(G.rows());
  double max_diag = 0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, G(i, i));
  const double thresh = 1e-10 * std::max(max_diag, 1e-300);
  L.setZero(n, n);
  for (int j = 0; j < n; ++j) {
    double d = G(j, j);
    for (int k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    if (!(d > thresh)) return false;
    L(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double s = G(i, j);
      for (int k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / L(j, j);
    }
  }
  return true;
}

inline VectorXd cholesky_solve(const MatrixXd& L, VectorXd b) {
  const int n = static_cast<int>(L.rows());
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < i; ++k) b[i] -= L(i, k) * b[k];
    b[i] /= L(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    for (int k = i + 1; k < n; ++k) b[i] -= L(k, i) * b[k];
    b[i] /= L(i, i);
  }
  return b;
}

}  // namespace idyn
