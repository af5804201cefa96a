#pragma once

// Thin wrapper over LAPACK's MRRR symmetric eigensolver (dsyevr).

#include <Eigen/Dense>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "quenchstat/errors.hpp"

namespace quenchstat::lapack {

struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// max |V^T V x - x| / |x| for a fixed random probe x; O(n m).
inline double orthonormality_probe(const Eigen::MatrixXd& v) {
  if (v.cols() == 0) return 0.0;
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> g;
  Eigen::VectorXd x(v.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = g(rng);
  const Eigen::VectorXd y = v * x;
  return (v.transpose() * y - x).norm() / x.norm();
}

/// Lowest `count` eigenpairs of the symmetric matrix `a` (lower triangle read).
/// `a` is destroyed. count <= 0 requests the whole spectrum. Throws
/// NumericalError if the returned vectors are not orthonormal.
inline SymmetricEigen lowest_eigenpairs(Eigen::MatrixXd& a, Eigen::Index count, bool want_vectors = true) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  SymmetricEigen out;
  if (n == 0) return out;
  const bool all = count <= 0 || count >= a.rows();
  const lapack_int m_req = all ? n : static_cast<lapack_int>(count);

  out.values.resize(n);
  if (want_vectors) out.vectors.resize(n, m_req);
  std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info =
      LAPACKE_dsyevr(LAPACK_COL_MAJOR, want_vectors ? 'V' : 'N', all ? 'A' : 'I', 'L', n, a.data(), n, 0.0, 0.0,
                     all ? 0 : 1, all ? 0 : m_req, 0.0, &found, out.values.data(),
                     want_vectors ? out.vectors.data() : nullptr, want_vectors ? n : 1, isuppz.data());
  if (info != 0) throw NumericalError("dsyevr failed with info = " + std::to_string(info));
  out.values.conservativeResize(found);
  if (want_vectors && found != m_req) out.vectors.conservativeResize(n, found);
  if (want_vectors) {
    const double err = orthonormality_probe(out.vectors);
    if (!(err < 1e-8))
      throw NumericalError("LAPACK returned non-orthonormal eigenvectors (probe error " + std::to_string(err) +
                           "); the BLAS kernel for this CPU is faulty, set OPENBLAS_CORETYPE");
  }
  return out;
}

/// Diagonalizes a fixed random symmetric matrix large enough to exercise the
/// blocked LAPACK code paths and reports whether the result is consistent.
inline bool backend_self_test(Eigen::Index n = 256) {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) r(i, j) = u(rng);
  const Eigen::MatrixXd a0 = r + r.transpose();
  Eigen::MatrixXd a = a0;
  try {
    const auto e = lowest_eigenpairs(a, 0);
    const double res = (a0 * e.vectors - e.vectors * e.values.asDiagonal()).cwiseAbs().maxCoeff();
    return res < 1e-9 * n;
  } catch (const NumericalError&) {
    return false;
  }
}

}  // namespace quenchstat::lapack
