#pragma once

// Dense complex linear-algebra substrate shared by all other headers.
// Vectors and operators are Eigen dynamic-size types with double-precision
// complex scalars; everything is a value and safe to share across threads
// once constructed.

#include <Eigen/Dense>
#include <complex>
#include <sstream>
#include <stdexcept>

namespace plqt {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

// Density matrices are plain square complex matrices; Hermiticity and unit
// trace are contracts of the routines that produce them, not of the type.
using DensityMatrix = ComplexMatrix;

inline ComplexMatrix identity_matrix(Eigen::Index dim) {
  return ComplexMatrix::Identity(dim, dim);
}

inline double max_abs(const ComplexMatrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  return max_abs(a - b);
}

/// Max-entry deviation from A = A^dagger.
inline double hermiticity_defect(const ComplexMatrix& a) {
  return max_abs(a - a.adjoint());
}

inline bool is_hermitian(const ComplexMatrix& a, double tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  return hermiticity_defect(a) <= tol * std::max(1.0, max_abs(a));
}

inline ComplexMatrix hermitize(const ComplexMatrix& a) {
  return 0.5 * (a + a.adjoint());
}

inline ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a * b - b * a;
}

inline ComplexMatrix anticommutator(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a * b + b * a;
}

/// A * v with an explicit dimension check.
inline ComplexVector apply(const ComplexMatrix& a, const ComplexVector& v) {
  if (a.cols() != v.size() || a.rows() != a.cols()) {
    std::ostringstream msg;
    msg << "apply: operator is " << a.rows() << "x" << a.cols() << ", vector has dimension "
        << v.size();
    throw std::invalid_argument(msg.str());
  }
  return a * v;
}

/// <v|A|v>. Real up to rounding when A is Hermitian.
inline Complex expectation(const ComplexMatrix& a, const ComplexVector& v) {
  if (a.cols() != v.size() || a.rows() != a.cols()) {
    std::ostringstream msg;
    msg << "expectation: operator is " << a.rows() << "x" << a.cols()
        << ", vector has dimension " << v.size();
    throw std::invalid_argument(msg.str());
  }
  return v.dot(a * v);  // Eigen's dot conjugates the left argument
}

struct EigenDecomposition {
  RealVector eigenvalues;      // ascending
  ComplexMatrix eigenvectors;  // unitary, columns are eigenvectors
};

/// Full eigendecomposition of a Hermitian matrix. Rejects input whose
/// anti-Hermitian part exceeds 1e-10 relative to the largest entry.
inline EigenDecomposition hermitian_eigendecomposition(const ComplexMatrix& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("hermitian_eigendecomposition: matrix is not square");
  }
  if (!is_hermitian(a)) {
    std::ostringstream msg;
    msg << "hermitian_eigendecomposition: matrix is not Hermitian (defect "
        << hermiticity_defect(a) << ")";
    throw std::invalid_argument(msg.str());
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(a);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("hermitian_eigendecomposition: solver failed to converge");
  }
  return EigenDecomposition{solver.eigenvalues(), solver.eigenvectors()};
}

}  // namespace plqt
