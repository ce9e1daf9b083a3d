#pragma once

#include "dolfin/matrix.hpp"

namespace dolfin::linalg {

struct SvdResult {
    DenseMatrix u;                       // m x k, orthonormal columns
    std::vector<double> singular_values; // length k, non-increasing
    DenseMatrix v;                       // n x k, orthonormal columns
};

// Standard matrix product; throws DimensionError naming both shapes.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// Thin Q of a Householder QR of m (m.rows >= m.cols required). Columns carry
// a fixed sign convention: the largest-magnitude entry of each column is
// positive. Throws RankError with the failing column on rank deficiency.
DenseMatrix qr_orthonormalize(const DenseMatrix& m);

// Thin SVD via one-sided Jacobi, k = min(rows, cols). U columns follow the
// same sign convention as qr_orthonormalize; V is flipped in tandem so the
// reconstruction is preserved.
SvdResult thin_svd(const DenseMatrix& m);

// (I - basis basis^T) h. basis must have orthonormal columns (checked within
// 1e-8); an empty basis (0 columns) returns h unchanged.
DenseMatrix project_complement(const DenseMatrix& basis, const DenseMatrix& h);

// Orthonormal basis of the orthogonal complement of span(basis): d x (d - m)
// for a d x m orthonormal basis.
DenseMatrix complement_basis(const DenseMatrix& basis, int ambient_dim);

// Frobenius inner product <a, b>.
double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b);

// ||a^T a - I||_F, the orthonormality defect.
double orthonormality_defect(const DenseMatrix& a);

// Largest principal angle (radians) between the column spans of two
// orthonormal bases of equal rank.
double max_principal_angle(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace dolfin::linalg
