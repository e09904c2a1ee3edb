#pragma once

#include <Eigen/Dense>

namespace fewtreat::linalg {

/// (M + M^T) / 2.
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

/// Nearest PSD matrix in Frobenius norm: symmetrize, clip negative eigenvalues at 0.
Eigen::MatrixXd project_psd(const Eigen::MatrixXd& m);

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues clipped.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m);

/// Inverse of the symmetric square root. Throws InvariantError when an
/// eigenvalue of m is not strictly positive.
Eigen::MatrixXd inverse_sqrt_pd(const Eigen::MatrixXd& m);

double min_eigenvalue(const Eigen::MatrixXd& m);

/// Largest singular value.
double spectral_norm(const Eigen::MatrixXd& m);

}  // namespace fewtreat::linalg
