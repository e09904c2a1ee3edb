#include "fewtreat/linalg.hpp"

#include "fewtreat/error.hpp"

#include <algorithm>
#include <string>

namespace fewtreat::linalg {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_of(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrize(m));
  if (solver.info() != Eigen::Success) throw InvariantError("eigendecomposition failed");
  return solver;
}

}  // namespace

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return m;
  const auto solver = eigen_of(m);
  const Eigen::VectorXd& lambda = solver.eigenvalues();
  // Negative eigenvalues at rounding level are left alone, so that projecting
  // an already projected matrix returns it unchanged.
  const double slack = 1e-12 * std::max(1e-300, lambda.cwiseAbs().maxCoeff());
  if (lambda.minCoeff() >= -slack) return symmetrize(m);
  const Eigen::VectorXd clipped = lambda.cwiseMax(0.0);
  const auto& v = solver.eigenvectors();
  return symmetrize(v * clipped.asDiagonal() * v.transpose());
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return m;
  const auto solver = eigen_of(m);
  const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const auto& v = solver.eigenvectors();
  return symmetrize(v * roots.asDiagonal() * v.transpose());
}

Eigen::MatrixXd inverse_sqrt_pd(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return m;
  const auto solver = eigen_of(m);
  const Eigen::VectorXd& ev = solver.eigenvalues();
  if (!(ev.minCoeff() > 0.0))
    throw InvariantError("scale matrix is singular (smallest eigenvalue " +
                         std::to_string(ev.minCoeff()) + ")");
  const Eigen::VectorXd inv_roots = ev.cwiseSqrt().cwiseInverse();
  const auto& v = solver.eigenvectors();
  return symmetrize(v * inv_roots.asDiagonal() * v.transpose());
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return eigen_of(m).eigenvalues().minCoeff();
}

double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace fewtreat::linalg
