#pragma once

#include <Eigen/Core>

namespace retisynth::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// C channels × N samples (N = H·W of a feature map).
struct FeatureMatrix {
  Matrix values;
  Vector mean;  // valid once `centered` is set
  bool centered = false;

  FeatureMatrix() = default;
  explicit FeatureMatrix(Matrix v) : values(std::move(v)), mean(Vector::Zero(values.rows())) {}

  Eigen::Index channels() const { return values.rows(); }
  Eigen::Index samples() const { return values.cols(); }
};

/// Eigenpairs of a symmetric matrix, eigenvalues descending. Column j of
/// `eigvecs` pairs with eigvals[j]; its first nonzero component is positive.
struct EigDecomp {
  Vector eigvals;
  Matrix eigvecs;
};

struct WctParams {
  double eps_reg = 1e-5;
  double eig_floor = 1e-8;
};

/// Centers `f` in place (recording the removed mean) and returns
/// (1/N)·f·fᵀ + eps_reg·I.
Matrix covariance(FeatureMatrix& f, double eps_reg);

/// Cyclic Jacobi. Stops once the largest off-diagonal magnitude drops below
/// 1e-10·‖A‖_F; throws NumericError after `max_sweeps` without converging.
EigDecomp sym_eig(const Matrix& a, int max_sweeps = 100);

/// V·diag(max(λ, eig_floor)^p)·Vᵀ.
Matrix mat_power_sym(const Matrix& a, double p, double eig_floor);

/// cov(f)^(-1/2)·(f - mean). Result is centered with zero mean.
FeatureMatrix whiten(const FeatureMatrix& f, double eps_reg, double eig_floor);

/// cov(style)^(1/2)·f_w + mean(style).
FeatureMatrix color(const FeatureMatrix& whitened, const FeatureMatrix& style, double eps_reg, double eig_floor);

/// alpha·color(whiten(content), style) + (1 - alpha)·content, with content
/// taken un-centered.
FeatureMatrix wct(const FeatureMatrix& content, const FeatureMatrix& style, double alpha, double eps_reg,
                  double eig_floor);

inline FeatureMatrix wct(const FeatureMatrix& content, const FeatureMatrix& style, double alpha,
                         const WctParams& params = {}) {
  return wct(content, style, alpha, params.eps_reg, params.eig_floor);
}

}  // namespace retisynth::linalg
