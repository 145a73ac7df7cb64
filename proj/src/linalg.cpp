#include "retisynth/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "retisynth/errors.hpp"

namespace retisynth::linalg {

Matrix covariance(FeatureMatrix& f, double eps_reg) {
  if (eps_reg < 0) throw ConfigError("covariance: eps_reg must be >= 0");
  const Eigen::Index c = f.channels(), n = f.samples();
  if (n < 2) throw DimensionError("covariance: need at least 2 samples, got " + std::to_string(n));
  const Vector row_mean = f.values.rowwise().mean();
  f.values.colwise() -= row_mean;
  if (f.mean.size() != c) f.mean = Vector::Zero(c);
  f.mean += row_mean;
  f.centered = true;

  Matrix cov(c, c);
  cov.triangularView<Eigen::Lower>() = (f.values * f.values.transpose()) / static_cast<double>(n);
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  cov.diagonal().array() += eps_reg;
  return cov;
}

EigDecomp sym_eig(const Matrix& input, int max_sweeps) {
  if (input.rows() != input.cols())
    throw DimensionError("sym_eig: matrix is " + std::to_string(input.rows()) + "x" + std::to_string(input.cols()));
  const Eigen::Index n = input.rows();
  const double asym = n ? (input - input.transpose()).cwiseAbs().maxCoeff() : 0.0;
  if (asym >= 1e-8) throw ContractError("sym_eig: input not symmetric, max |A - A^T| = " + std::to_string(asym));

  Matrix a = input;
  Matrix v = Matrix::Identity(n, n);
  const double tol = 1e-10 * input.norm();

  auto max_off = [&] {
    double m = 0;
    for (Eigen::Index q = 1; q < n; ++q)
      for (Eigen::Index p = 0; p < q; ++p) m = std::max(m, std::abs(a(p, q)));
    return m;
  };

  int sweep = 0;
  for (;; ++sweep) {
    const double off = max_off();
    if (off <= tol) break;
    if (sweep == max_sweeps)
      throw NumericError("sym_eig: no convergence after " + std::to_string(max_sweeps) +
                         " sweeps, max off-diagonal residual " + std::to_string(off));
    for (Eigen::Index p = 0; p + 1 < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150)
          t = 0.5 / theta;
        else
          t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });

  EigDecomp out{Vector(n), Matrix(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto src = order[static_cast<std::size_t>(j)];
    out.eigvals(j) = a(src, src);
    out.eigvecs.col(j) = v.col(src);
    for (Eigen::Index k = 0; k < n; ++k) {
      if (std::abs(out.eigvecs(k, j)) > 1e-12) {
        if (out.eigvecs(k, j) < 0) out.eigvecs.col(j) *= -1.0;
        break;
      }
    }
  }
  return out;
}

Matrix mat_power_sym(const Matrix& a, double p, double eig_floor) {
  if (!(eig_floor > 0)) throw ConfigError("mat_power_sym: eig_floor must be > 0");
  const EigDecomp e = sym_eig(a);
  Vector powered = e.eigvals.unaryExpr([&](double l) { return std::pow(std::max(l, eig_floor), p); });
  return e.eigvecs * powered.asDiagonal() * e.eigvecs.transpose();
}

FeatureMatrix whiten(const FeatureMatrix& f, double eps_reg, double eig_floor) {
  FeatureMatrix work = f;
  const Matrix cov = covariance(work, eps_reg);
  FeatureMatrix out(mat_power_sym(cov, -0.5, eig_floor) * work.values);
  out.centered = true;
  return out;
}

FeatureMatrix color(const FeatureMatrix& whitened, const FeatureMatrix& style, double eps_reg, double eig_floor) {
  if (whitened.channels() != style.channels())
    throw DimensionError("color: channel mismatch, whitened has " + std::to_string(whitened.channels()) +
                         ", style has " + std::to_string(style.channels()));
  FeatureMatrix s = style;
  const Matrix cov = covariance(s, eps_reg);
  Matrix colored = mat_power_sym(cov, 0.5, eig_floor) * whitened.values;
  colored.colwise() += s.mean;
  return FeatureMatrix(std::move(colored));
}

FeatureMatrix wct(const FeatureMatrix& content, const FeatureMatrix& style, double alpha, double eps_reg,
                  double eig_floor) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("wct: alpha must lie in [0,1]");
  const FeatureMatrix transferred = color(whiten(content, eps_reg, eig_floor), style, eps_reg, eig_floor);
  Matrix restored = content.values;
  if (content.centered) restored.colwise() += content.mean;
  return FeatureMatrix(alpha * transferred.values + (1.0 - alpha) * restored);
}

}  // namespace retisynth::linalg
