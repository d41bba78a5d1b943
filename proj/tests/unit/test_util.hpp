#pragma once

#include <complex>
#include <random>

#include <Eigen/Dense>

namespace pinsight::test {

/// Haar-ish random matrix with orthonormal columns (complex Gaussian + thin QR).
inline Eigen::MatrixXcd random_orthonormal(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXcd g(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) g(r, c) = {n(rng), n(rng)};
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  return qr.householderQ() * Eigen::MatrixXcd::Identity(rows, cols);
}

/// Principal angle between two unit vectors viewed as complex lines.
inline double line_angle(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
  return std::acos(std::min(1.0, c));
}

}  // namespace pinsight::test
