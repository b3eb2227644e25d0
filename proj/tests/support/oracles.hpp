#pragma once

// Test-only reference computations. Nothing here calls into the code paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace affuse::oracle {

// Reflect index about the first/last sample, computed by walking rather than modulo.
inline std::size_t reflect(long k, std::size_t n) {
  if (n == 1) return 0;
  const long last = static_cast<long>(n) - 1;
  while (k < 0 || k > last) {
    if (k < 0) k = -k;
    if (k > last) k = 2 * last - k;
  }
  return static_cast<std::size_t>(k);
}

// Least-squares polynomial fit of degree `order` to the window around every sample
// (mirror-extended), evaluated at the window centre. Fits use raw integer offsets
// and Householder QR.
inline std::vector<double> windowed_polyfit(const std::vector<double>& x, std::size_t window, std::size_t order) {
  const long h = static_cast<long>(window - 1) / 2;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(window), static_cast<Eigen::Index>(order + 1));
  for (long i = -h; i <= h; ++i) {
    for (std::size_t k = 0; k <= order; ++k) a(i + h, static_cast<Eigen::Index>(k)) = std::pow(static_cast<double>(i), static_cast<double>(k));
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  std::vector<double> out(x.size());
  Eigen::VectorXd b(static_cast<Eigen::Index>(window));
  for (std::size_t c = 0; c < x.size(); ++c) {
    for (long i = -h; i <= h; ++i) b(i + h) = x[reflect(static_cast<long>(c) + i, x.size())];
    const Eigen::VectorXd coef = qr.solve(b);
    out[c] = coef(0);
  }
  return out;
}

// Central difference of f at every coordinate of `params`.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> params, double h) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = f(params);
    params[i] = saved - h;
    const double down = f(params);
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

}  // namespace affuse::oracle
