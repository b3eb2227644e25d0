#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "affuse/error.hpp"

namespace affuse {

struct SmootherConfig {
  std::size_t window = 51;
  std::size_t polyorder = 3;

  void validate() const {
    if (window == 0 || window % 2 == 0) {
      throw InvalidArgument("smoother window must be odd and positive, got " + std::to_string(window));
    }
    if (polyorder >= window) {
      throw InvalidArgument("smoother polyorder (" + std::to_string(polyorder) + ") must be below window (" +
                            std::to_string(window) + ")");
    }
  }
};

// Savitzky-Golay smoothing weights for the window centre.
//
// w[i] is the weight of the sample at offset i - h, h = (window - 1) / 2. The weights
// are the first row of the least-squares projector onto polynomials of degree
// <= polyorder, so dot(w, p(-h..h)) == p(0) for any such polynomial.
inline std::vector<double> savgol_coefficients(const SmootherConfig& config) {
  config.validate();
  const std::size_t h = (config.window - 1) / 2;
  const std::size_t terms = config.polyorder + 1;
  // Offsets are scaled into [-1, 1]; the estimate at 0 is scale-invariant and the
  // normal equations stay well conditioned for wide windows.
  const long double scale = h == 0 ? 1.0L : static_cast<long double>(h);

  std::vector<long double> u(config.window);
  for (std::size_t i = 0; i < config.window; ++i) {
    u[i] = (static_cast<long double>(i) - static_cast<long double>(h)) / scale;
  }

  // Normal matrix G[a][b] = sum_i u_i^(a+b), augmented with e0.
  std::vector<std::vector<long double>> g(terms, std::vector<long double>(terms + 1, 0.0L));
  for (std::size_t a = 0; a < terms; ++a) {
    for (std::size_t b = 0; b < terms; ++b) {
      long double s = 0.0L;
      for (long double x : u) s += std::pow(x, static_cast<int>(a + b));
      g[a][b] = s;
    }
    g[a][terms] = a == 0 ? 1.0L : 0.0L;
  }

  // Gaussian elimination with partial pivoting.
  for (std::size_t col = 0; col < terms; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < terms; ++r) {
      if (std::fabs(g[r][col]) > std::fabs(g[pivot][col])) pivot = r;
    }
    std::swap(g[col], g[pivot]);
    if (g[col][col] == 0.0L) throw InvalidArgument("singular Savitzky-Golay normal matrix");
    for (std::size_t r = 0; r < terms; ++r) {
      if (r == col) continue;
      const long double f = g[r][col] / g[col][col];
      for (std::size_t c = col; c <= terms; ++c) g[r][c] -= f * g[col][c];
    }
  }

  std::vector<double> w(config.window);
  for (std::size_t i = 0; i < config.window; ++i) {
    long double acc = 0.0L;
    long double power = 1.0L;
    for (std::size_t k = 0; k < terms; ++k) {
      acc += (g[k][terms] / g[k][k]) * power;
      power *= u[i];
    }
    w[i] = static_cast<double>(acc);
  }
  return w;
}

namespace detail {
// Mirror index about the edge samples: ... c b | a b c ... | x y | ... x w
inline std::size_t mirror_index(std::ptrdiff_t k, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  k %= period;
  if (k < 0) k += period;
  if (k >= static_cast<std::ptrdiff_t>(n)) k = period - k;
  return static_cast<std::size_t>(k);
}
}  // namespace detail

// Savitzky-Golay smoothing with mirror padding; output length equals input length.
inline std::vector<double> savgol_filter(std::span<const double> x, const SmootherConfig& config) {
  const auto w = savgol_coefficients(config);
  const auto h = static_cast<std::ptrdiff_t>((config.window - 1) / 2);
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(j) - h;
      acc += w[j] * x[detail::mirror_index(k, n)];
    }
    out[i] = acc;
  }
  return out;
}

}  // namespace affuse
