#pragma once

// Test-side reference computations. Deliberately written against the raw math, not the
// library helpers, so that the library is checked against something independent.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "bremen/tensor.hpp"

namespace oracle {

using bremen::Matrix;
using bremen::MlpParams;
using bremen::Vector;

/// Plain loop forward pass with std::tanh.
inline Matrix forward(const MlpParams& p, const Matrix& x) {
  Matrix cur = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    Matrix next(cur.rows(), layer.weight.cols());
    for (Eigen::Index i = 0; i < cur.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        double z = layer.bias[j];
        for (Eigen::Index k = 0; k < cur.cols(); ++k) z += cur(i, k) * layer.weight(k, j);
        next(i, j) = l + 1 < p.layers.size() ? std::tanh(z) : z;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

/// Central difference of a scalar function of a flat vector along each coordinate.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Max coordinate-wise relative error with an absolute floor for tiny entries.
inline double rel_err(const Vector& a, const Vector& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// GAE by explicit double sum over future TD residuals, evaluated back to front so the
/// floating-point order equals the textbook recursion A_t = d_t + (g l) A_{t+1}.
inline Vector gae(const std::vector<double>& r, const std::vector<double>& v, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) delta[t] = r[t] + gamma * v[t + 1] - v[t];
  Vector out(static_cast<Eigen::Index>(n));
  double next = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    next = delta[k] + (gamma * lambda) * next;
    out[static_cast<Eigen::Index>(k)] = next;
  }
  return out;
}

}  // namespace oracle
