#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace frl {

// Flat policy parameter vector; the unit of all aggregation and attack math.
using ParamVector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline ParamVector scaled(std::span<const double> a, double s) {
  ParamVector out(a.begin(), a.end());
  for (double& v : out) v *= s;
  return out;
}

inline ParamVector difference(std::span<const double> a, std::span<const double> b) {
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline ParamVector mean_of(std::span<const ParamVector> vs) {
  if (vs.empty()) throw std::invalid_argument("mean of empty set");
  ParamVector out(vs.front().size(), 0.0);
  for (const auto& v : vs) axpy(1.0, v, out);
  for (double& x : out) x /= static_cast<double>(vs.size());
  return out;
}

}  // namespace frl
