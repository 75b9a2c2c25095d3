#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rtrl {

using Vec = std::vector<double>;

// Thrown when a simulated state, gradient or parameter update leaves the
// representable range (too large a step size, exploding policy, ...).
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown on invalid configuration; the message names the offending key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double l2_norm(const Vec& v) { return std::sqrt(squared_norm(v)); }

// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(Vec& v, double a) {
  for (double& x : v) x *= a;
}

inline double mean(const Vec& xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Sample standard deviation (n - 1 normalization).
inline double sample_sd(const Vec& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

inline double standard_error(const Vec& xs) {
  return sample_sd(xs) / std::sqrt(static_cast<double>(xs.size()));
}

// Shortest round-trip decimal representation; used for all CSV output so
// that files are byte-stable across reruns.
inline std::string format_double(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

// Trailing moving average over xs[max(0, i - window + 1) .. i].
inline double moving_average_at(const Vec& xs, std::size_t i, std::size_t window) {
  if (i >= xs.size()) throw std::invalid_argument("moving_average_at: index out of range");
  const std::size_t lo = (i + 1 >= window) ? i + 1 - window : 0;
  double s = 0.0;
  for (std::size_t j = lo; j <= i; ++j) s += xs[j];
  return s / static_cast<double>(i - lo + 1);
}

}  // namespace rtrl
