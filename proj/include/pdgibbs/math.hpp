#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace pdgibbs {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double log_sum_exp(std::span<const double> values) {
  double top = kNegInf;
  for (double v : values) top = v > top ? v : top;
  if (top == kNegInf) return kNegInf;
  if (top == std::numeric_limits<double>::infinity()) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// Normalizes log-weights into probabilities, writing into `out`.
inline void softmax(std::span<const double> logw, std::span<double> out) {
  const double z = log_sum_exp(logw);
  for (std::size_t k = 0; k < logw.size(); ++k) out[k] = std::exp(logw[k] - z);
}

inline std::vector<double> softmax(std::span<const double> logw) {
  std::vector<double> out(logw.size());
  softmax(logw, out);
  return out;
}

/// Inverse-CDF draw from unnormalized log-weights with a uniform `u` in [0, 1).
/// Entries at -inf are never selected.
inline std::size_t sample_log_categorical(std::span<const double> logw, double u) {
  double top = kNegInf;
  for (double v : logw) top = v > top ? v : top;
  double total = 0.0;
  for (double v : logw) total += std::exp(v - top);
  double target = u * total;
  std::size_t last = 0;
  for (std::size_t k = 0; k < logw.size(); ++k) {
    if (logw[k] == kNegInf) continue;
    const double w = std::exp(logw[k] - top);
    last = k;
    if (target < w) return k;
    target -= w;
  }
  return last;
}

/// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[best]) best = k;
  return best;
}

}  // namespace pdgibbs
