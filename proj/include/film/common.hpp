#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace film {

// Malformed or inconsistent input data (bad files, bad indices, rank too low).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical breakdown (divergence, non-finite values) detected at runtime.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double kProbClip = 1e-15;

inline double clip_probability(double p, double eps = kProbClip) {
  if (p < eps) return eps;
  if (p > 1.0 - eps) return 1.0 - eps;
  return p;
}

// Shortest decimal rendering that round-trips a double (17 significant digits).
inline std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

}  // namespace film
