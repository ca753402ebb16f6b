#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace actreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// error conditions surfaced to callers; all carry a human-readable message
struct RankDeficient : std::runtime_error {
  explicit RankDeficient(const std::string& m) : std::runtime_error(m) {}
};
struct InvalidInput : std::runtime_error {
  explicit InvalidInput(const std::string& m) : std::runtime_error(m) {}
};
struct InvalidRate : std::runtime_error {
  explicit InvalidRate(const std::string& m) : std::runtime_error(m) {}
};
struct NoConvergence : std::runtime_error {
  explicit NoConvergence(const std::string& m) : std::runtime_error(m) {}
};
struct DegenerateStage : std::runtime_error {
  explicit DegenerateStage(const std::string& m) : std::runtime_error(m) {}
};
struct NumericalFailure : std::runtime_error {
  explicit NumericalFailure(const std::string& m) : std::runtime_error(m) {}
};
struct CalibrationFailed : std::runtime_error {
  explicit CalibrationFailed(const std::string& m) : std::runtime_error(m) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

// |t|^p with fast paths for the common exponents
inline double pow_abs(double t, double p) {
  if (p == 1.0) return std::fabs(t);
  if (p == 2.0) return t * t;
  return std::pow(std::fabs(t), p);
}

// p-th power of the lp norm, sum_i |v_i|^p
inline double lp_pow(const Vector& v, double p) {
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += pow_abs(v[i], p);
  return s;
}

inline double lp_norm(const Vector& v, double p) {
  return std::pow(lp_pow(v, p), 1.0 / p);
}

}  // namespace actreg
