#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace adail {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

// Shortest round-trippable decimal form, stable across runs.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

struct RunningStat {
  Vec mean;
  Vec m2;
  long long count = 0;

  void observe(const Vec& x) {
    if (count == 0) {
      mean = Vec::Zero(x.size());
      m2 = Vec::Zero(x.size());
    }
    ++count;
    Vec delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta.cwiseProduct(x - mean);
  }

  Vec stddev(double floor = 1e-6) const {
    if (count < 2) return Vec::Ones(mean.size());
    Vec v = (m2 / static_cast<double>(count)).cwiseSqrt();
    return v.cwiseMax(floor);
  }
};

// Frozen affine input normalization (x - mean) / std.
struct Normalizer {
  Vec mean;
  Vec std;

  static Normalizer identity(int dim) {
    return Normalizer{Vec::Zero(dim), Vec::Ones(dim)};
  }
  Vec apply(const Vec& x) const {
    return (x - mean).cwiseQuotient(std);
  }
  int dim() const { return static_cast<int>(mean.size()); }
};

}  // namespace adail
