#pragma once

#include <cmath>
#include <span>

namespace cdlab {

/// Neumaier-compensated accumulator.
class KahanSum {
 public:
  KahanSum& operator+=(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double kahan_sum(std::span<const double> xs) noexcept {
  KahanSum acc;
  for (double x : xs) acc += x;
  return acc.value();
}

/// Conjugate exponent p / (p - 1).
inline double conjugate_exponent(double p) noexcept { return p / (p - 1.0); }

}  // namespace cdlab
