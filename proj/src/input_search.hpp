#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "onestep/dynamics.hpp"

namespace onestep::detail {

// Tensor lattice of uniformly spaced input levels, endpoints included.
class InputLattice {
 public:
  InputLattice(const InputBox& box, const std::vector<int>& levels) : m_(box.dim()) {
    std::size_t count = 1;
    for (int j = 0; j < m_; ++j) {
      count *= static_cast<std::size_t>(levels[j]);
      spacing_.push_back((box.upper[j] - box.lower[j]) / (levels[j] - 1));
    }
    points_.resize(count * m_);
    norm2_.resize(count);
    for (std::size_t l = 0; l < count; ++l) {
      std::size_t rem = l;
      double s = 0.0;
      for (int j = m_ - 1; j >= 0; --j) {
        const int k = static_cast<int>(rem % levels[j]);
        rem /= levels[j];
        const double v = k == levels[j] - 1 ? box.upper[j] : box.lower[j] + k * spacing_[j];
        points_[l * m_ + j] = v;
        s += v * v;
      }
      norm2_[l] = s;
    }
  }

  std::size_t size() const { return norm2_.size(); }
  std::span<const double> point(std::size_t l) const { return {&points_[l * m_], static_cast<std::size_t>(m_)}; }
  double norm2(std::size_t l) const { return norm2_[l]; }
  const std::vector<double>& spacing() const { return spacing_; }

 private:
  int m_;
  std::vector<double> points_;
  std::vector<double> norm2_;
  std::vector<double> spacing_;
};

// Strictly lower value wins; values equal to within rounding go to the
// smaller input norm.
inline bool better(double v, double norm2, double best, double best_norm2) {
  if (!std::isfinite(best)) return v < best || (v == best && norm2 < best_norm2);
  const double tie = 1e-12 * (1.0 + std::abs(best));
  if (v < best - tie) return true;
  return v <= best + tie && norm2 < best_norm2;
}

// Coordinate-wise golden-section search of f around u within one lattice
// spacing per side. u is overwritten with the best point seen; returns f(u).
template <class F>
double golden_refine(F&& f, const InputBox& box, const std::vector<double>& spacing, std::span<double> u,
                     double fu, int iterations) {
  if (iterations <= 0) return fu;
  constexpr double r = 0.6180339887498949;
  const int m = static_cast<int>(u.size());
  for (int j = 0; j < m; ++j) {
    const double u0 = u[j];
    double a = std::max(box.lower[j], u0 - spacing[j]);
    double b = std::min(box.upper[j], u0 + spacing[j]);
    double best_x = u0, best_f = fu;
    auto probe = [&](double z) {
      u[j] = z;
      const double v = f(std::span<const double>(u.data(), u.size()));
      if (v < best_f) {
        best_f = v;
        best_x = z;
      }
      return v;
    };
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = probe(c), fd = probe(d);
    for (int it = 0; it < iterations; ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - r * (b - a);
        fc = probe(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + r * (b - a);
        fd = probe(d);
      }
    }
    u[j] = best_x;
    fu = best_f;
  }
  return fu;
}

}  // namespace onestep::detail
