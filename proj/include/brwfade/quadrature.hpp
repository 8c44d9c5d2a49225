#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace brwfade::quad {

struct Integral {
  double value = 0.0;
  double error = 0.0;
};

/// Adaptive 15-point Gauss-Kronrod on a finite interval.
Integral gauss_kronrod(const std::function<double(double)>& f, double a, double b,
                       double rel_tol = 1e-10);

/// Integrates over [a, b] split at the given breakpoints (each panel adaptive).
Integral piecewise(const std::function<double(double)>& f, const std::vector<double>& breakpoints,
                   double rel_tol = 1e-10);

/// Geometrically spaced breakpoints a, a+d, a+d*ratio, ... up to b (inclusive).
std::vector<double> geometric_breaks(double a, double b, double first_width, double ratio = 4.0);

/// Integral over [a, +inf) of a function with algebraic or faster decay.
Integral half_infinite(const std::function<double(double)>& f, double a, double rel_tol = 1e-10);

}  // namespace brwfade::quad
