#include "brwfade/quadrature.hpp"

#include <algorithm>
#include <limits>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "brwfade/errors.hpp"

namespace brwfade::quad {

Integral gauss_kronrod(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  if (!(b > a)) return {};
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 12, rel_tol, &error);
  return {value, error};
}

Integral piecewise(const std::function<double(double)>& f, const std::vector<double>& breakpoints,
                   double rel_tol) {
  Integral total;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    const Integral part = gauss_kronrod(f, breakpoints[i], breakpoints[i + 1], rel_tol);
    total.value += part.value;
    total.error += part.error;
  }
  return total;
}

std::vector<double> geometric_breaks(double a, double b, double first_width, double ratio) {
  if (!(first_width > 0.0) || !(ratio > 1.0)) throw InvalidArgument("geometric_breaks: bad spacing");
  std::vector<double> out{a};
  double width = first_width;
  double at = a;
  while (at + width < b) {
    at += width;
    out.push_back(at);
    width *= ratio;
  }
  if (b > a) out.push_back(b);
  return out;
}

Integral half_infinite(const std::function<double(double)>& f, double a, double rel_tol) {
  boost::math::quadrature::exp_sinh<double> integrator;
  double error = 0.0;
  double l1 = 0.0;
  const double value = integrator.integrate(
      [&](double t) { return f(t); }, a, std::numeric_limits<double>::infinity(), rel_tol, &error, &l1);
  return {value, error};
}

}  // namespace brwfade::quad
