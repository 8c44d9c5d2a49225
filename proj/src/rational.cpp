#include "brwfade/rational.hpp"

#include <cstdlib>
#include <limits>

namespace brwfade {

namespace {

__int128 gcd128(__int128 a, __int128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

}  // namespace

Rational Rational::from_wide(__int128 num, __int128 den) {
  if (den == 0) throw InvalidArgument("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const __int128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  constexpr __int128 lim = std::numeric_limits<std::int64_t>::max();
  if (num > lim || num < -lim || den > lim) throw InvalidArgument("rational overflow");
  Rational r;
  r.num_ = static_cast<std::int64_t>(num);
  r.den_ = static_cast<std::int64_t>(den);
  return r;
}

Rational Rational::parse(const std::string& text) {
  const auto slash = text.find('/');
  char* end = nullptr;
  if (slash == std::string::npos) {
    const long long n = std::strtoll(text.c_str(), &end, 10);
    if (end == text.c_str() || *end != '\0') throw InvalidArgument("bad rational '" + text + "'");
    return Rational(n, 1);
  }
  const std::string lhs = text.substr(0, slash);
  const std::string rhs = text.substr(slash + 1);
  const long long n = std::strtoll(lhs.c_str(), &end, 10);
  if (end == lhs.c_str() || *end != '\0') throw InvalidArgument("bad rational '" + text + "'");
  const long long d = std::strtoll(rhs.c_str(), &end, 10);
  if (end == rhs.c_str() || *end != '\0') throw InvalidArgument("bad rational '" + text + "'");
  return Rational(n, d);
}

}  // namespace brwfade
