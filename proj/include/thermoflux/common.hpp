#pragma once

#include <boost/rational.hpp>

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace thermoflux {

using Rational = boost::rational<std::int64_t>;

// Input violates a documented precondition.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// rho has weight outside the support of sigma, D = +inf.
struct SupportError : std::domain_error {
  using std::domain_error::domain_error;
};

struct CapExceeded : std::length_error {
  using std::length_error::length_error;
};

inline constexpr std::size_t kDefaultDimCap = 4096;

// Dense dimension cap, overridable through THERMOFLUX_DIM_CAP.
inline std::size_t dim_cap() {
  if (const char* env = std::getenv("THERMOFLUX_DIM_CAP")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return kDefaultDimCap;
}

inline void check_dim(std::size_t dim, const char* what) {
  if (dim > dim_cap())
    throw CapExceeded(std::string(what) + ": dimension " + std::to_string(dim) +
                      " exceeds cap " + std::to_string(dim_cap()));
}

// d^n with overflow guard; returns SIZE_MAX when it does not fit.
inline std::size_t ipow(std::size_t d, std::size_t n) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (d != 0 && r > SIZE_MAX / d) return SIZE_MAX;
    r *= d;
  }
  return r;
}

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

// Accepts "3", "-2", "1/2", or a terminating decimal such as "0.25".
inline Rational parse_rational(const std::string& s) {
  auto fail = [&] { throw ValidationError("not a rational number: '" + s + "'"); };
  if (s.empty()) fail();
  auto slash = s.find('/');
  try {
    if (slash != std::string::npos) {
      std::int64_t num = std::stoll(s.substr(0, slash));
      std::int64_t den = std::stoll(s.substr(slash + 1));
      if (den == 0) fail();
      return Rational(num, den);
    }
    auto dot = s.find('.');
    if (dot == std::string::npos) {
      std::size_t pos = 0;
      std::int64_t v = std::stoll(s, &pos);
      if (pos != s.size()) fail();
      return Rational(v);
    }
    std::string ip = s.substr(0, dot), fp = s.substr(dot + 1);
    if (fp.size() > 15 || fp.find_first_not_of("0123456789") != std::string::npos) fail();
    bool neg = !ip.empty() && ip[0] == '-';
    std::int64_t whole = (ip.empty() || ip == "-" || ip == "+") ? 0 : std::stoll(ip);
    std::int64_t den = 1;
    for (std::size_t i = 0; i < fp.size(); ++i) den *= 10;
    std::int64_t frac = fp.empty() ? 0 : std::stoll(fp);
    std::int64_t num = (whole < 0 ? -whole : whole) * den + frac;
    return Rational(neg ? -num : num, den);
  } catch (const std::logic_error&) {
    fail();
  }
  return {};
}

}  // namespace thermoflux
