#pragma once

#include "thermoflux/qmat.hpp"

#include <boost/random/discrete_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <cstdint>

namespace thermoflux {

// Boost's engine and distributions give the same stream on every platform,
// unlike the std:: distributions.
using Rng = boost::random::mt19937_64;

// Stream splitting: trial i of a run seeded with s draws from
// Rng(splitmix64(s ^ splitmix64(i + 1))), so results do not depend on the
// order in which trials are scheduled.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline Rng stream(std::uint64_t seed, std::uint64_t index = 0) {
  return Rng(splitmix64(seed ^ splitmix64(index + 1)));
}

inline Vec gaussian_vector(Rng& rng, std::size_t dim) {
  boost::random::normal_distribution<double> nd(0.0, 1.0);
  Vec v(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    double re = nd(rng);
    double im = nd(rng);
    v(i) = cplx(re, im);
  }
  return v;
}

// Haar-random pure state.
inline Vec random_pure_state(Rng& rng, std::size_t dim) {
  Vec v = gaussian_vector(rng, dim);
  return v / v.norm();
}

// Full-rank Hilbert-Schmidt random state, G G^dag / Tr.
inline Mat random_density_matrix(Rng& rng, std::size_t dim) {
  Mat g(dim, dim);
  for (std::size_t c = 0; c < dim; ++c) g.col(c) = gaussian_vector(rng, dim);
  Mat r = g * g.adjoint();
  r /= r.trace().real();
  return 0.5 * (r + r.adjoint());
}

}  // namespace thermoflux
