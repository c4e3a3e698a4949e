#include "thermoflux/schur_weyl.hpp"
#include "thermoflux/random.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace thermoflux;

namespace {

// Partitions of n with at most d parts, by brute force over non-increasing
// sequences.
std::set<YoungDiagram> partitions_brute(int n, int d) {
  std::set<YoungDiagram> out;
  std::vector<int> cur(d, 0);
  auto rec = [&](auto&& self, int pos, int rem, int cap) -> void {
    if (pos == d) {
      if (rem == 0) {
        YoungDiagram y;
        for (int v : cur)
          if (v > 0) y.push_back(v);
        out.insert(y);
      }
      return;
    }
    for (int v = 0; v <= std::min(rem, cap); ++v) {
      cur[pos] = v;
      self(self, pos + 1, rem - v, v);
    }
  };
  rec(rec, 0, n, n);
  return out;
}

std::uint64_t count_ssyt(const YoungDiagram& lambda, int d) {
  // Semistandard tableaux with entries 1..d, filled cell by cell.
  std::vector<std::vector<int>> t(lambda.size());
  for (std::size_t r = 0; r < lambda.size(); ++r) t[r].assign(lambda[r], 0);
  std::vector<std::pair<int, int>> cells;
  for (std::size_t r = 0; r < lambda.size(); ++r)
    for (int c = 0; c < lambda[r]; ++c) cells.push_back({static_cast<int>(r), c});
  std::uint64_t count = 0;
  auto rec = [&](auto&& self, std::size_t k) -> void {
    if (k == cells.size()) {
      ++count;
      return;
    }
    auto [r, c] = cells[k];
    for (int v = 1; v <= d; ++v) {
      if (c > 0 && t[r][c - 1] > v) continue;
      if (r > 0 && t[r - 1][c] >= v) continue;
      t[r][c] = v;
      self(self, k + 1);
    }
  };
  rec(rec, 0);
  return count;
}

}  // namespace

TEST(YoungDiagrams, SmallCases) {
  EXPECT_EQ(enumerate_young_diagrams(3, 2), (std::vector<YoungDiagram>{{3}, {2, 1}}));
  EXPECT_EQ(enumerate_young_diagrams(1, 5), (std::vector<YoungDiagram>{{1}}));
  EXPECT_EQ(enumerate_young_diagrams(4, 2), (std::vector<YoungDiagram>{{4}, {3, 1}, {2, 2}}));
}

TEST(YoungDiagrams, MatchesBruteForce) {
  for (int n = 1; n <= 7; ++n)
    for (int d = 1; d <= 4; ++d) {
      auto got = enumerate_young_diagrams(n, d);
      std::set<YoungDiagram> s(got.begin(), got.end());
      EXPECT_EQ(s, partitions_brute(n, d)) << n << "," << d;
      for (const auto& y : got) {
        EXPECT_LE(static_cast<int>(y.size()), d);
        EXPECT_TRUE(std::is_sorted(y.rbegin(), y.rend()));
      }
    }
}

TEST(IrrepDimensions, ListedQubitValues) {
  auto a = irrep_dimensions({3}, 2), b = irrep_dimensions({2, 1}, 2);
  EXPECT_EQ(a.n_lambda, 4u);
  EXPECT_EQ(a.m_lambda, 1u);
  EXPECT_EQ(b.n_lambda, 2u);
  EXPECT_EQ(b.m_lambda, 2u);
  for (int d = 1; d <= 5; ++d) {
    auto c = irrep_dimensions({1}, d);
    EXPECT_EQ(c.n_lambda, static_cast<std::uint64_t>(d));
    EXPECT_EQ(c.m_lambda, 1u);
  }
}

TEST(IrrepDimensions, WeylDimensionCountsSemistandardTableaux) {
  for (int n = 1; n <= 5; ++n)
    for (int d = 1; d <= 3; ++d)
      for (const auto& y : enumerate_young_diagrams(n, d)) EXPECT_EQ(irrep_dimensions(y, d).n_lambda, count_ssyt(y, d));
}

TEST(IrrepDimensions, HookLengthCountsStandardTableaux) {
  for (int n = 1; n <= 6; ++n)
    for (const auto& y : enumerate_young_diagrams(n, n))
      EXPECT_EQ(irrep_dimensions(y, n).m_lambda, standard_tableaux(y).size());
}

TEST(IrrepDimensions, DimensionsAddUp) {
  for (int n = 1; n <= 6; ++n)
    for (int d = 1; d <= 4; ++d) {
      std::uint64_t s = 0;
      for (const auto& y : enumerate_young_diagrams(n, d)) {
        auto k = irrep_dimensions(y, d);
        s += k.n_lambda * k.m_lambda;
      }
      EXPECT_EQ(s, ipow(d, n));
    }
}

TEST(PermutationOperator, Conventions) {
  EXPECT_LT(max_abs(permutation_operator({0, 1, 2}, 3, 2) - Mat::Identity(8, 8)), 1e-15);
  Mat swap = Mat::Zero(4, 4);
  swap(0, 0) = swap(3, 3) = swap(1, 2) = swap(2, 1) = 1.0;
  EXPECT_LT(max_abs(permutation_operator({1, 0}, 2, 2) - swap), 1e-15);
  // Factor j moves to position pi[j]: the 1 in the last factor of |001>
  // moves to the first factor.
  Mat p = permutation_operator({1, 2, 0}, 3, 2);
  Vec e = Vec::Zero(8);
  e(1) = 1.0;
  Vec out = p * e;
  EXPECT_NEAR(out(4).real(), 1.0, 1e-15);
}

TEST(SchurBasis, ThreeQubitVectors) {
  auto basis = build_schur_basis(3, 2);
  ASSERT_EQ(basis.blocks.size(), 2u);
  const auto& sym = basis.blocks[0];
  const auto& mixed = basis.blocks[1];
  EXPECT_EQ(sym.lambda, (YoungDiagram{3}));
  EXPECT_EQ(mixed.lambda, (YoungDiagram{2, 1}));
  const double r3 = 1.0 / std::sqrt(3.0), r2 = 1.0 / std::sqrt(2.0), r6 = 1.0 / std::sqrt(6.0);
  // Symmetric block, Weyl index = number of excitations.
  std::vector<std::vector<double>> v{{1, 0, 0, 0, 0, 0, 0, 0},
                                     {0, r3, r3, 0, r3, 0, 0, 0},
                                     {0, 0, 0, r3, 0, r3, r3, 0},
                                     {0, 0, 0, 0, 0, 0, 0, 1}};
  for (std::size_t i = 0; i < 4; ++i)
    for (int x = 0; x < 8; ++x) EXPECT_NEAR(sym.vectors(x, i), v[i][x], 1e-12);
  // Mixed block: the span of each energy sector must equal span{u1,u3} and
  // span{u2,u4}.
  Vec u1 = Vec::Zero(8), u2 = Vec::Zero(8), u3 = Vec::Zero(8), u4 = Vec::Zero(8);
  u1(4) = r2, u1(2) = -r2;
  u2(5) = r2, u2(3) = -r2;
  u3(1) = 2 * r6, u3(2) = -r6, u3(4) = -r6;
  u4(6) = 2 * r6, u4(5) = -r6, u4(3) = -r6;
  Mat p1 = pure_state(u1) + pure_state(u3), p2 = pure_state(u2) + pure_state(u4);
  Mat q1 = Mat::Zero(8, 8), q2 = Mat::Zero(8, 8);
  for (std::size_t c = 0; c < mixed.m_lambda; ++c) {
    q1 += pure_state(mixed.weyl_vector(0, c));
    q2 += pure_state(mixed.weyl_vector(1, c));
  }
  EXPECT_LT(max_abs(p1 - q1), 1e-12);
  EXPECT_LT(max_abs(p2 - q2), 1e-12);
}

TEST(SchurBasis, FirstNonzeroAmplitudePositive) {
  auto basis = build_schur_basis(4, 2);
  for (const auto& b : basis.blocks)
    for (Eigen::Index c = 0; c < b.vectors.cols(); ++c) {
      for (Eigen::Index r = 0; r < b.vectors.rows(); ++r)
        if (std::abs(b.vectors(r, c)) > 1e-12) {
          EXPECT_GT(b.vectors(r, c), 0.0);
          break;
        }
    }
}

TEST(SchurBasis, UnitaryAndBlockDiagonalisesPermutations) {
  for (auto [n, d] : std::vector<std::pair<int, int>>{{2, 2}, {3, 2}, {4, 2}, {3, 3}, {5, 2}}) {
    auto basis = build_schur_basis(n, d);
    Mat c = basis.change_of_basis();
    const auto dim = static_cast<Eigen::Index>(basis.dim());
    EXPECT_LT(max_abs(c.adjoint() * c - Mat::Identity(dim, dim)), 1e-10);
    // Every transposition acts as I_{n_lambda} ⊗ u(pi) inside each block.
    for (int i = 0; i + 1 < n; ++i) {
      Permutation pi(n);
      for (int j = 0; j < n; ++j) pi[j] = j;
      std::swap(pi[i], pi[i + 1]);
      Mat b = c.adjoint() * permutation_operator(pi, n, d) * c;
      Eigen::Index off = 0;
      Mat rebuilt = Mat::Zero(dim, dim);
      for (const auto& blk : basis.blocks) {
        const Eigen::Index nl = blk.n_lambda, m = blk.m_lambda;
        Mat u = b.block(off, off, m, m);
        rebuilt.block(off, off, nl * m, nl * m) = kron(Mat::Identity(nl, nl), u);
        off += nl * m;
      }
      EXPECT_LT(max_abs(rebuilt - b), 1e-9) << n << "," << d;
    }
  }
}

TEST(SchurBasis, WeylVectorsHaveDefiniteType) {
  auto basis = build_schur_basis(4, 3);
  for (const auto& b : basis.blocks)
    for (std::size_t i = 0; i < b.n_lambda; ++i)
      for (std::size_t j = 0; j < b.m_lambda; ++j) {
        Vec v = b.weyl_vector(i, j);
        for (Eigen::Index x = 0; x < v.size(); ++x) {
          if (std::abs(v(x)) < 1e-12) continue;
          auto s = index_digits(static_cast<std::size_t>(x), 4, 3);
          std::vector<int> f(3, 0);
          for (int q : s) ++f[q];
          EXPECT_EQ(f, b.weights[i]);
        }
      }
}

TEST(SchurBasis, SingleCopyIsIdentity) {
  auto basis = build_schur_basis(1, 3);
  ASSERT_EQ(basis.blocks.size(), 1u);
  EXPECT_LT(max_abs(basis.change_of_basis() - Mat::Identity(3, 3)), 1e-15);
}

TEST(Decompose, IdentityAndThermal) {
  auto basis = build_schur_basis(3, 2);
  for (const auto& part : decompose_permutation_invariant(Mat::Identity(8, 8), basis))
    EXPECT_LT(max_abs(part.a_lambda - Mat::Identity(part.a_lambda.rows(), part.a_lambda.cols())), 1e-12);
  ThermalContext ctx({Rational(0), Rational(1)}, 1.0);
  Mat t = thermal_state(ctx);
  auto parts = decompose_permutation_invariant(tensor_power(t, 3), basis);
  double t0 = t(0, 0).real(), t1 = t(1, 1).real();
  for (std::size_t b = 0; b < parts.size(); ++b) {
    auto e = energy_labels(basis.blocks[b], ctx);
    for (Eigen::Index i = 0; i < parts[b].a_lambda.rows(); ++i) {
      double k = to_double(e[i]);
      EXPECT_NEAR(parts[b].a_lambda(i, i).real(), std::pow(t0, 3 - k) * std::pow(t1, k), 1e-12);
    }
  }
}

TEST(Decompose, PlusStatePower) {
  auto basis = build_schur_basis(3, 2);
  Vec v(2);
  v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  auto parts = decompose_permutation_invariant(tensor_power(pure_state(v), 3), basis);
  // |+>^{⊗3} is symmetric: rank one in (3), zero in (2,1).
  EXPECT_NEAR(parts[0].a_lambda.trace().real(), 1.0, 1e-12);
  EXPECT_LT(max_abs(parts[1].a_lambda), 1e-12);
  Rng rng = stream(4);
  Mat r = random_density_matrix(rng, 2);
  auto mixed = decompose_permutation_invariant(tensor_power(r, 3), basis);
  EXPECT_EQ(mixed[1].a_lambda.rows(), 2);
  EXPECT_GT(mixed[1].a_lambda.trace().real(), 1e-6);
}

TEST(Decompose, RejectsNonInvariant) {
  auto basis = build_schur_basis(2, 2);
  Mat a = diagonal_state({0.1, 0.2, 0.3, 0.4});
  EXPECT_THROW(decompose_permutation_invariant(a, basis), ValidationError);
}
