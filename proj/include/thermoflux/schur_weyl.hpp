#pragma once

// Schur-Weyl decomposition of (C^d)^{⊗n}.
//
// The isotypic components are split with the Jucys-Murphy elements
// X_k = sum_{i<k} (i k): their joint eigenvectors inside a weight space carry
// the content vector of a standard tableau T, and the joint eigenspace for T
// is one copy of the Weyl module W_lambda. Copies for different tableaux are
// tied together by the intertwiners P_{T'} V_{s_i}, which keeps the
// multiplicity structure rho_lambda ⊗ I exact.

#include "thermoflux/qmat.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>
#include <vector>

namespace thermoflux {

using YoungDiagram = std::vector<int>;
using Tableau = std::vector<std::vector<int>>;  // entries 1..n, rows top to bottom
using Permutation = std::vector<int>;            // 0-based images

inline std::string diagram_to_string(const YoungDiagram& l) {
  std::string s = "(";
  for (std::size_t i = 0; i < l.size(); ++i) s += (i ? "," : "") + std::to_string(l[i]);
  return s + ")";
}

// All partitions of n with at most d rows, in descending lexicographic order.
inline std::vector<YoungDiagram> enumerate_young_diagrams(int n, int d) {
  if (n < 1 || d < 1) throw ValidationError("enumerate_young_diagrams: need n>=1, d>=1");
  std::vector<YoungDiagram> out;
  YoungDiagram cur;
  auto rec = [&](auto&& self, int remaining, int max_part) -> void {
    if (remaining == 0) {
      out.push_back(cur);
      return;
    }
    if (static_cast<int>(cur.size()) == d) return;
    for (int p = std::min(remaining, max_part); p >= 1; --p) {
      cur.push_back(p);
      self(self, remaining - p, p);
      cur.pop_back();
    }
  };
  rec(rec, n, n);
  return out;
}

struct IrrepDims {
  std::uint64_t n_lambda;  // Weyl module dimension
  std::uint64_t m_lambda;  // symmetric-group irrep dimension
};

inline IrrepDims irrep_dimensions(const YoungDiagram& lambda, int d) {
  using boost::multiprecision::cpp_int;
  if (static_cast<int>(lambda.size()) > d) throw ValidationError("diagram deeper than d");
  std::vector<long> l(d, 0);
  long n = 0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    l[i] = lambda[i];
    n += lambda[i];
  }
  cpp_int num = 1, den = 1;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      num *= (l[i] - l[j] + j - i);
      den *= (j - i);
    }
  cpp_int hooks = 1, fact = 1;
  for (long i = 2; i <= n; ++i) fact *= i;
  for (std::size_t r = 0; r < lambda.size(); ++r)
    for (int c = 0; c < lambda[r]; ++c) {
      long arm = lambda[r] - c - 1, leg = 0;
      for (std::size_t rr = r + 1; rr < lambda.size() && lambda[rr] > c; ++rr) ++leg;
      hooks *= (arm + leg + 1);
    }
  return {static_cast<std::uint64_t>(num / den), static_cast<std::uint64_t>(fact / hooks)};
}

inline std::vector<int> tableau_word(const Tableau& t) {
  std::vector<int> w;
  for (const auto& row : t) w.insert(w.end(), row.begin(), row.end());
  return w;
}

// Standard tableaux ordered by their row-reading word.
inline std::vector<Tableau> standard_tableaux(const YoungDiagram& lambda) {
  int n = 0;
  for (int r : lambda) n += r;
  std::vector<Tableau> out;
  Tableau t(lambda.size());
  auto rec = [&](auto&& self, int next) -> void {
    if (next > n) {
      out.push_back(t);
      return;
    }
    for (std::size_t r = 0; r < lambda.size(); ++r) {
      int c = static_cast<int>(t[r].size());
      if (c >= lambda[r]) continue;
      if (r > 0 && static_cast<int>(t[r - 1].size()) <= c) continue;
      t[r].push_back(next);
      self(self, next + 1);
      t[r].pop_back();
    }
  };
  rec(rec, 1);
  std::sort(out.begin(), out.end(),
            [](const Tableau& a, const Tableau& b) { return tableau_word(a) < tableau_word(b); });
  return out;
}

// content[k] = column - row of the box holding entry k+1.
inline std::vector<int> tableau_contents(const Tableau& t) {
  int n = 0;
  for (const auto& row : t) n += static_cast<int>(row.size());
  std::vector<int> c(n);
  for (std::size_t r = 0; r < t.size(); ++r)
    for (std::size_t col = 0; col < t[r].size(); ++col) c[t[r][col] - 1] = static_cast<int>(col) - static_cast<int>(r);
  return c;
}

// Inverse of tableau_contents; throws when the sequence is not a valid
// growth of a standard tableau.
inline Tableau tableau_from_contents(const std::vector<int>& contents) {
  Tableau t;
  for (std::size_t k = 0; k < contents.size(); ++k) {
    bool placed = false;
    for (std::size_t r = 0; r <= t.size() && !placed; ++r) {
      int col = r < t.size() ? static_cast<int>(t[r].size()) : 0;
      bool addable = (r == 0) || static_cast<int>(t[r - 1].size()) > col;
      if (addable && col - static_cast<int>(r) == contents[k]) {
        if (r == t.size()) t.emplace_back();
        t[r].push_back(static_cast<int>(k) + 1);
        placed = true;
      }
    }
    if (!placed) throw std::runtime_error("content vector does not describe a standard tableau");
  }
  return t;
}

inline YoungDiagram tableau_shape(const Tableau& t) {
  YoungDiagram s;
  for (const auto& row : t) s.push_back(static_cast<int>(row.size()));
  return s;
}

// Digits of a basis index; position 0 is the most significant tensor factor.
inline std::vector<int> index_digits(std::size_t idx, int n, int d) {
  std::vector<int> s(n);
  for (int j = n - 1; j >= 0; --j) {
    s[j] = static_cast<int>(idx % d);
    idx /= d;
  }
  return s;
}

inline std::size_t digits_index(const std::vector<int>& s, int d) {
  std::size_t idx = 0;
  for (int v : s) idx = idx * d + v;
  return idx;
}

// V_pi moves the tensor factor at position j to position pi[j].
inline Mat permutation_operator(const Permutation& pi, int n, int d) {
  if (static_cast<int>(pi.size()) != n) throw ValidationError("permutation size mismatch");
  std::vector<int> seen(n, 0);
  for (int v : pi) {
    if (v < 0 || v >= n || seen[v]++) throw ValidationError("not a permutation");
  }
  std::size_t dim = ipow(d, n);
  check_dim(dim, "permutation_operator");
  Mat p = Mat::Zero(dim, dim);
  for (std::size_t idx = 0; idx < dim; ++idx) {
    auto s = index_digits(idx, n, d);
    std::vector<int> out(n);
    for (int j = 0; j < n; ++j) out[pi[j]] = s[j];
    p(digits_index(out, d), idx) = 1.0;
  }
  return p;
}

struct SchurBlock {
  YoungDiagram lambda;
  std::size_t n_lambda = 0;
  std::size_t m_lambda = 0;
  std::vector<Tableau> tableaux;          // one per multiplicity copy
  std::vector<std::vector<int>> weights;  // type of Weyl basis vector i
  RMat vectors;                           // column i*m_lambda + j: Weyl vector i in copy j

  Vec weyl_vector(std::size_t i, std::size_t copy = 0) const {
    return vectors.col(i * m_lambda + copy).cast<cplx>();
  }
};

struct SchurBasis {
  int n = 0;
  int d = 0;
  std::vector<SchurBlock> blocks;

  std::size_t dim() const { return ipow(d, n); }

  // Columns in block order, each block laid out as Weyl index major.
  Mat change_of_basis() const {
    Mat c(dim(), dim());
    Eigen::Index col = 0;
    for (const auto& b : blocks) {
      c.middleCols(col, b.vectors.cols()) = b.vectors.cast<cplx>();
      col += b.vectors.cols();
    }
    return c;
  }
};

inline std::vector<Rational> energy_labels(const SchurBlock& b, const ThermalContext& ctx) {
  std::vector<Rational> e;
  for (const auto& f : b.weights) {
    Rational s(0);
    for (std::size_t c = 0; c < f.size(); ++c) s += ctx.levels()[c] * static_cast<std::int64_t>(f[c]);
    e.push_back(s);
  }
  return e;
}

namespace detail {

struct WeightSpace {
  std::vector<int> type;
  std::vector<std::size_t> strings;  // global indices, ascending
};

inline RMat transposition_on(const WeightSpace& ws, const std::vector<long>& local, int a, int b, int n,
                             int d) {
  RMat m = RMat::Zero(ws.strings.size(), ws.strings.size());
  for (std::size_t col = 0; col < ws.strings.size(); ++col) {
    auto s = index_digits(ws.strings[col], n, d);
    std::swap(s[a], s[b]);
    m(local[digits_index(s, d)], col) += 1.0;
  }
  return m;
}

// Joint eigenspaces of the Jucys-Murphy elements on one weight space, keyed
// by content vector.
inline std::map<std::vector<int>, RMat> jm_split(const WeightSpace& ws, const std::vector<long>& local, int n,
                                                 int d) {
  std::vector<std::pair<std::vector<int>, RMat>> parts{{{0}, RMat::Identity(ws.strings.size(), ws.strings.size())}};
  for (int k = 1; k < n; ++k) {
    RMat xk = RMat::Zero(ws.strings.size(), ws.strings.size());
    for (int i = 0; i < k; ++i) xk += transposition_on(ws, local, i, k, n, d);
    std::vector<std::pair<std::vector<int>, RMat>> next;
    for (auto& [content, q] : parts) {
      RMat m = q.transpose() * xk * q;
      Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (m + m.transpose()));
      std::map<int, std::vector<Eigen::Index>> groups;
      for (Eigen::Index e = 0; e < es.eigenvalues().size(); ++e) {
        double ev = es.eigenvalues()(e);
        int r = static_cast<int>(std::lround(ev));
        if (std::abs(ev - r) > 1e-6) throw std::runtime_error("Jucys-Murphy eigenvalue is not an integer");
        groups[r].push_back(e);
      }
      for (auto& [val, idxs] : groups) {
        RMat sub(q.rows(), idxs.size());
        for (std::size_t t = 0; t < idxs.size(); ++t) sub.col(t) = q * es.eigenvectors().col(idxs[t]);
        auto c2 = content;
        c2.push_back(val);
        next.emplace_back(std::move(c2), std::move(sub));
      }
    }
    parts = std::move(next);
  }
  std::map<std::vector<int>, RMat> out;
  for (auto& [c, q] : parts) out.emplace(c, std::move(q));
  return out;
}

inline void fix_sign(Eigen::Ref<RVec> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0) v = -v;
      return;
    }
}

inline double first_nonzero(const RVec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > 1e-12) return v(i);
  return 0.0;
}

}  // namespace detail

inline SchurBasis build_schur_basis(int n, int d) {
  if (n < 1 || d < 1) throw ValidationError("build_schur_basis: need n>=1, d>=1");
  std::size_t dim = ipow(d, n);
  check_dim(dim, "build_schur_basis");

  // Weight spaces, ordered by their smallest basis string.
  std::map<std::vector<int>, std::size_t> type_pos;
  std::vector<detail::WeightSpace> spaces;
  std::vector<long> local(dim);
  for (std::size_t idx = 0; idx < dim; ++idx) {
    auto s = index_digits(idx, n, d);
    std::vector<int> f(d, 0);
    for (int v : s) ++f[v];
    auto it = type_pos.find(f);
    if (it == type_pos.end()) {
      it = type_pos.emplace(f, spaces.size()).first;
      spaces.push_back({f, {}});
    }
    local[idx] = static_cast<long>(spaces[it->second].strings.size());
    spaces[it->second].strings.push_back(idx);
  }

  std::vector<std::map<std::vector<int>, RMat>> split(spaces.size());
  for (std::size_t w = 0; w < spaces.size(); ++w) split[w] = detail::jm_split(spaces[w], local, n, d);

  auto embed = [&](std::size_t w, const RVec& loc) {
    RVec g = RVec::Zero(dim);
    for (std::size_t t = 0; t < spaces[w].strings.size(); ++t) g(spaces[w].strings[t]) = loc(t);
    return g;
  };

  SchurBasis basis;
  basis.n = n;
  basis.d = d;
  for (const auto& lambda : enumerate_young_diagrams(n, d)) {
    SchurBlock blk;
    blk.lambda = lambda;
    auto dims = irrep_dimensions(lambda, d);
    blk.n_lambda = dims.n_lambda;
    blk.m_lambda = dims.m_lambda;
    blk.tableaux = standard_tableaux(lambda);
    if (blk.tableaux.size() != blk.m_lambda) throw std::logic_error("tableau count disagrees with hook formula");
    const std::size_t m = blk.m_lambda;

    // Copy 0: Gram-Schmidt of projected computational vectors, weight by weight.
    std::vector<std::vector<int>> contents;
    for (const auto& t : blk.tableaux) contents.push_back(tableau_contents(t));
    std::vector<std::pair<std::size_t, RVec>> copy0;  // (weight space, local vector)
    for (std::size_t w = 0; w < spaces.size(); ++w) {
      auto it = split[w].find(contents[0]);
      if (it == split[w].end()) continue;
      const RMat& q = it->second;
      std::vector<RVec> found;
      for (std::size_t t = 0; t < spaces[w].strings.size() && found.size() < static_cast<std::size_t>(q.cols()); ++t) {
        RVec v = q * q.row(t).transpose();
        for (const auto& u : found) v -= u.dot(v) * u;
        double nv = v.norm();
        if (nv < 1e-8) continue;
        v /= nv;
        detail::fix_sign(v);
        found.push_back(v);
      }
      for (auto& v : found) {
        copy0.emplace_back(w, v);
        blk.weights.push_back(spaces[w].type);
      }
    }
    if (copy0.size() != blk.n_lambda) throw std::logic_error("Weyl basis size disagrees with dimension formula");

    // Remaining copies through adjacent transpositions s_i = (i, i+1).
    std::vector<std::vector<RVec>> copies(m);  // local vectors per copy, parallel to copy0
    for (const auto& [w, v] : copy0) copies[0].push_back(v);
    std::vector<bool> done(m, false);
    done[0] = true;
    std::deque<std::size_t> queue{0};
    std::map<std::vector<int>, std::size_t> word_pos;
    for (std::size_t j = 0; j < m; ++j) word_pos[tableau_word(blk.tableaux[j])] = j;
    while (!queue.empty()) {
      std::size_t j = queue.front();
      queue.pop_front();
      for (int i = 1; i < n; ++i) {
        // Swap entries i and i+1 in tableau j.
        Tableau t2 = blk.tableaux[j];
        for (auto& row : t2)
          for (auto& e : row) e = (e == i) ? i + 1 : (e == i + 1 ? i : e);
        auto wp = word_pos.find(tableau_word(t2));
        if (wp == word_pos.end() || done[wp->second]) continue;
        bool standard = true;
        for (std::size_t r = 0; r < t2.size() && standard; ++r)
          for (std::size_t c = 0; c < t2[r].size() && standard; ++c) {
            if (c + 1 < t2[r].size() && t2[r][c] > t2[r][c + 1]) standard = false;
            if (r + 1 < t2.size() && c < t2[r + 1].size() && t2[r][c] > t2[r + 1][c]) standard = false;
          }
        if (!standard) continue;
        std::size_t j2 = wp->second;
        double norm_ref = -1.0;
        for (std::size_t a = 0; a < copy0.size(); ++a) {
          std::size_t w = copy0[a].first;
          RMat sw = detail::transposition_on(spaces[w], local, i - 1, i, n, d);
          const RMat& q = split[w].at(contents[j2]);
          RVec v = q * (q.transpose() * (sw * copies[j][a]));
          double nv = v.norm();
          if (norm_ref < 0) norm_ref = nv;
          if (nv < 1e-8 || std::abs(nv - norm_ref) > 1e-8) throw std::logic_error("intertwiner is not a scaled isometry");
          copies[j2].push_back(v / nv);
        }
        done[j2] = true;
        queue.push_back(j2);
      }
    }
    for (std::size_t j = 0; j < m; ++j)
      if (!done[j]) throw std::logic_error("tableau graph not connected");

    blk.vectors = RMat::Zero(dim, blk.n_lambda * m);
    for (std::size_t j = 0; j < m; ++j) {
      // Global sign per copy: first vector's leading amplitude positive.
      RVec first = embed(copy0[0].first, copies[j][0]);
      double sgn = detail::first_nonzero(first) < 0 ? -1.0 : 1.0;
      for (std::size_t a = 0; a < copy0.size(); ++a)
        blk.vectors.col(a * m + j) = sgn * embed(copy0[a].first, copies[j][a]);
    }
    basis.blocks.push_back(std::move(blk));
  }
  return basis;
}

struct BlockPart {
  YoungDiagram lambda;
  Mat a_lambda;
};

// Per-block matrices A_lambda of a permutation-invariant operator, with
// A = ⊕ A_lambda ⊗ I_{m_lambda} in the Schur basis.
inline std::vector<BlockPart> decompose_permutation_invariant(const Mat& a, const SchurBasis& basis) {
  if (static_cast<std::size_t>(a.rows()) != basis.dim() || a.rows() != a.cols())
    throw ValidationError("decompose: dimension mismatch");
  for (int i = 0; i + 1 < basis.n; ++i) {
    Permutation pi(basis.n);
    for (int j = 0; j < basis.n; ++j) pi[j] = j;
    std::swap(pi[i], pi[i + 1]);
    Mat v = permutation_operator(pi, basis.n, basis.d);
    if (max_abs(v * a * v.adjoint() - a) > 1e-9) throw ValidationError("operator is not permutation invariant");
  }
  Mat c = basis.change_of_basis();
  Mat b = c.adjoint() * a * c;
  std::vector<BlockPart> out;
  Mat rebuilt = Mat::Zero(b.rows(), b.cols());
  Eigen::Index off = 0;
  for (const auto& blk : basis.blocks) {
    const Eigen::Index nl = blk.n_lambda, m = blk.m_lambda;
    Mat al(nl, nl);
    for (Eigen::Index i = 0; i < nl; ++i)
      for (Eigen::Index k = 0; k < nl; ++k) al(i, k) = b(off + i * m, off + k * m);
    rebuilt.block(off, off, nl * m, nl * m) = kron(al, Mat::Identity(m, m));
    out.push_back({blk.lambda, al});
    off += nl * m;
  }
  if (max_abs(rebuilt - b) > 1e-9) throw ValidationError("operator lacks the Schur block structure");
  return out;
}

inline nlohmann::json schur_basis_to_json(const SchurBasis& basis, const ThermalContext* ctx = nullptr) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : basis.blocks) {
    nlohmann::json vecs = nlohmann::json::array();
    std::vector<Rational> e;
    if (ctx) e = energy_labels(b, *ctx);
    for (std::size_t i = 0; i < b.n_lambda; ++i) {
      nlohmann::json amps = nlohmann::json::array();
      for (Eigen::Index r = 0; r < b.vectors.rows(); ++r) amps.push_back(b.vectors(r, i * b.m_lambda));
      nlohmann::json v{{"amplitudes", amps}, {"weight", b.weights[i]}};
      if (ctx) {
        v["energy"] = to_double(e[i]);
        v["energy_exact"] = std::to_string(e[i].numerator()) + "/" + std::to_string(e[i].denominator());
      }
      vecs.push_back(v);
    }
    blocks.push_back({{"lambda", b.lambda}, {"n_lambda", b.n_lambda}, {"m_lambda", b.m_lambda}, {"vectors", vecs}});
  }
  return {{"n", basis.n}, {"d", basis.d}, {"blocks", blocks}};
}

}  // namespace thermoflux
