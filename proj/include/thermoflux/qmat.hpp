#pragma once

#include "thermoflux/common.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

namespace thermoflux {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kHermTol = 1e-10;
inline constexpr double kPsdTol = 1e-9;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kKernelTol = 1e-12;
inline constexpr double kSupportTol = 1e-9;

inline double max_abs(const Mat& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

inline double hermiticity_defect(const Mat& a) { return max_abs(a - a.adjoint()); }

inline double trace_norm_hermitian(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

inline double min_eigenvalue(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Validates the density-operator invariants. With subnormalized=true the trace
// may lie anywhere in (0, 1].
inline void validate_state(const Mat& rho, bool subnormalized = false) {
  if (rho.rows() != rho.cols() || rho.rows() == 0) throw ValidationError("state must be square");
  if (hermiticity_defect(rho) > kHermTol) throw ValidationError("state is not Hermitian");
  if (min_eigenvalue(rho) < -kPsdTol) throw ValidationError("state is not positive semidefinite");
  double tr = rho.trace().real();
  if (subnormalized) {
    if (tr <= 0.0 || tr > 1.0 + kTraceTol) throw ValidationError("subnormalized trace outside (0,1]");
  } else if (std::abs(tr - 1.0) > kTraceTol) {
    throw ValidationError("state trace differs from 1");
  }
}

class ThermalContext {
 public:
  ThermalContext(std::vector<Rational> levels, double beta) : levels_(std::move(levels)), beta_(beta) {
    if (levels_.empty()) throw ValidationError("empty spectrum");
    if (!(beta_ >= 0.0) || !std::isfinite(beta_)) throw ValidationError("beta must be finite and >= 0");
    for (std::size_t i = 1; i < levels_.size(); ++i)
      if (levels_[i] < levels_[i - 1]) throw ValidationError("levels must be non-decreasing");
    // Shift by the ground energy before exponentiating; ln Z keeps the shift.
    e0_ = to_double(levels_.front());
    double s = 0.0;
    for (const auto& e : levels_) s += std::exp(-beta_ * (to_double(e) - e0_));
    log_z_ = std::log(s) - beta_ * e0_;
  }

  std::size_t dim() const { return levels_.size(); }
  double beta() const { return beta_; }
  const std::vector<Rational>& levels() const { return levels_; }
  double level(std::size_t i) const { return to_double(levels_[i]); }
  double log_partition() const { return log_z_; }
  double partition() const { return std::exp(log_z_); }
  double e_max() const { return to_double(levels_.back()); }

  std::vector<double> gibbs_weights() const {
    std::vector<double> w(dim());
    for (std::size_t i = 0; i < dim(); ++i) w[i] = std::exp(-beta_ * level(i) - log_z_);
    return w;
  }

  // Constant of the relative-entropy continuity bound for k copies.
  double continuity_constant(std::size_t k = 1) const {
    return 1.0 + static_cast<double>(k) * (beta_ * e_max() + log_z_) / std::sqrt(2.0);
  }

 private:
  std::vector<Rational> levels_;
  double beta_;
  double e0_ = 0.0;
  double log_z_ = 0.0;
};

// Energy of each computational basis state of n copies, as exact rationals.
inline std::vector<Rational> total_energies(const ThermalContext& ctx, std::size_t n) {
  std::size_t d = ctx.dim();
  std::size_t dim = ipow(d, n);
  check_dim(dim, "total_energies");
  std::vector<Rational> out(dim, Rational(0));
  for (std::size_t idx = 0; idx < dim; ++idx) {
    std::size_t x = idx;
    Rational e(0);
    for (std::size_t j = 0; j < n; ++j) {
      e += ctx.levels()[x % d];
      x /= d;
    }
    out[idx] = e;
  }
  return out;
}

inline Mat hamiltonian(const ThermalContext& ctx, std::size_t n = 1) {
  auto e = total_energies(ctx, n);
  Mat h = Mat::Zero(e.size(), e.size());
  for (std::size_t i = 0; i < e.size(); ++i) h(i, i) = to_double(e[i]);
  return h;
}

inline Mat thermal_state(const ThermalContext& ctx) {
  auto w = ctx.gibbs_weights();
  double s = std::accumulate(w.begin(), w.end(), 0.0);
  Mat t = Mat::Zero(ctx.dim(), ctx.dim());
  for (std::size_t i = 0; i < w.size(); ++i) t(i, i) = w[i] / s;
  return t;
}

struct HermitianFunctionResult {
  RVec values;
  Mat vectors;
};

inline HermitianFunctionResult eigh(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.adjoint()));
  return {es.eigenvalues(), es.eigenvectors()};
}

// sum_i f(lambda_i) |v_i><v_i| for Hermitian a.
template <class F>
Mat hermitian_apply(const Mat& a, F f) {
  auto [w, v] = eigh(a);
  Vec fw(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) fw(i) = f(w(i));
  return v * fw.asDiagonal() * v.adjoint();
}

// Tr[rho ln rho] - Tr[rho ln sigma] without normalization assumptions.
inline double entropic_core(const Mat& rho, const Mat& sigma) {
  if (rho.rows() != sigma.rows() || rho.cols() != sigma.cols())
    throw ValidationError("relative entropy: dimension mismatch");
  auto off_diagonal = [](const Mat& m) { return max_abs(m - Mat(m.diagonal().asDiagonal())); };
  if (off_diagonal(rho) == 0.0 && off_diagonal(sigma) == 0.0) {
    // Commuting diagonal pair: exact, no kernel threshold on sigma.
    double s = 0.0, outside = 0.0;
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      double r = rho(i, i).real(), q = sigma(i, i).real();
      if (r <= 0.0) continue;
      if (q <= 0.0) {
        outside += r;
        continue;
      }
      s += r * (std::log(r) - std::log(q));
    }
    if (outside >= kSupportTol) throw SupportError("rho is not supported within supp(sigma)");
    return s;
  }
  auto [wr, vr] = eigh(rho);
  double s = 0.0;
  for (Eigen::Index i = 0; i < wr.size(); ++i)
    if (wr(i) > kKernelTol) s += wr(i) * std::log(wr(i));
  auto [ws, vs] = eigh(sigma);
  // rho expressed in the eigenbasis of sigma; only the diagonal is needed.
  Mat rs = vs.adjoint() * rho * vs;
  double cross = 0.0, outside = 0.0;
  for (Eigen::Index i = 0; i < ws.size(); ++i) {
    double ri = rs(i, i).real();
    if (ws(i) > kKernelTol)
      cross += ri * std::log(ws(i));
    else
      outside += ri;
  }
  if (outside >= kSupportTol) throw SupportError("rho is not supported within supp(sigma)");
  return s - cross;
}

inline double relative_entropy(const Mat& rho, const Mat& sigma) {
  return std::max(0.0, entropic_core(rho, sigma));
}

inline double lindblad_relative_entropy(const Mat& rho, const Mat& sigma) {
  return entropic_core(rho, sigma) + sigma.trace().real() - rho.trace().real();
}

inline double von_neumann_entropy(const Mat& rho) {
  auto w = eigh(rho).values;
  double s = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w(i) > kKernelTol) s -= w(i) * std::log(w(i));
  return s;
}

// Classical relative entropy in nats; +inf when p is not dominated by q.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ValidationError("kl_divergence: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return INFINITY;
    s += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(0.0, s);
}

inline double fidelity_to_pure(const Mat& rho, const Vec& psi) {
  if (rho.rows() != psi.size()) throw ValidationError("fidelity: dimension mismatch");
  if (std::abs(psi.norm() - 1.0) > 1e-10) throw ValidationError("fidelity: psi not normalized");
  return std::clamp((psi.adjoint() * rho * psi)(0, 0).real(), 0.0, 1.0);
}

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Mat tensor_power(const Mat& rho, std::size_t n) {
  check_dim(ipow(static_cast<std::size_t>(rho.rows()), n), "tensor_power");
  Mat out = Mat::Identity(1, 1);
  for (std::size_t i = 0; i < n; ++i) out = kron(out, rho);
  return out;
}

// Partial trace over every subsystem not listed in keep. Subsystem 0 is the
// most significant tensor factor.
inline Mat partial_trace(const Mat& rho, const std::vector<std::size_t>& dims,
                         const std::vector<std::size_t>& keep) {
  std::size_t total = 1;
  for (auto d : dims) total *= d;
  if (static_cast<std::size_t>(rho.rows()) != total) throw ValidationError("partial_trace: dims mismatch");
  std::vector<bool> kept(dims.size(), false);
  for (auto k : keep) {
    if (k >= dims.size()) throw ValidationError("partial_trace: bad subsystem index");
    kept[k] = true;
  }
  std::size_t kdim = 1, tdim = 1;
  for (std::size_t s = 0; s < dims.size(); ++s) (kept[s] ? kdim : tdim) *= dims[s];
  // Split a full index into (kept index, traced index) in subsystem order.
  std::vector<std::size_t> kidx(total), tidx(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t x = idx, ki = 0, ti = 0, kstride = 1, tstride = 1;
    for (std::size_t s = dims.size(); s-- > 0;) {
      std::size_t digit = x % dims[s];
      x /= dims[s];
      if (kept[s]) {
        ki += digit * kstride;
        kstride *= dims[s];
      } else {
        ti += digit * tstride;
        tstride *= dims[s];
      }
    }
    kidx[idx] = ki;
    tidx[idx] = ti;
  }
  Mat out = Mat::Zero(kdim, kdim);
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = 0; j < total; ++j)
      if (tidx[i] == tidx[j]) out(kidx[i], kidx[j]) += rho(i, j);
  return out;
}

inline Mat pure_state(const Vec& psi) { return psi * psi.adjoint(); }

inline Mat diagonal_state(const std::vector<double>& p) {
  Mat m = Mat::Zero(p.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m(i, i) = p[i];
  return m;
}

inline std::vector<double> diagonal_of(const Mat& m) {
  std::vector<double> d(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) d[i] = m(i, i).real();
  return d;
}

inline nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json rr = nlohmann::json::array(), ir = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      rr.push_back(m(i, j).real());
      ir.push_back(m(i, j).imag());
    }
    re.push_back(rr);
    im.push_back(ir);
  }
  return {{"dim", m.rows()}, {"re", re}, {"im", im}};
}

inline Mat matrix_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("dim") || !j.contains("re"))
    throw ValidationError("matrix JSON needs dim and re");
  auto dim = j.at("dim").get<std::size_t>();
  const auto& re = j.at("re");
  const nlohmann::json im = j.contains("im") ? j.at("im") : nlohmann::json();
  if (re.size() != dim || (!im.is_null() && im.size() != dim)) throw ValidationError("matrix JSON shape");
  Mat m(dim, dim);
  for (std::size_t r = 0; r < dim; ++r) {
    if (re[r].size() != dim || (!im.is_null() && im[r].size() != dim))
      throw ValidationError("matrix JSON shape");
    for (std::size_t c = 0; c < dim; ++c)
      m(r, c) = cplx(re[r][c].get<double>(), im.is_null() ? 0.0 : im[r][c].get<double>());
  }
  return m;
}

}  // namespace thermoflux
