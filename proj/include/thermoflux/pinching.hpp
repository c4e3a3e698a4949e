#pragma once

#include "thermoflux/schur_weyl.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace thermoflux {

enum class PinchKind { energy, schur, coarse, custom };

inline std::string to_string(PinchKind k) {
  switch (k) {
    case PinchKind::energy: return "energy";
    case PinchKind::schur: return "schur";
    case PinchKind::coarse: return "coarse";
    case PinchKind::custom: return "custom";
  }
  return "?";
}

// Orthogonal projectors, each stored through an isometry V_j with
// Pi_j = V_j V_j^dag.
struct ProjectorFamily {
  std::size_t dim = 0;
  std::vector<Mat> isometries;
  std::vector<std::string> labels;
  std::vector<Rational> energies;  // total energy of each projector when defined

  std::size_t size() const { return isometries.size(); }
  std::size_t rank(std::size_t j) const { return isometries[j].cols(); }
  Mat projector(std::size_t j) const { return isometries[j] * isometries[j].adjoint(); }
};

struct PinchingChannel {
  ProjectorFamily family;
  PinchKind kind = PinchKind::custom;
  std::size_t projector_count() const { return family.size(); }
};

struct FamilyReport {
  double idempotency = 0.0;
  double orthogonality = 0.0;
  double completeness = 0.0;
  double hermiticity = 0.0;
  double commutator = 0.0;  // against the supplied Hamiltonian
  bool ok(double tol = 1e-10) const {
    return idempotency <= tol && orthogonality <= tol && completeness <= tol && hermiticity <= tol &&
           commutator <= tol;
  }
};

inline FamilyReport check_family(const ProjectorFamily& fam, const Mat* h = nullptr) {
  FamilyReport r;
  Mat sum = Mat::Zero(fam.dim, fam.dim);
  std::vector<Mat> p;
  for (std::size_t j = 0; j < fam.size(); ++j) p.push_back(fam.projector(j));
  for (std::size_t j = 0; j < p.size(); ++j) {
    r.idempotency = std::max(r.idempotency, max_abs(p[j] * p[j] - p[j]));
    r.hermiticity = std::max(r.hermiticity, hermiticity_defect(p[j]));
    for (std::size_t k = j + 1; k < p.size(); ++k) r.orthogonality = std::max(r.orthogonality, max_abs(p[j] * p[k]));
    if (h) r.commutator = std::max(r.commutator, max_abs(p[j] * *h - *h * p[j]));
    sum += p[j];
  }
  r.completeness = max_abs(sum - Mat::Identity(fam.dim, fam.dim));
  return r;
}

inline std::string rational_label(const Rational& e) {
  return e.denominator() == 1 ? std::to_string(e.numerator())
                              : std::to_string(e.numerator()) + "/" + std::to_string(e.denominator());
}

// One projector per distinct total energy of n copies, grouped exactly.
inline PinchingChannel energy_pinching(const ThermalContext& ctx, std::size_t n) {
  auto e = total_energies(ctx, n);
  std::map<Rational, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < e.size(); ++i) groups[e[i]].push_back(i);
  PinchingChannel ch;
  ch.kind = PinchKind::energy;
  ch.family.dim = e.size();
  for (const auto& [energy, idx] : groups) {
    Mat v = Mat::Zero(e.size(), idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) v(idx[c], c) = 1.0;
    ch.family.isometries.push_back(v);
    ch.family.labels.push_back("E=" + rational_label(energy));
    ch.family.energies.push_back(energy);
  }
  return ch;
}

// Projectors onto the eigenspaces of H_lambda ⊗ I inside every Schur block,
// ordered by block then energy.
inline PinchingChannel schur_pinching(const ThermalContext& ctx, std::size_t n, const SchurBasis& basis) {
  if (basis.n != static_cast<int>(n) || basis.d != static_cast<int>(ctx.dim()))
    throw ValidationError("schur_pinching: basis does not match (n, d)");
  PinchingChannel ch;
  ch.kind = PinchKind::schur;
  ch.family.dim = basis.dim();
  for (const auto& blk : basis.blocks) {
    auto e = energy_labels(blk, ctx);
    std::map<Rational, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < e.size(); ++i) groups[e[i]].push_back(i);
    for (const auto& [energy, idx] : groups) {
      Mat v(basis.dim(), idx.size() * blk.m_lambda);
      Eigen::Index c = 0;
      for (auto i : idx)
        for (std::size_t j = 0; j < blk.m_lambda; ++j) v.col(c++) = blk.weyl_vector(i, j);
      ch.family.isometries.push_back(v);
      ch.family.labels.push_back(diagram_to_string(blk.lambda) + ",E=" + rational_label(energy));
      ch.family.energies.push_back(energy);
    }
  }
  return ch;
}

inline PinchingChannel schur_pinching(const ThermalContext& ctx, std::size_t n) {
  return schur_pinching(ctx, n, build_schur_basis(static_cast<int>(n), static_cast<int>(ctx.dim())));
}

// Two-block pinching {Pi_{d_cut}, I - Pi_{d_cut}} on the first d_cut levels.
inline PinchingChannel coarse_pinching(std::size_t d_cut, std::size_t dim) {
  if (d_cut == 0 || d_cut >= dim) throw ValidationError("coarse_pinching: need 0 < d_cut < dim");
  PinchingChannel ch;
  ch.kind = PinchKind::coarse;
  ch.family.dim = dim;
  Mat a = Mat::Zero(dim, d_cut), b = Mat::Zero(dim, dim - d_cut);
  for (std::size_t i = 0; i < d_cut; ++i) a(i, i) = 1.0;
  for (std::size_t i = d_cut; i < dim; ++i) b(i, i - d_cut) = 1.0;
  ch.family.isometries = {a, b};
  ch.family.labels = {"low", "high"};
  return ch;
}

inline PinchingChannel coarse_pinching(std::size_t d_cut, const ThermalContext& ctx_truncated) {
  return coarse_pinching(d_cut, ctx_truncated.dim());
}

// A function object rather than a function: Mat drags namespace std into
// argument-dependent lookup, which would otherwise find std::apply.
struct ApplyPinching {
  Mat operator()(const PinchingChannel& ch, const Mat& rho) const {
    if (static_cast<std::size_t>(rho.rows()) != ch.family.dim) throw ValidationError("apply: dimension mismatch");
    Mat out = Mat::Zero(rho.rows(), rho.cols());
    for (const auto& v : ch.family.isometries) out += v * (v.adjoint() * rho * v) * v.adjoint();
    return out;
  }
};
inline constexpr ApplyPinching apply{};

// U_k = sum_j exp(2 pi i j k / J) Pi_j, k = 0..J-1.
inline std::vector<Mat> mixture_realization(const PinchingChannel& ch) {
  const std::size_t j_count = ch.family.size();
  std::vector<Mat> p;
  for (std::size_t j = 0; j < j_count; ++j) p.push_back(ch.family.projector(j));
  std::vector<Mat> us;
  for (std::size_t k = 0; k < j_count; ++k) {
    Mat u = Mat::Zero(ch.family.dim, ch.family.dim);
    for (std::size_t j = 0; j < j_count; ++j) {
      double ang = 2.0 * M_PI * static_cast<double>(((j + 1) * k) % j_count) / static_cast<double>(j_count);
      u += std::polar(1.0, ang) * p[j];
    }
    us.push_back(u);
  }
  return us;
}

inline Mat apply_mixture(const std::vector<Mat>& us, const Mat& rho) {
  Mat out = Mat::Zero(rho.rows(), rho.cols());
  for (const auto& u : us) out += u * rho * u.adjoint();
  return out / static_cast<double>(us.size());
}

// Choi matrix sum_{ab} |a><b| ⊗ P(|a><b|) is PSD iff the channel is CP.
inline double choi_min_eigenvalue(const PinchingChannel& ch) {
  const std::size_t d = ch.family.dim;
  if (d * d > 4096) throw CapExceeded("choi check limited to dim 64");
  Mat choi = Mat::Zero(d * d, d * d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      Mat e = Mat::Zero(d, d);
      e(a, b) = 1.0;
      choi.block(a * d, b * d, d, d) = apply(ch, e);
    }
  return min_eigenvalue(choi);
}

inline double schur_multiplier(std::size_t k, std::size_t d) {
  return std::pow(static_cast<double>(k + 1), 2.0 * (static_cast<double>(d) - 1.0));
}

struct InequalityCheck {
  double min_eigenvalue;
  bool pass;
};

// eigmin(P(rho_k) - rho_k / multiplier) >= -1e-9.
inline InequalityCheck pinching_inequality_check(const PinchingChannel& ch, const Mat& rho_k, double multiplier) {
  double me = min_eigenvalue(apply(ch, rho_k) - rho_k / multiplier);
  return {me, me >= -1e-9};
}

// Spectrum of a pinched state, reported per projector: eigenvalues of
// V_j^dag rho V_j. Exact for any pinching since the output is block diagonal.
struct PinchedSpectrum {
  std::vector<std::size_t> projector;  // owning projector of each eigenvalue
  std::vector<double> values;
};

inline PinchedSpectrum pinched_spectrum(const PinchingChannel& ch, const Mat& rho) {
  PinchedSpectrum s;
  for (std::size_t j = 0; j < ch.family.size(); ++j) {
    const Mat& v = ch.family.isometries[j];
    Mat blk = v.adjoint() * rho * v;
    auto w = eigh(blk).values;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      s.projector.push_back(j);
      s.values.push_back(std::max(0.0, w(i)));
    }
  }
  return s;
}

}  // namespace thermoflux
