#ifndef ADIABATIC_PHASESPACE_HPP
#define ADIABATIC_PHASESPACE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "adiabatic/error.hpp"
#include "adiabatic/hilbert.hpp"

namespace adiabatic {

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::remainder(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

/// Canonical coordinates of a state with its global phase removed: the pivot
/// component carries phase 0 and population 1 - sum(q); every other component
/// j (ascending, skipping the pivot) contributes p = relative phase and
/// q = |a_j|^2.
struct PhasePoint {
  int pivot = 0;
  RVector p;
  RVector q;

  int dim() const { return static_cast<int>(q.size()) + 1; }
  int size() const { return static_cast<int>(q.size()); }
  double pivot_population() const { return 1.0 - q.sum(); }

  /// Basis index of coordinate i.
  int component(int i) const { return i < pivot ? i : i + 1; }

  /// Stacked (p_1..p_{n-1}, q_1..q_{n-1}).
  RVector coords() const {
    RVector y(2 * size());
    y << p, q;
    return y;
  }

  static PhasePoint from_coords(int pivot, const RVector& y) {
    const auto m = y.size() / 2;
    return PhasePoint{pivot, y.head(m), y.tail(m)};
  }
};

/// Pivot populations below this make the relative phases ill-conditioned.
inline constexpr double kPivotFloor = 0.1;
inline constexpr double kPopulationSlack = 1e-12;

inline PhasePoint to_phase_point(const CVector& a, std::optional<int> pivot = std::nullopt) {
  const int n = static_cast<int>(a.size());
  if (n < 2) throw Error(ErrorCode::InvalidState, "state dimension must be at least 2");
  int r = 0;
  if (pivot) {
    r = *pivot;
    if (r < 0 || r >= n) throw Error(ErrorCode::DimensionMismatch, "pivot index out of range");
  } else {
    a.cwiseAbs2().maxCoeff(&r);
  }
  if (std::norm(a(r)) < kPivotFloor) {
    throw Error(ErrorCode::PivotTooSmall, "|a_pivot|^2 = " + num_text(std::norm(a(r))) +
                                              " at pivot " + num_text(r));
  }
  PhasePoint pp{r, RVector(n - 1), RVector(n - 1)};
  const double ref = std::arg(a(r));
  for (int i = 0; i < n - 1; ++i) {
    const Complex c = a(pp.component(i));
    pp.q(i) = std::norm(c);
    pp.p(i) = pp.q(i) > 0.0 ? wrap_angle(std::arg(c) - ref) : 0.0;
  }
  return pp;
}

inline PhasePoint to_phase_point(const StateVector& psi, std::optional<int> pivot = std::nullopt) {
  return to_phase_point(psi.amplitudes(), pivot);
}

namespace detail {

inline void check_populations(const PhasePoint& pp) {
  if (pp.p.size() != pp.q.size()) {
    throw Error(ErrorCode::DimensionMismatch, "p and q have different lengths");
  }
  if (pp.pivot < 0 || pp.pivot > pp.size()) {
    throw Error(ErrorCode::DimensionMismatch, "pivot index out of range");
  }
  if (pp.q.size() > 0 && pp.q.minCoeff() < 0.0) {
    throw Error(ErrorCode::PopulationOverflow, "negative population");
  }
  if (pp.q.sum() > 1.0 + kPopulationSlack) {
    throw Error(ErrorCode::PopulationOverflow, "sum(q) = " + num_text(pp.q.sum()));
  }
}

inline CVector amplitudes(const PhasePoint& pp, double global_phase = 0.0) {
  CVector a(pp.dim());
  a(pp.pivot) = std::polar(std::sqrt(std::max(0.0, pp.pivot_population())), global_phase);
  for (int i = 0; i < pp.size(); ++i) {
    a(pp.component(i)) = std::polar(std::sqrt(pp.q(i)), pp.p(i) + global_phase);
  }
  return a;
}

inline double expectation(const CMatrix& h, const CVector& a) { return a.dot(h * a).real(); }

}  // namespace detail

inline StateVector from_phase_point(const PhasePoint& pp, double global_phase = 0.0) {
  detail::check_populations(pp);
  return StateVector(detail::amplitudes(pp, global_phase));
}

/// <psi(pp)|H|psi(pp)> for a fixed matrix.
inline double classical_energy(const CMatrix& h, const PhasePoint& pp) {
  detail::check_populations(pp);
  if (h.rows() != pp.dim()) throw Error(ErrorCode::DimensionMismatch, "H and phase point differ");
  return detail::expectation(h, detail::amplitudes(pp));
}

inline double classical_hamiltonian(const ParamHamiltonian& hdef, double R, const PhasePoint& pp) {
  return classical_energy(hdef(R), pp);
}

/// dp/dt = -dH/dq, dq/dt = +dH/dp.
struct PhaseVelocity {
  RVector dp;
  RVector dq;

  RVector stacked() const {
    RVector v(dp.size() + dq.size());
    v << dp, dq;
    return v;
  }
  double norm() const { return std::sqrt(dp.squaredNorm() + dq.squaredNorm()); }
};

inline PhaseVelocity hamilton_vector_field(const CMatrix& h, const PhasePoint& pp,
                                           double step = 1e-5) {
  detail::check_populations(pp);
  const int m = pp.size();
  const RVector y0 = pp.coords();
  auto energy = [&](const RVector& y) {
    return detail::expectation(h, detail::amplitudes(PhasePoint::from_coords(pp.pivot, y)));
  };
  const double f0 = energy(y0);
  auto shifted = [&](int j, double delta) {
    RVector y = y0;
    y(j) += delta;
    return energy(y);
  };
  RVector grad(2 * m);
  for (int j = 0; j < m; ++j) {
    grad(j) = (shifted(j, step) - shifted(j, -step)) / (2.0 * step);
  }
  const double slack = pp.pivot_population();
  // Three-point one-sided derivative with step s in direction dir (+1/-1).
  auto one_sided = [&](int j, double s, double dir) {
    return dir * (-3.0 * f0 + 4.0 * shifted(j, dir * s) - shifted(j, 2.0 * dir * s)) / (2.0 * s);
  };
  for (int i = 0; i < m; ++i) {
    const int j = m + i;
    const double qi = pp.q(i);
    const bool back = qi - step >= 0.0;
    const bool fwd = qi + step <= 1.0 && slack - step >= 0.0;
    if (back && fwd) {
      grad(j) = (shifted(j, step) - shifted(j, -step)) / (2.0 * step);
      continue;
    }
    double dir = 0.0;
    if (fwd && qi + 4.0 * step <= 1.0 && slack - 4.0 * step >= 0.0) {
      dir = 1.0;
    } else if (back && qi - 4.0 * step >= 0.0) {
      dir = -1.0;
    }
    if (dir == 0.0) {
      throw Error(ErrorCode::BoundaryDegenerate,
                  "coordinate q_" + num_text(i) + " has no room for a difference step");
    }
    // The energy goes like sqrt(q) next to q = 0; a one-sided stencil is only
    // trusted when doubling its step leaves the estimate unchanged.
    const double g1 = one_sided(j, step, dir);
    const double g2 = one_sided(j, 2.0 * step, dir);
    if (std::abs(g1 - g2) > 1e-6 * (1.0 + std::abs(g1))) {
      throw Error(ErrorCode::BoundaryDegenerate,
                  "dH/dq_" + num_text(i) + " is singular at the population boundary");
    }
    grad(j) = g1;
  }
  return PhaseVelocity{-grad.tail(m), grad.head(m)};
}

inline PhaseVelocity hamilton_vector_field(const ParamHamiltonian& hdef, double R,
                                           const PhasePoint& pp, double step = 1e-5) {
  return hamilton_vector_field(hdef(R), pp, step);
}

enum class Stencil { second_order, fourth_order };

struct GammaOptions {
  double step = 1e-3;
  Stencil stencil = Stencil::fourth_order;
  /// Maximum |(dp/dt, dq/dt)| accepted as a fixed point.
  double fixed_point_tol = 1e-7;
};

namespace detail {

inline RMatrix energy_hessian(const CMatrix& h, const PhasePoint& pp, double step,
                              Stencil stencil) {
  const int m = pp.size();
  const int dim = 2 * m;
  const RVector y0 = pp.coords();
  const CVector a0 = amplitudes(pp);
  auto energy = [&](const RVector& y) {
    return expectation(h, amplitudes(PhasePoint::from_coords(pp.pivot, y)));
  };
  const double f0 = expectation(h, a0);
  RMatrix hess(dim, dim);

  if (stencil == Stencil::second_order) {
    for (int i = 0; i < dim; ++i) {
      RVector yp = y0, ym = y0;
      yp(i) += step;
      ym(i) -= step;
      hess(i, i) = (energy(yp) + energy(ym) - 2.0 * f0) / (step * step);
      for (int j = i + 1; j < dim; ++j) {
        RVector ypp = yp, ypm = yp, ymp = ym, ymm = ym;
        ypp(j) += step;
        ypm(j) -= step;
        ymp(j) += step;
        ymm(j) -= step;
        hess(i, j) = hess(j, i) =
            (energy(ypp) - energy(ypm) - energy(ymp) + energy(ymm)) / (4.0 * step * step);
      }
    }
    return hess;
  }

  // Five-point second derivative on the diagonal, tensor product of the
  // five-point first-derivative stencil off the diagonal.
  constexpr std::array<int, 4> offsets{-2, -1, 1, 2};
  constexpr std::array<double, 4> d1{1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};
  for (int i = 0; i < dim; ++i) {
    auto at = [&](double di) {
      RVector y = y0;
      y(i) += di * step;
      return energy(y);
    };
    hess(i, i) = (-at(2) + 16.0 * at(1) - 30.0 * f0 + 16.0 * at(-1) - at(-2)) / (12.0 * step * step);
    for (int j = i + 1; j < dim; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < offsets.size(); ++a) {
        for (std::size_t b = 0; b < offsets.size(); ++b) {
          RVector y = y0;
          y(i) += offsets[a] * step;
          y(j) += offsets[b] * step;
          acc += d1[a] * d1[b] * energy(y);
        }
      }
      hess(i, j) = hess(j, i) = acc / (step * step);
    }
  }
  return hess;
}

}  // namespace detail

/// Linearization of the Hamilton vector field at a fixed point, in the block
/// layout [[-H_qp, -H_qq], [H_pp, H_pq]] over stacked (p, q).
inline RMatrix gamma_matrix(const CMatrix& h, const PhasePoint& pp_bar,
                            const GammaOptions& opts = {}) {
  detail::check_populations(pp_bar);
  const double reach = (opts.stencil == Stencil::fourth_order ? 2.0 : 1.0) * opts.step;
  if ((pp_bar.size() > 0 && pp_bar.q.minCoeff() < reach) || pp_bar.pivot_population() < reach) {
    throw Error(ErrorCode::BoundaryDegenerate,
                "phase point lies within the difference stencil of a q-boundary");
  }
  const double residual = hamilton_vector_field(h, pp_bar).norm();
  if (residual > opts.fixed_point_tol) {
    throw Error(ErrorCode::NotAFixedPoint,
                "Hamilton vector field residual " + num_text(residual));
  }
  const int m = pp_bar.size();
  const RMatrix hess = detail::energy_hessian(h, pp_bar, opts.step, opts.stencil);
  RMatrix gamma(2 * m, 2 * m);
  gamma.topRows(m) = -hess.bottomRows(m);
  gamma.bottomRows(m) = hess.topRows(m);
  return gamma;
}

inline RMatrix gamma_matrix(const ParamHamiltonian& hdef, double R, const PhasePoint& pp_bar,
                            const GammaOptions& opts = {}) {
  return gamma_matrix(hdef(R), pp_bar, opts);
}

/// Diagonalization U Gamma U^{-1} = diag(d) with the zero modes in the leading
/// slots and the remaining modes ordered by ascending |Im d|.
struct GammaSpectrum {
  RMatrix gamma;
  CVector d;
  CMatrix U;      // rows: left eigenvectors
  CMatrix U_inv;  // columns: right eigenvectors
  double zero_tol = 0.0;
  int zero_modes = 0;
  double condition = 1.0;

  int size() const { return static_cast<int>(d.size()); }

  double reconstruction_residual() const {
    const CMatrix g = gamma.cast<Complex>();
    return max_abs(U * g * U_inv - CMatrix(d.asDiagonal()));
  }
};

inline constexpr double kDefectiveCondition = 1e8;

inline double condition_number(const CMatrix& m) {
  Eigen::JacobiSVD<CMatrix> svd(m);
  const RVector& s = svd.singularValues();
  return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

inline GammaSpectrum gamma_spectrum(const RMatrix& gamma, int expected_zero_modes,
                                    std::optional<double> zero_tol = std::nullopt) {
  const int n = static_cast<int>(gamma.rows());
  if (n != gamma.cols() || n % 2 != 0) {
    throw Error(ErrorCode::DimensionMismatch, "Gamma must be square with even dimension");
  }
  Eigen::EigenSolver<RMatrix> es(gamma, false);
  const CVector raw = es.eigenvalues();
  const double scale = n > 0 ? raw.cwiseAbs().maxCoeff() : 0.0;
  const double floor = 1e-12 * (1.0 + gamma.cwiseAbs().maxCoeff());
  GammaSpectrum out;
  out.gamma = gamma;
  out.zero_tol = std::max(zero_tol.value_or(1e-6 * scale), floor);
  const double cluster_tol = std::max(10.0 * out.zero_tol, 1e-5 * scale);

  // Group eigenvalues: the zero cluster, then clusters of (near-)repeated values.
  struct Cluster {
    Complex center;
    std::vector<int> members;
  };
  std::vector<Cluster> clusters;
  Cluster zero{0.0, {}};
  std::vector<bool> used(n, false);
  for (int i = 0; i < n; ++i) {
    if (std::abs(raw(i)) < out.zero_tol) {
      zero.members.push_back(i);
      used[i] = true;
    }
  }
  out.zero_modes = static_cast<int>(zero.members.size());
  if (out.zero_modes != expected_zero_modes) {
    throw Error(ErrorCode::ZeroModeCountMismatch,
                "found " + num_text(out.zero_modes) + " zero modes, expected " +
                    num_text(expected_zero_modes));
  }
  for (int i = 0; i < n; ++i) {
    if (used[i]) continue;
    Cluster c{raw(i), {}};
    for (int j = i; j < n; ++j) {
      if (!used[j] && std::abs(raw(j) - raw(i)) < cluster_tol) {
        c.members.push_back(j);
        used[j] = true;
      }
    }
    Complex sum = 0.0;
    for (int j : c.members) sum += raw(j);
    c.center = sum / static_cast<double>(c.members.size());
    clusters.push_back(std::move(c));
  }
  std::stable_sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    const double ia = std::abs(a.center.imag()), ib = std::abs(b.center.imag());
    if (std::abs(ia - ib) > 1e-9 * std::max(1.0, ia)) return ia < ib;
    if (a.center.imag() != b.center.imag()) return a.center.imag() > b.center.imag();
    return a.center.real() < b.center.real();
  });
  if (!zero.members.empty()) clusters.insert(clusters.begin(), zero);

  // Right invariant subspaces from SVD null spaces; robust when LAPACK-style
  // eigenvectors of a repeated eigenvalue come out nearly parallel.
  const CMatrix g = gamma.cast<Complex>();
  CMatrix right(n, n);
  int col = 0;
  for (const auto& c : clusters) {
    const int mult = static_cast<int>(c.members.size());
    const CMatrix shifted = g - c.center * CMatrix::Identity(n, n);
    Eigen::JacobiSVD<CMatrix> svd(shifted, Eigen::ComputeFullV);
    right.middleCols(col, mult) = svd.matrixV().rightCols(mult);
    col += mult;
  }
  out.condition = condition_number(right);
  if (!(out.condition <= kDefectiveCondition)) {
    throw Error(ErrorCode::DefectiveMatrix,
                "eigenvector condition number " + num_text(out.condition));
  }
  CMatrix left = right.inverse();

  // Diagonalize inside each repeated non-zero cluster.
  col = 0;
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    const int mult = static_cast<int>(clusters[ci].members.size());
    const bool is_zero = ci == 0 && !zero.members.empty();
    if (mult > 1 && !is_zero) {
      const CMatrix block = left.middleRows(col, mult) * g * right.middleCols(col, mult);
      Eigen::ComplexEigenSolver<CMatrix> ces(block);
      if (ces.info() == Eigen::Success && condition_number(ces.eigenvectors()) < 1e4) {
        right.middleCols(col, mult) = right.middleCols(col, mult) * ces.eigenvectors();
      }
    }
    col += mult;
  }
  left = right.inverse();
  out.U = left;
  out.U_inv = right;
  const CMatrix diag = left * g * right;
  out.d = diag.diagonal();
  const double off = max_abs(diag - CMatrix(out.d.asDiagonal()));
  if (off > 1e-6 * (1.0 + gamma.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::DefectiveMatrix,
                "Gamma is not diagonalizable (off-diagonal residue " + num_text(off) + ")");
  }
  return out;
}

/// d(amplitudes)/d(p, q) at pp, with the pivot phase held at zero.
inline CMatrix state_jacobian(const PhasePoint& pp) {
  detail::check_populations(pp);
  const int m = pp.size();
  const CVector a = detail::amplitudes(pp);
  const double ar = a(pp.pivot).real();
  if (!(ar > 0.0)) throw Error(ErrorCode::PivotTooSmall, "pivot amplitude vanishes");
  CMatrix jac = CMatrix::Zero(pp.dim(), 2 * m);
  for (int i = 0; i < m; ++i) {
    const int c = pp.component(i);
    if (!(pp.q(i) > 0.0)) {
      throw Error(ErrorCode::BoundaryDegenerate, "Jacobian undefined at q = 0");
    }
    jac(c, i) = kI * a(c);
    jac(c, m + i) = a(c) / (2.0 * pp.q(i));
    jac(pp.pivot, m + i) = -1.0 / (2.0 * ar);
  }
  return jac;
}

/// Phase-space displacement (dp, dq) of a first-order state displacement
/// delta_psi at pp. Any global-phase component of delta_psi is absorbed.
inline RVector phase_displacement(const PhasePoint& pp, const CVector& delta_psi) {
  const int n = pp.dim();
  const int m = pp.size();
  const CMatrix jac = state_jacobian(pp);
  const CVector a = detail::amplitudes(pp);
  RMatrix sys(2 * n, 2 * m + 1);
  sys.topLeftCorner(n, 2 * m) = jac.real();
  sys.bottomLeftCorner(n, 2 * m) = jac.imag();
  const CVector phase_dir = kI * a;
  sys.topRightCorner(n, 1) = phase_dir.real();
  sys.bottomRightCorner(n, 1) = phase_dir.imag();
  RVector rhs(2 * n);
  rhs << delta_psi.real(), delta_psi.imag();
  const RVector sol = sys.colPivHouseholderQr().solve(rhs);
  return sol.head(2 * m);
}

/// Real tangent directions (columns) of the degeneracy patch at pp, as
/// phase-space displacements. `patch` holds the degenerate vectors in the same
/// basis as pp.
inline RMatrix patch_tangents(const CMatrix& patch, const PhasePoint& pp) {
  const CVector psi = detail::amplitudes(pp);
  const CMatrix horizontal = patch - psi * (psi.adjoint() * patch);
  Eigen::JacobiSVD<CMatrix> svd(horizontal, Eigen::ComputeThinU);
  const int k = static_cast<int>(patch.cols());
  RMatrix out(2 * pp.size(), 2 * (k - 1));
  for (int j = 0; j < k - 1; ++j) {
    const CVector w = svd.matrixU().col(j);
    out.col(2 * j) = phase_displacement(pp, w);
    out.col(2 * j + 1) = phase_displacement(pp, kI * w);
  }
  return out;
}

/// Largest component of the patch tangents outside the zero-mode subspace of
/// the spectrum (relative to each tangent's length).
inline double zero_mode_misalignment(const GammaSpectrum& spec, const RMatrix& tangents) {
  if (spec.zero_modes == 0) return tangents.size() == 0 ? 0.0 : 1.0;
  const CMatrix zero_basis = spec.U_inv.leftCols(spec.zero_modes);
  Eigen::HouseholderQR<CMatrix> qr(zero_basis);
  const CMatrix q = qr.householderQ() * CMatrix::Identity(zero_basis.rows(), spec.zero_modes);
  double worst = 0.0;
  for (int j = 0; j < tangents.cols(); ++j) {
    const CVector t = tangents.col(j).cast<Complex>();
    const CVector outside = t - q * (q.adjoint() * t);
    worst = std::max(worst, outside.norm() / t.norm());
  }
  return worst;
}

}  // namespace adiabatic

#endif
