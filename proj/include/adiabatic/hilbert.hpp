#ifndef ADIABATIC_HILBERT_HPP
#define ADIABATIC_HILBERT_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "adiabatic/error.hpp"

namespace adiabatic {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr Complex kI{0.0, 1.0};
inline constexpr double kNormTolerance = 1e-9;

inline double max_abs(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Normalized amplitude list in a fixed basis. Construction rejects anything
/// whose norm is off by more than kNormTolerance.
class StateVector {
 public:
  explicit StateVector(CVector amplitudes) : a_(std::move(amplitudes)) {
    if (a_.size() < 2) {
      throw Error(ErrorCode::InvalidState, "state dimension must be at least 2");
    }
    const double norm_err = std::abs(a_.squaredNorm() - 1.0);
    if (!(norm_err <= kNormTolerance)) {
      throw Error(ErrorCode::InvalidState,
                  "state is not normalized (|norm^2 - 1| = " + num_text(norm_err) + ")");
    }
  }

  static StateVector normalized(CVector v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::InvalidState, "cannot normalize a zero or non-finite vector");
    }
    v /= n;
    return StateVector(std::move(v));
  }

  static StateVector basis(int dim, int index) {
    CVector v = CVector::Zero(dim);
    v(index) = 1.0;
    return StateVector(std::move(v));
  }

  const CVector& amplitudes() const noexcept { return a_; }
  int dim() const noexcept { return static_cast<int>(a_.size()); }
  Complex operator[](int i) const { return a_(i); }

 private:
  CVector a_;
};

/// Parametrized Hermitian operator H(R) with a k-fold degenerate level at
/// deg_energy. `fill` writes H(R) into a preallocated dim x dim matrix so
/// integrators can evaluate it without allocating.
struct ParamHamiltonian {
  int dim = 0;
  std::function<void(double, CMatrix&)> fill;
  double deg_energy = 0.0;
  int deg_multiplicity = 2;
  /// Optional gauge-fixed degenerate vectors (dim x k) at R, e.g. analytic dark states.
  std::function<CMatrix(double)> reference_frame;
  /// Upper bound on ||H(R)||_2 over the protocol range, if known.
  std::optional<double> norm_bound;
  std::string name;

  CMatrix operator()(double R) const {
    CMatrix h(dim, dim);
    fill(R, h);
    return h;
  }

  void evaluate(double R, CMatrix& out) const {
    if (out.rows() != dim || out.cols() != dim) out.resize(dim, dim);
    fill(R, out);
  }

  bool has_reference_frame() const { return static_cast<bool>(reference_frame); }

  /// The same operator expressed in a fixed orthonormal basis whose columns are
  /// `basis` (components transform as a -> basis^dagger a).
  ParamHamiltonian in_basis(const CMatrix& basis) const {
    if (basis.rows() != dim || basis.cols() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "basis change must be dim x dim");
    }
    auto base = std::make_shared<const ParamHamiltonian>(*this);
    auto v = std::make_shared<const CMatrix>(basis);
    ParamHamiltonian out = *this;
    out.fill = [base, v](double R, CMatrix& h) {
      CMatrix raw(base->dim, base->dim);
      base->fill(R, raw);
      h.noalias() = v->adjoint() * raw * (*v);
    };
    if (base->reference_frame) {
      out.reference_frame = [base, v](double R) -> CMatrix {
        return v->adjoint() * base->reference_frame(R);
      };
    }
    return out;
  }
};

inline double default_cluster_tol(const CMatrix& h) { return 1e-9 * (1.0 + max_abs(h)); }

struct EigenDecomposition {
  RVector eigenvalues;         // ascending
  CMatrix eigenvectors;        // orthonormal columns
  std::vector<int> cluster;    // indices of the degenerate level
  std::vector<int> complement; // every other index

  CMatrix cluster_vectors() const {
    CMatrix out(eigenvectors.rows(), static_cast<Eigen::Index>(cluster.size()));
    for (std::size_t a = 0; a < cluster.size(); ++a) out.col(a) = eigenvectors.col(cluster[a]);
    return out;
  }
};

inline void check_hermitian(const CMatrix& h) {
  if (h.rows() != h.cols()) throw Error(ErrorCode::DimensionMismatch, "Hamiltonian is not square");
  const double asym = max_abs(h - h.adjoint());
  if (asym > 1e-12 * std::max(1.0, max_abs(h))) {
    throw Error(ErrorCode::NotHermitian,
                "||H - H^dagger||_max = " + num_text(asym));
  }
}

/// Full eigensystem of a Hermitian matrix plus the indices within cluster_tol
/// of deg_energy. Throws DegeneracyCountMismatch unless exactly `multiplicity`
/// levels fall in the cluster.
inline EigenDecomposition spectral_decompose(const CMatrix& h, double deg_energy, int multiplicity,
                                             std::optional<double> cluster_tol = std::nullopt) {
  check_hermitian(h);
  const double tol = cluster_tol.value_or(default_cluster_tol(h));
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(h);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::NotHermitian, "Hermitian eigensolver did not converge");
  }
  EigenDecomposition out;
  out.eigenvalues = solver.eigenvalues();
  out.eigenvectors = solver.eigenvectors();
  for (int i = 0; i < out.eigenvalues.size(); ++i) {
    if (std::abs(out.eigenvalues(i) - deg_energy) < tol) {
      out.cluster.push_back(i);
    } else {
      out.complement.push_back(i);
    }
  }
  if (static_cast<int>(out.cluster.size()) != multiplicity) {
    throw Error(ErrorCode::DegeneracyCountMismatch,
                "found " + num_text(out.cluster.size()) + " levels at E = " +
                    num_text(deg_energy) + ", expected " + num_text(multiplicity));
  }
  return out;
}

inline EigenDecomposition spectral_decompose(const ParamHamiltonian& hdef, double R) {
  return spectral_decompose(hdef(R), hdef.deg_energy, hdef.deg_multiplicity);
}

/// Orthonormal basis {D_a} of the degenerate eigenspace at parameter R.
struct DegenerateFrame {
  double R = 0.0;
  CMatrix vectors;  // dim x k, columns D_a

  int dim() const { return static_cast<int>(vectors.rows()); }
  int size() const { return static_cast<int>(vectors.cols()); }
  CMatrix projector() const { return vectors * vectors.adjoint(); }
  StateVector state(int a) const { return StateVector(vectors.col(a)); }
  /// sum_a c_a |D_a>
  CVector combine(const CVector& c) const { return vectors * c; }
  /// <D_a|psi> for every a
  CVector coefficients(const CVector& psi) const { return vectors.adjoint() * psi; }
};

/// Smallest singular value of P_new F_prev allowed before continuation is
/// declared lost.
inline constexpr double kContinuityFloor = 0.5;

/// Symmetric (Loewdin) orthonormalization of the cluster projection of
/// `prev`: the new frame F minimizes ||F - prev|| and makes prev^dagger F
/// Hermitian positive definite.
inline CMatrix continue_frame(const CMatrix& cluster_vectors, const CMatrix& prev) {
  if (prev.rows() != cluster_vectors.rows() || prev.cols() != cluster_vectors.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "previous frame has the wrong shape");
  }
  const CMatrix x = cluster_vectors * (cluster_vectors.adjoint() * prev);
  const CMatrix s = x.adjoint() * x;
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(s);
  const RVector& sv = solver.eigenvalues();
  const double smallest = std::sqrt(std::max(sv.minCoeff(), 0.0));
  if (smallest < kContinuityFloor) {
    throw Error(ErrorCode::FrameContinuityLoss,
                "projected previous frame has singular value " + num_text(smallest));
  }
  const RVector inv_sqrt = sv.cwiseSqrt().cwiseInverse();
  const CMatrix& q = solver.eigenvectors();
  return x * (q * inv_sqrt.asDiagonal() * q.adjoint());
}

inline DegenerateFrame degenerate_frame(const ParamHamiltonian& hdef, double R) {
  const auto eig = spectral_decompose(hdef, R);
  return DegenerateFrame{R, eig.cluster_vectors()};
}

/// Gauge-continued frame: the cluster at R, oriented as close as possible to `prev`.
inline DegenerateFrame degenerate_frame(const ParamHamiltonian& hdef, double R,
                                        const DegenerateFrame& prev) {
  const auto eig = spectral_decompose(hdef, R);
  return DegenerateFrame{R, continue_frame(eig.cluster_vectors(), prev.vectors)};
}

enum class DistanceMode { raw, phase_aligned };

inline double distance(const CVector& psi1, const CVector& psi2, DistanceMode mode) {
  if (psi1.size() != psi2.size()) {
    throw Error(ErrorCode::DimensionMismatch, "states have different dimensions");
  }
  if (mode == DistanceMode::raw) return (psi1 - psi2).norm();
  // Align psi2's global phase to psi1, then take the plain distance; this equals
  // sqrt(2 - 2|<psi1|psi2>|) without the cancellation at small separations.
  const Complex overlap = psi1.dot(psi2);
  const double mag = std::abs(overlap);
  const Complex phase = mag > 0.0 ? std::conj(overlap) / mag : Complex{1.0, 0.0};
  return (psi1 - phase * psi2).norm();
}

inline double distance(const StateVector& psi1, const StateVector& psi2,
                       DistanceMode mode = DistanceMode::raw) {
  return distance(psi1.amplitudes(), psi2.amplitudes(), mode);
}

struct PatchProjection {
  StateVector projection;
  double d_perp;
};

/// ||P psi|| below this means the state has left the patch neighbourhood.
inline constexpr double kAdiabaticityFloor = 0.5;

inline PatchProjection project_to_patch(const CVector& psi, const DegenerateFrame& frame) {
  if (psi.size() != frame.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "state and frame dimensions differ");
  }
  const CVector in_patch = frame.combine(frame.coefficients(psi));
  const double weight = in_patch.norm();
  if (weight < kAdiabaticityFloor) {
    throw Error(ErrorCode::AdiabaticityLost,
                "||P psi|| = " + num_text(weight) + " at R = " + num_text(frame.R));
  }
  return PatchProjection{StateVector(in_patch / weight), (psi - in_patch).norm()};
}

inline PatchProjection project_to_patch(const StateVector& psi, const DegenerateFrame& frame) {
  return project_to_patch(psi.amplitudes(), frame);
}

/// Unitary discrete Fourier matrix, F_jk = exp(2 pi i jk / n) / sqrt(n).
inline CMatrix fourier_matrix(int n) {
  CMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      f(j, k) = std::polar(scale, 2.0 * std::numbers::pi * j * k / n);
    }
  }
  return f;
}

/// A fixed orthonormal basis in which every component of `psi` has modulus
/// 1/sqrt(n). Phase-space coordinates built on it stay far from the q = 0
/// boundary near psi.
inline CMatrix balanced_basis(const StateVector& psi) {
  const int n = psi.dim();
  Eigen::HouseholderQR<CMatrix> qr(psi.amplitudes());
  CMatrix q = qr.householderQ() * CMatrix::Identity(n, n);
  // Fix the phase of the first column so that it equals psi exactly.
  const Complex overlap = q.col(0).dot(psi.amplitudes());
  q.col(0) *= overlap / std::abs(overlap);
  return q * fourier_matrix(n);
}

}  // namespace adiabatic

#endif
