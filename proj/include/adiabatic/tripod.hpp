#ifndef ADIABATIC_TRIPOD_HPP
#define ADIABATIC_TRIPOD_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "adiabatic/error.hpp"
#include "adiabatic/hilbert.hpp"

namespace adiabatic {

/// Four-level tripod: excited |0> coupled to |1>, |2>, |3>. Basis order is
/// (|0>, |1>, |2>, |3>).
struct TripodParams {
  double omega0 = 1.0;
  double k_l = 1.0;
  double xi = std::acos(std::numbers::sqrt2 - 1.0);
  double x = 0.0;
  double z = 0.0;

  void validate() const {
    if (!(omega0 > 0.0) || !std::isfinite(omega0)) {
      throw Error(ErrorCode::ValidationError, "omega0 must be positive");
    }
    if (!(k_l > 0.0) || !std::isfinite(k_l)) {
      throw Error(ErrorCode::ValidationError, "k_l must be positive");
    }
    if (!(xi > 0.0 && xi < std::numbers::pi / 2)) {
      throw Error(ErrorCode::ValidationError, "xi must lie in (0, pi/2)");
    }
    if (!std::isfinite(x) || !std::isfinite(z)) {
      throw Error(ErrorCode::ValidationError, "positions must be finite");
    }
  }

  TripodParams at(double x_new, double z_new) const {
    TripodParams p = *this;
    p.x = x_new;
    p.z = z_new;
    return p;
  }
};

inline void fill_tripod_hamiltonian(const TripodParams& p, CMatrix& h) {
  const double s = p.omega0 * std::sin(p.xi) / std::numbers::sqrt2;
  const Complex w1 = std::polar(s, -p.k_l * p.x);
  const Complex w2 = std::polar(s, p.k_l * p.x);
  const Complex w3 = std::polar(p.omega0 * std::cos(p.xi), p.k_l * p.z);
  h.setZero(4, 4);
  h(0, 1) = w1;
  h(0, 2) = w2;
  h(0, 3) = w3;
  h(1, 0) = std::conj(w1);
  h(2, 0) = std::conj(w2);
  h(3, 0) = std::conj(w3);
}

inline CMatrix tripod_hamiltonian(const TripodParams& p) {
  p.validate();
  CMatrix h(4, 4);
  fill_tripod_hamiltonian(p, h);
  return h;
}

/// Closed-form dark states as the columns (D1, D2) of a 4x2 matrix.
inline CMatrix analytic_dark_vectors(const TripodParams& p) {
  const double c = std::cos(p.xi);
  const double s = std::sin(p.xi);
  const double kappa = p.k_l * (1.0 - c);
  const Complex e1 = std::polar(1.0, p.k_l * (p.x + p.z));   // |1~> phase
  const Complex e2 = std::polar(1.0, -p.k_l * (p.x - p.z));  // |2~> phase
  const Complex g = std::polar(1.0, -kappa * p.z);
  const double r = 1.0 / std::numbers::sqrt2;
  CMatrix d = CMatrix::Zero(4, 2);
  d(1, 0) = r * e1 * g;
  d(2, 0) = -r * e2 * g;
  d(1, 1) = c * r * e1 * g;
  d(2, 1) = c * r * e2 * g;
  d(3, 1) = -s * g;
  return d;
}

inline DegenerateFrame analytic_dark_states(const TripodParams& p, double R = 0.0) {
  p.validate();
  return DegenerateFrame{R, analytic_dark_vectors(p)};
}

enum class ScanAxis { x, z };

inline const char* to_string(ScanAxis a) { return a == ScanAxis::x ? "x" : "z"; }

/// Tripod with R driving one position coordinate; the other stays at its
/// value in `base`.
inline ParamHamiltonian tripod_model(const TripodParams& base, ScanAxis axis) {
  base.validate();
  auto place = [base, axis](double R) {
    return axis == ScanAxis::x ? base.at(R, base.z) : base.at(base.x, R);
  };
  ParamHamiltonian m;
  m.dim = 4;
  m.fill = [place](double R, CMatrix& h) { fill_tripod_hamiltonian(place(R), h); };
  m.deg_energy = 0.0;
  m.deg_multiplicity = 2;
  m.reference_frame = [place](double R) { return analytic_dark_vectors(place(R)); };
  m.norm_bound = base.omega0;
  m.name = std::string("tripod-") + to_string(axis);
  return m;
}

/// Tripod driven around a circle: (x, z) = center + radius (cos R, sin R).
inline ParamHamiltonian tripod_loop_model(const TripodParams& base, double x0, double z0,
                                          double radius) {
  base.validate();
  auto place = [base, x0, z0, radius](double R) {
    return base.at(x0 + radius * std::cos(R), z0 + radius * std::sin(R));
  };
  ParamHamiltonian m;
  m.dim = 4;
  m.fill = [place](double R, CMatrix& h) { fill_tripod_hamiltonian(place(R), h); };
  m.deg_energy = 0.0;
  m.deg_multiplicity = 2;
  m.reference_frame = [place](double R) { return analytic_dark_vectors(place(R)); };
  m.norm_bound = base.omega0;
  m.name = "tripod-loop";
  return m;
}

}  // namespace adiabatic

#endif
