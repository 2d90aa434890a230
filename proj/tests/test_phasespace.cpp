#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "adiabatic/phasespace.hpp"
#include "adiabatic/tripod.hpp"
#include "models.hpp"

using namespace adiabatic;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no adiabatic::Error thrown";
  return ErrorCode::IoError;
}

TripodParams z_scan_point(double z = 0.0) {
  TripodParams p;
  p.x = 1.0;
  p.z = z;
  return p;
}

double phase_aligned(const CVector& a, const CVector& b) {
  return distance(a, b, DistanceMode::phase_aligned);
}

// Exact propagator exp(-i H t) from the Hermitian eigendecomposition.
CMatrix propagator(const CMatrix& h, double t) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  CVector ph(h.rows());
  for (int i = 0; i < h.rows(); ++i) ph(i) = std::polar(1.0, -es.eigenvalues()(i) * t);
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

struct ChartedDark {
  CMatrix h;       // tripod H in the balanced chart
  CMatrix patch;   // dark states in the chart
  PhasePoint pp;   // chart coordinates of the chosen dark state
};

ChartedDark charted_dark(const TripodParams& p, const CVector& c) {
  const DegenerateFrame f = analytic_dark_states(p);
  const StateVector psi(f.combine(c));
  const CMatrix v = balanced_basis(psi);
  return ChartedDark{v.adjoint() * tripod_hamiltonian(p) * v, v.adjoint() * f.vectors,
                     to_phase_point(CVector(v.adjoint() * psi.amplitudes()), 0)};
}

CVector unit_c(double theta, double phi) {
  CVector c(2);
  c << std::cos(theta), std::polar(std::sin(theta), phi);
  return c;
}

}  // namespace

TEST(PhasePoint, BasisStateHasZeroCoordinates) {
  const auto pp = to_phase_point(StateVector::basis(4, 0), 0);
  EXPECT_EQ(pp.pivot, 0);
  EXPECT_EQ(pp.q, RVector::Zero(3));
  EXPECT_EQ(pp.p, RVector::Zero(3));
}

TEST(PhasePoint, SimpleSuperposition) {
  CVector a = CVector::Zero(4);
  a(0) = 1.0 / std::sqrt(2.0);
  a(1) = kI / std::sqrt(2.0);
  const auto pp = to_phase_point(StateVector(a), 0);
  EXPECT_NEAR(pp.q(0), 0.5, 1e-15);
  EXPECT_NEAR(pp.p(0), std::numbers::pi / 2, 1e-15);
  EXPECT_EQ(pp.q(1), 0.0);
  EXPECT_EQ(pp.p(1), 0.0);
  EXPECT_EQ(pp.p(2), 0.0);

  PhasePoint back{0, RVector::Zero(3), RVector::Zero(3)};
  back.q(0) = 0.5;
  back.p(0) = std::numbers::pi / 2;
  EXPECT_LE((from_phase_point(back).amplitudes() - a).norm(), 1e-15);
  EXPECT_LE((from_phase_point(PhasePoint{0, RVector::Zero(3), RVector::Zero(3)}).amplitudes() -
             StateVector::basis(4, 0).amplitudes())
                .norm(),
            0.0);
}

TEST(PhasePoint, DefaultPivotIsDominantComponent) {
  CVector a(3);
  a << 0.3, Complex(0.0, 0.9), 0.3162277660168379;
  const auto pp = to_phase_point(StateVector::normalized(a));
  EXPECT_EQ(pp.pivot, 1);
  EXPECT_EQ(pp.component(0), 0);
  EXPECT_EQ(pp.component(1), 2);
  EXPECT_NEAR(pp.p(0), -std::numbers::pi / 2, 1e-15);
}

TEST(PhasePoint, Errors) {
  EXPECT_EQ(code_of([] { to_phase_point(StateVector::basis(3, 1), 0); }), ErrorCode::PivotTooSmall);
  PhasePoint bad{0, RVector::Zero(2), RVector::Constant(2, 0.6)};
  EXPECT_EQ(code_of([&] { from_phase_point(bad); }), ErrorCode::PopulationOverflow);
  bad.q << -0.1, 0.2;
  EXPECT_EQ(code_of([&] { from_phase_point(bad); }), ErrorCode::PopulationOverflow);
}

TEST(PhasePoint, RoundTripThousandRandomStates) {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 7;
    const CVector a = testing_models::random_state(n, rng);
    const auto pp = to_phase_point(StateVector(a));
    worst = std::max(worst, phase_aligned(from_phase_point(pp).amplitudes(), a));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(PhasePoint, CoordinateRoundTrip) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> q(0.1, 0.3), p(-3.0, 3.0);
  for (int trial = 0; trial < 500; ++trial) {
    PhasePoint pp{static_cast<int>(trial % 4), RVector(3), RVector(3)};
    for (int i = 0; i < 3; ++i) {
      pp.q(i) = q(rng);
      pp.p(i) = p(rng);
    }
    const auto back = to_phase_point(from_phase_point(pp, 0.7), pp.pivot);
    EXPECT_LE((back.q - pp.q).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((back.p - pp.p).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ClassicalHamiltonian, TripodEigenstates) {
  const auto p = z_scan_point();
  const auto model = tripod_model(p, ScanAxis::z);
  const DegenerateFrame f = analytic_dark_states(p);
  for (int a = 0; a < 2; ++a) {
    EXPECT_NEAR(classical_hamiltonian(model, 0.0, to_phase_point(f.state(a))), 0.0, 1e-10);
  }
  const auto eig = spectral_decompose(model, 0.0);
  for (int m : eig.complement) {
    const StateVector bright(eig.eigenvectors.col(m));
    EXPECT_NEAR(classical_hamiltonian(model, 0.0, to_phase_point(bright)), eig.eigenvalues(m), 1e-10);
    EXPECT_NEAR(std::abs(eig.eigenvalues(m)), 1.0, 1e-10);
  }
  EXPECT_NEAR(classical_hamiltonian(model, 0.0, to_phase_point(StateVector::basis(4, 0), 0)), 0.0,
              1e-12);
}

TEST(HamiltonVectorField, VanishesOnPatchAndAtEigenstates) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cd = charted_dark(z_scan_point(ang(rng)), unit_c(ang(rng), ang(rng)));
    EXPECT_LE(hamilton_vector_field(cd.h, cd.pp).norm(), 1e-7);
  }
  const CMatrix h = tripod_hamiltonian(z_scan_point(0.3));
  const auto eig = spectral_decompose(h, 0.0, 2);
  for (int m : eig.complement) {
    const auto pp = to_phase_point(StateVector(eig.eigenvectors.col(m)));
    EXPECT_LE(hamilton_vector_field(h, pp).norm(), 1e-7);
  }
}

TEST(HamiltonVectorField, MatchesSchrodingerStep) {
  const CMatrix h = tripod_hamiltonian(z_scan_point(0.8));
  const auto f = analytic_dark_states(z_scan_point(0.8));
  const auto eig = spectral_decompose(h, 0.0, 2);
  CVector psi = 0.8 * f.vectors.col(1) + 0.5 * eig.eigenvectors.col(3) +
                Complex(0.1, 0.3) * eig.eigenvectors.col(0);
  psi.normalize();
  const auto pp = to_phase_point(StateVector(psi));
  const auto vf = hamilton_vector_field(h, pp);
  const double dt = 1e-4;
  const auto fwd = to_phase_point(CVector(propagator(h, dt) * psi), pp.pivot);
  const auto bwd = to_phase_point(CVector(propagator(h, -dt) * psi), pp.pivot);
  for (int i = 0; i < pp.size(); ++i) {
    EXPECT_NEAR(vf.dq(i), (fwd.q(i) - bwd.q(i)) / (2.0 * dt), 1e-6);
    EXPECT_NEAR(vf.dp(i), wrap_angle(fwd.p(i) - bwd.p(i)) / (2.0 * dt), 1e-6);
  }
}

TEST(HamiltonVectorField, BoundaryDegenerate) {
  // Dark states have no |0> amplitude; the energy depends on sqrt(q_0) there.
  const auto p = z_scan_point(0.5);
  const auto pp = to_phase_point(analytic_dark_states(p).state(1));
  ASSERT_EQ(pp.q(0), 0.0);
  EXPECT_EQ(code_of([&] { hamilton_vector_field(tripod_hamiltonian(p), pp); }),
            ErrorCode::BoundaryDegenerate);
  // A smooth energy next to the boundary is handled one-sidedly.
  CVector a = CVector::Zero(3);
  a(0) = 1.0;
  const auto edge = to_phase_point(StateVector(a), 0);
  CMatrix diag = CMatrix::Zero(3, 3);
  diag(1, 1) = 2.0;
  const auto vf = hamilton_vector_field(diag, edge);
  EXPECT_NEAR(vf.dp(0), -2.0, 1e-8);
  EXPECT_NEAR(vf.dp(1), 0.0, 1e-8);
  EXPECT_LE(vf.dq.norm(), 1e-12);
}

TEST(GammaMatrix, BareBasisDarkStateIsOnBoundary) {
  const auto p = z_scan_point();
  const auto pp = to_phase_point(analytic_dark_states(p).state(1));
  EXPECT_EQ(pp.pivot, 3);
  EXPECT_EQ(pp.q(0), 0.0);
  EXPECT_EQ(code_of([&] { gamma_matrix(tripod_hamiltonian(p), pp); }),
            ErrorCode::BoundaryDegenerate);
}

TEST(GammaMatrix, RankFourWithTwoZeroModesInBalancedChart) {
  CVector c(2);
  c << 0.0, 1.0;
  const auto cd = charted_dark(z_scan_point(), c);
  const RMatrix gamma = gamma_matrix(cd.h, cd.pp);
  ASSERT_EQ(gamma.rows(), 6);
  Eigen::JacobiSVD<RMatrix> svd(gamma);
  const RVector& s = svd.singularValues();
  EXPECT_GT(s(3), 0.1);
  EXPECT_LT(s(4), 1e-8);
  EXPECT_LT(s(5), 1e-8);
  EXPECT_LT(std::abs(gamma.determinant()), 1e-12);
}

TEST(GammaMatrix, AnnihilatesPatchTangents) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cd = charted_dark(z_scan_point(ang(rng)), unit_c(ang(rng), ang(rng)));
    const RMatrix gamma = gamma_matrix(cd.h, cd.pp);
    const RMatrix t = patch_tangents(cd.patch, cd.pp);
    ASSERT_EQ(t.cols(), 2);
    for (int j = 0; j < 2; ++j) {
      EXPECT_LE((gamma * t.col(j)).norm(), 1e-6 * gamma.norm() * t.col(j).norm());
    }
  }
}

TEST(GammaMatrix, RichardsonConsistency) {
  CVector c(2);
  c << 0.6, Complex(0.0, 0.8);
  const auto cd = charted_dark(z_scan_point(1.1), c);
  GammaOptions coarse{1e-4, Stencil::second_order};
  GammaOptions fine{5e-5, Stencil::second_order};
  const RMatrix g1 = gamma_matrix(cd.h, cd.pp, coarse);
  const RMatrix g2 = gamma_matrix(cd.h, cd.pp, fine);
  EXPECT_LE((g1 - g2).cwiseAbs().maxCoeff(), 1e-6);
  // The fourth-order default agrees with both to the same level.
  const RMatrix g4 = gamma_matrix(cd.h, cd.pp);
  EXPECT_LE((g4 - g2).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(GammaMatrix, NotAFixedPoint) {
  CVector psi = CVector::Constant(4, 0.5);
  const auto pp = to_phase_point(StateVector(psi), 0);
  EXPECT_EQ(code_of([&] { gamma_matrix(tripod_hamiltonian(z_scan_point()), pp); }),
            ErrorCode::NotAFixedPoint);
}

TEST(GammaSpectrum, BohrGapsOnPatch) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  for (double omega0 : {1.0, 0.6}) {
    for (int trial = 0; trial < 8; ++trial) {
      TripodParams p = z_scan_point(ang(rng));
      p.omega0 = omega0;
      const auto cd = charted_dark(p, unit_c(ang(rng), ang(rng)));
      const auto spec = gamma_spectrum(gamma_matrix(cd.h, cd.pp), 2);
      EXPECT_EQ(spec.zero_modes, 2);
      EXPECT_LE(spec.reconstruction_residual(), 1e-8);
      for (int i = 2; i < 6; ++i) {
        EXPECT_NEAR(std::abs(spec.d(i)), omega0, 1e-6);
        EXPECT_LE(std::abs(spec.d(i).real()), 1e-6);
      }
      // Every nonzero eigenvalue has a partner at -d.
      for (int i = 2; i < 6; ++i) {
        double nearest = 1e300;
        for (int j = 2; j < 6; ++j) nearest = std::min(nearest, std::abs(spec.d(i) + spec.d(j)));
        EXPECT_LE(nearest, 1e-6);
      }
      const RMatrix t = patch_tangents(cd.patch, cd.pp);
      EXPECT_LE(zero_mode_misalignment(spec, t), 1e-6);
    }
  }
}

TEST(GammaSpectrum, RandomModelGapsMatchQuantumGaps) {
  for (unsigned seed = 1; seed <= 4; ++seed) {
    const auto model = testing_models::random_degenerate_model(6, 2, seed, 0.3);
    const double R = 0.4;
    const CMatrix frame = model.reference_frame(R);
    CVector c(2);
    c << 0.6, Complex(0.48, 0.64);
    const StateVector psi = StateVector::normalized(frame * c);
    const CMatrix v = balanced_basis(psi);
    const auto pp = to_phase_point(CVector(v.adjoint() * psi.amplitudes()), 0);
    const auto spec = gamma_spectrum(gamma_matrix(v.adjoint() * model(R) * v, pp), 2);
    const auto eig = spectral_decompose(model, R);
    std::vector<double> gaps, found;
    for (int m : eig.complement) {
      gaps.push_back(std::abs(eig.eigenvalues(m) - 0.3));
      gaps.push_back(std::abs(eig.eigenvalues(m) - 0.3));
    }
    for (int i = 2; i < spec.size(); ++i) found.push_back(std::abs(spec.d(i)));
    std::sort(gaps.begin(), gaps.end());
    std::sort(found.begin(), found.end());
    ASSERT_EQ(gaps.size(), found.size());
    for (std::size_t i = 0; i < gaps.size(); ++i) EXPECT_NEAR(found[i], gaps[i], 1e-6);
    EXPECT_LE(spec.reconstruction_residual(), 1e-8);
  }
}

TEST(GammaSpectrum, ZeroMatrixAllModesZero) {
  const auto spec = gamma_spectrum(RMatrix::Zero(6, 6), 6);
  EXPECT_EQ(spec.zero_modes, 6);
  EXPECT_LE(spec.d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GammaSpectrum, Errors) {
  RMatrix rot(2, 2);
  rot << 0.0, -1.0, 1.0, 0.0;
  EXPECT_EQ(code_of([&] { gamma_spectrum(rot, 2); }), ErrorCode::ZeroModeCountMismatch);
  RMatrix jordan(2, 2);
  jordan << 1.0, 1.0, 0.0, 1.0;
  EXPECT_EQ(code_of([&] { gamma_spectrum(jordan, 0); }), ErrorCode::DefectiveMatrix);
  EXPECT_EQ(code_of([] { gamma_spectrum(RMatrix::Zero(3, 3), 3); }), ErrorCode::DimensionMismatch);
}

TEST(StateJacobian, MatchesFiniteDifferences) {
  PhasePoint pp{1, RVector(3), RVector(3)};
  pp.p << 0.3, -1.2, 2.0;
  pp.q << 0.2, 0.15, 0.3;
  const CMatrix jac = state_jacobian(pp);
  const double h = 1e-6;
  for (int j = 0; j < 6; ++j) {
    RVector yp = pp.coords(), ym = pp.coords();
    yp(j) += h;
    ym(j) -= h;
    const CVector fd = (from_phase_point(PhasePoint::from_coords(1, yp)).amplitudes() -
                        from_phase_point(PhasePoint::from_coords(1, ym)).amplitudes()) /
                       (2.0 * h);
    EXPECT_LE((jac.col(j) - fd).norm(), 1e-8);
  }
  // phase_displacement inverts the Jacobian, ignoring global phase.
  RVector dy(6);
  dy << 0.1, -0.2, 0.05, 0.01, -0.03, 0.02;
  const CVector dpsi = jac * dy.cast<Complex>() +
                       0.4 * kI * from_phase_point(pp).amplitudes();
  EXPECT_LE((phase_displacement(pp, dpsi) - dy).norm(), 1e-12);
}
