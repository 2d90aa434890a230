#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "adiabatic/hilbert.hpp"
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

TripodParams tripod_at(double x, double z) {
  TripodParams p;
  p.x = x;
  p.z = z;
  return p;
}

}  // namespace

TEST(StateVector, RejectsUnnormalizedAndTiny) {
  EXPECT_EQ(code_of([] { StateVector(CVector::Ones(3)); }), ErrorCode::InvalidState);
  EXPECT_EQ(code_of([] { StateVector(CVector::Ones(1)); }), ErrorCode::InvalidState);
  EXPECT_EQ(code_of([] { StateVector::normalized(CVector::Zero(3)); }), ErrorCode::InvalidState);
  CVector v(2);
  v << 1.0, 1e-4;  // |norm^2 - 1| = 1e-8
  EXPECT_EQ(code_of([&] { StateVector s(v); }), ErrorCode::InvalidState);
  const auto s = StateVector::normalized(CVector::Ones(4));
  EXPECT_NEAR(s.amplitudes().squaredNorm(), 1.0, 1e-15);
  EXPECT_EQ(s.dim(), 4);
}

TEST(SpectralDecompose, TripodEigenvalues) {
  const CMatrix h = tripod_hamiltonian(tripod_at(1.0, 0.0));
  const auto eig = spectral_decompose(h, 0.0, 2);
  ASSERT_EQ(eig.eigenvalues.size(), 4);
  EXPECT_NEAR(eig.eigenvalues(0), -1.0, 1e-10);
  EXPECT_NEAR(eig.eigenvalues(1), 0.0, 1e-10);
  EXPECT_NEAR(eig.eigenvalues(2), 0.0, 1e-10);
  EXPECT_NEAR(eig.eigenvalues(3), 1.0, 1e-10);
  EXPECT_EQ(eig.cluster, (std::vector<int>{1, 2}));
  EXPECT_EQ(eig.complement, (std::vector<int>{0, 3}));
  for (int i = 0; i < 4; ++i) {
    const CVector v = eig.eigenvectors.col(i);
    EXPECT_LE((h * v - eig.eigenvalues(i) * v).norm(), 1e-10);
  }
}

TEST(SpectralDecompose, ZeroMatrixIsFullyDegenerate) {
  const auto eig = spectral_decompose(CMatrix::Zero(3, 3), 0.0, 3);
  EXPECT_EQ(eig.cluster.size(), 3u);
  EXPECT_TRUE(eig.complement.empty());
  EXPECT_LE(eig.eigenvalues.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SpectralDecompose, WrongMultiplicity) {
  const CMatrix h = tripod_hamiltonian(tripod_at(1.0, 0.0));
  EXPECT_EQ(code_of([&] { spectral_decompose(h, 0.0, 3, 1e-9); }),
            ErrorCode::DegeneracyCountMismatch);
}

TEST(SpectralDecompose, RejectsNonHermitian) {
  CMatrix h = tripod_hamiltonian(tripod_at(0.3, 0.2));
  h(0, 1) += 1e-6;
  EXPECT_EQ(code_of([&] { spectral_decompose(h, 0.0, 2); }), ErrorCode::NotHermitian);
  EXPECT_EQ(code_of([] { spectral_decompose(CMatrix::Zero(2, 3), 0.0, 2); }),
            ErrorCode::DimensionMismatch);
}

TEST(SpectralDecompose, EigenResidualOnRandomMatrices) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const CMatrix h = testing_models::random_hermitian(6, rng);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    const auto eig = spectral_decompose(h, es.eigenvalues()(2), 1);
    for (int i = 0; i < 6; ++i) {
      const CVector v = eig.eigenvectors.col(i);
      EXPECT_LE((h * v - eig.eigenvalues(i) * v).norm(), 1e-10);
    }
    EXPECT_LE(max_abs(eig.eigenvectors.adjoint() * eig.eigenvectors - CMatrix::Identity(6, 6)),
              1e-12);
  }
}

TEST(DegenerateFrame, NumericSpanMatchesAnalytic) {
  const auto p = tripod_at(1.0, 0.0);
  const auto model = tripod_model(p, ScanAxis::z);
  const auto num = degenerate_frame(model, 0.0);
  const auto ana = analytic_dark_states(p);
  EXPECT_LE(max_abs(num.projector() - ana.projector()), 1e-9);
  const CMatrix h = model(0.0);
  for (int a = 0; a < 2; ++a) {
    EXPECT_LE((h * num.vectors.col(a)).norm(), 1e-9);
  }
  EXPECT_LE(max_abs(num.vectors.adjoint() * num.vectors - CMatrix::Identity(2, 2)), 1e-10);
}

TEST(DegenerateFrame, ContinuationAtZeroStepIsIdentity) {
  const auto model = tripod_model(tripod_at(1.0, 0.0), ScanAxis::z);
  const auto f0 = degenerate_frame(model, 2.5);
  const auto f1 = degenerate_frame(model, 2.5, f0);
  EXPECT_LE(max_abs(f0.vectors.adjoint() * f1.vectors - CMatrix::Identity(2, 2)), 1e-12);
}

TEST(DegenerateFrame, ConsecutiveFramesRotateSlowly) {
  const auto model = tripod_model(tripod_at(1.0, 0.0), ScanAxis::z);
  DegenerateFrame prev = degenerate_frame(model, 0.0);
  for (int j = 1; j <= 50; ++j) {
    const auto next = degenerate_frame(model, 1e-3 * j, prev);
    const CMatrix overlap = prev.vectors.adjoint() * next.vectors;
    EXPECT_LE(std::abs(overlap(0, 1)), 1e-2);
    EXPECT_LE(std::abs(overlap(1, 0)), 1e-2);
    // Loewdin continuation makes the overlap Hermitian positive definite.
    EXPECT_LE(max_abs(overlap - overlap.adjoint()), 1e-12);
    EXPECT_LE(max_abs(overlap - CMatrix::Identity(2, 2)), 1e-2);
    prev = next;
  }
}

TEST(DegenerateFrame, ContinuityLossOnLargeJump) {
  // The D1 direction at x and at x + pi/2 are orthogonal for this model.
  const auto model = tripod_model(tripod_at(0.0, 0.0), ScanAxis::x);
  DegenerateFrame f0 = degenerate_frame(model, 0.0);
  f0.vectors = analytic_dark_vectors(tripod_at(0.0, 0.0));
  EXPECT_EQ(code_of([&] { degenerate_frame(model, std::numbers::pi / 2, f0); }),
            ErrorCode::FrameContinuityLoss);
}

TEST(DegenerateFrame, ProjectorIsIdempotentAndHermitian) {
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const auto model = testing_models::random_degenerate_model(6, 2, seed);
    for (double R : {-1.0, 0.0, 0.7}) {
      const CMatrix p = degenerate_frame(model, R).projector();
      EXPECT_LE(max_abs(p * p - p), 1e-10);
      EXPECT_LE(max_abs(p - p.adjoint()), 1e-10);
      EXPECT_LE(max_abs(p - model.reference_frame(R) * model.reference_frame(R).adjoint()), 1e-9);
    }
  }
}

TEST(Distance, Examples) {
  const auto psi = StateVector::normalized(CVector::Ones(3));
  EXPECT_EQ(distance(psi, psi, DistanceMode::raw), 0.0);
  EXPECT_EQ(distance(psi, psi, DistanceMode::phase_aligned), 0.0);

  const StateVector rotated(psi.amplitudes() * kI);
  EXPECT_NEAR(distance(psi, rotated, DistanceMode::raw), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(distance(psi, rotated, DistanceMode::phase_aligned), 0.0, 1e-15);

  const auto e0 = StateVector::basis(3, 0), e1 = StateVector::basis(3, 1);
  EXPECT_NEAR(distance(e0, e1, DistanceMode::raw), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(distance(e0, e1, DistanceMode::phase_aligned), std::sqrt(2.0), 1e-15);

  EXPECT_EQ(code_of([&] { distance(e0, StateVector::basis(2, 0)); }),
            ErrorCode::DimensionMismatch);
}

TEST(Distance, AlignedMatchesClosedFormOnRandomPairs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const CVector a = testing_models::random_state(5, rng);
    const CVector b = testing_models::random_state(5, rng);
    const double oracle = std::sqrt(std::max(0.0, 2.0 - 2.0 * std::abs(a.dot(b))));
    EXPECT_NEAR(distance(a, b, DistanceMode::phase_aligned), oracle, 1e-12);
    EXPECT_LE(distance(a, b, DistanceMode::phase_aligned), distance(a, b, DistanceMode::raw) + 1e-15);
  }
}

TEST(ProjectToPatch, Examples) {
  const auto frame = analytic_dark_states(tripod_at(1.0, 0.0));
  const auto on = project_to_patch(frame.state(0), frame);
  EXPECT_LE(on.d_perp, 1e-15);
  EXPECT_LE(distance(on.projection, frame.state(0)), 1e-15);

  // |0> is orthogonal to both dark states.
  const CVector mixed = (frame.vectors.col(0) + CVector(StateVector::basis(4, 0).amplitudes())) /
                        std::sqrt(2.0);
  const auto half = project_to_patch(StateVector(mixed), frame);
  EXPECT_NEAR(half.d_perp, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_LE(distance(half.projection, frame.state(0)), 1e-15);

  EXPECT_EQ(code_of([&] { project_to_patch(StateVector::basis(4, 0), frame); }),
            ErrorCode::AdiabaticityLost);
}

TEST(ProjectToPatch, GaugeInvariantUnderFrameRemixing) {
  std::mt19937_64 rng(3);
  const auto frame = analytic_dark_states(tripod_at(0.4, -2.0));
  for (int trial = 0; trial < 50; ++trial) {
    const CMatrix w = Eigen::HouseholderQR<CMatrix>(testing_models::random_hermitian(2, rng) +
                                                    kI * testing_models::random_hermitian(2, rng))
                          .householderQ();
    const DegenerateFrame mixed{frame.R, frame.vectors * w};
    CVector psi = frame.vectors.col(1) + 0.2 * testing_models::random_state(4, rng);
    psi.normalize();
    const auto a = project_to_patch(psi, frame);
    const auto b = project_to_patch(psi, mixed);
    EXPECT_NEAR(a.d_perp, b.d_perp, 1e-10);
    EXPECT_LE(distance(a.projection, b.projection, DistanceMode::phase_aligned), 1e-10);
  }
}

TEST(BalancedBasis, EqualPopulationsAndUnitary) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const StateVector psi(testing_models::random_state(5, rng));
    const CMatrix v = balanced_basis(psi);
    EXPECT_LE(max_abs(v.adjoint() * v - CMatrix::Identity(5, 5)), 1e-13);
    const CVector a = v.adjoint() * psi.amplitudes();
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(std::norm(a(i)), 0.2, 1e-13);
  }
}
