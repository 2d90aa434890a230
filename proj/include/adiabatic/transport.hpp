#ifndef ADIABATIC_TRANSPORT_HPP
#define ADIABATIC_TRANSPORT_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "adiabatic/error.hpp"
#include "adiabatic/hilbert.hpp"

namespace adiabatic {

/// Linear sweep R(t) = start + velocity * t for t in [0, duration].
class Protocol {
 public:
  Protocol(double start, double velocity, double duration)
      : start_(start), velocity_(velocity), duration_(duration) {
    if (velocity == 0.0 || !std::isfinite(velocity)) {
      throw Error(ErrorCode::ValidationError, "protocol velocity must be nonzero");
    }
    if (!(duration > 0.0) || !std::isfinite(duration)) {
      throw Error(ErrorCode::ValidationError, "protocol duration must be positive");
    }
  }

  /// Sweep from `start` to `end` at speed |velocity|; the sign follows the direction.
  static Protocol between(double start, double end, double speed) {
    const double v = end >= start ? std::abs(speed) : -std::abs(speed);
    return Protocol(start, v, std::abs(end - start) / std::abs(speed));
  }

  double start() const { return start_; }
  double velocity() const { return velocity_; }
  double duration() const { return duration_; }
  double end() const { return at(duration_); }
  double at(double t) const { return start_ + velocity_ * t; }

 private:
  double start_;
  double velocity_;
  double duration_;
};

/// Integration step count and the step indices at which samples are stored.
struct SampleGrid {
  double dt = 0.0;
  long long steps = 0;
  long long stride = 1;
  std::vector<double> times;
};

inline SampleGrid make_sample_grid(const Protocol& prot, double dt, double sample_interval) {
  if (!(dt > 0.0)) throw Error(ErrorCode::ValidationError, "dt must be positive");
  SampleGrid g;
  g.dt = dt;
  g.steps = std::max(1LL, std::llround(prot.duration() / dt));
  g.stride = std::max(1LL, std::llround(sample_interval / dt));
  for (long long k = 0; k <= g.steps; k += g.stride) g.times.push_back(static_cast<double>(k) * dt);
  if ((g.steps % g.stride) != 0) g.times.push_back(static_cast<double>(g.steps) * dt);
  return g;
}

struct Trajectory {
  double dt = 0.0;
  std::vector<double> t;
  std::vector<double> R;
  std::vector<CVector> states;
  std::vector<double> norm_err;  // | ||psi||^2 - 1 | at each sample

  std::size_t size() const { return t.size(); }
};

/// dt * ||H|| above this is rejected before integration.
inline constexpr double kMaxPhasePerStep = 0.05;
/// Norm drift tolerated before a run is flagged as under-resolved.
inline constexpr double kNormDriftLimit = 1e-8;

inline double spectral_norm_estimate(const ParamHamiltonian& hdef, const Protocol& prot) {
  if (hdef.norm_bound) return *hdef.norm_bound;
  double out = 0.0;
  for (double t : {0.0, 0.5 * prot.duration(), prot.duration()}) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hdef(prot.at(t)), Eigen::EigenvaluesOnly);
    out = std::max(out, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return out;
}

/// Classic fixed-step RK4 for i dpsi/dt = H(R(t)) psi. The norm is never
/// corrected; drift beyond kNormDriftLimit raises StepTooLarge.
inline Trajectory integrate_schrodinger(const ParamHamiltonian& hdef, const Protocol& prot,
                                        const StateVector& psi0, double dt,
                                        double sample_interval) {
  if (psi0.dim() != hdef.dim) throw Error(ErrorCode::DimensionMismatch, "psi0 dimension");
  const double phase_per_step = dt * spectral_norm_estimate(hdef, prot);
  if (phase_per_step > kMaxPhasePerStep) {
    throw Error(ErrorCode::StepTooLarge,
                "dt * ||H|| = " + num_text(phase_per_step) + " exceeds 0.05");
  }
  const SampleGrid grid = make_sample_grid(prot, dt, sample_interval);
  Trajectory out;
  out.dt = dt;
  out.t.reserve(grid.times.size());
  out.R.reserve(grid.times.size());
  out.states.reserve(grid.times.size());
  out.norm_err.reserve(grid.times.size());

  const int n = hdef.dim;
  CVector psi = psi0.amplitudes();
  CMatrix h0(n, n), hm(n, n), h1(n, n);
  CVector k1(n), k2(n), k3(n), k4(n), tmp(n);

  auto record = [&](double t) {
    const double drift = std::abs(psi.squaredNorm() - 1.0);
    if (drift > kNormDriftLimit) {
      throw Error(ErrorCode::StepTooLarge,
                  "norm drift " + num_text(drift) + " at t = " + num_text(t));
    }
    out.t.push_back(t);
    out.R.push_back(prot.at(t));
    out.states.push_back(psi);
    out.norm_err.push_back(drift);
  };

  record(0.0);
  hdef.fill(prot.at(0.0), h0);
  for (long long k = 0; k < grid.steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    hdef.fill(prot.at(t + 0.5 * dt), hm);
    hdef.fill(prot.at(t + dt), h1);
    k1.noalias() = -kI * (h0 * psi);
    tmp = psi + (0.5 * dt) * k1;
    k2.noalias() = -kI * (hm * tmp);
    tmp = psi + (0.5 * dt) * k2;
    k3.noalias() = -kI * (hm * tmp);
    tmp = psi + dt * k3;
    k4.noalias() = -kI * (h1 * tmp);
    psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    h0.swap(h1);
    const long long done = k + 1;
    if (done % grid.stride == 0 || done == grid.steps) record(static_cast<double>(done) * dt);
  }
  return out;
}

enum class FrameGauge {
  continued,  // neighbours obtained by Loewdin continuation
  reference,  // neighbours from the model's gauge-fixed reference frame
};

struct ConnectionEstimate {
  CMatrix matrix;             // anti-Hermitian A_ab = <D_a| d/dR |D_b>
  double hermitian_residue;   // max |entry| of the discarded Hermitian part
};

/// A_ab = <D_a|dD_b/dR> by central differences at R +- step. In the continued
/// gauge the neighbours are continued from `anchor` (default: `frame` itself).
inline ConnectionEstimate wz_connection(const ParamHamiltonian& hdef, double R,
                                        const DegenerateFrame& frame, double step = 1e-5,
                                        FrameGauge gauge = FrameGauge::continued,
                                        const DegenerateFrame* anchor = nullptr) {
  CMatrix plus, minus;
  if (gauge == FrameGauge::reference) {
    if (!hdef.has_reference_frame()) {
      throw Error(ErrorCode::ValidationError, "model has no reference frame");
    }
    const CMatrix mix = hdef.reference_frame(R).adjoint() * frame.vectors;
    plus = hdef.reference_frame(R + step) * mix;
    minus = hdef.reference_frame(R - step) * mix;
  } else {
    const DegenerateFrame& from = anchor ? *anchor : frame;
    plus = degenerate_frame(hdef, R + step, from).vectors;
    minus = degenerate_frame(hdef, R - step, from).vectors;
  }
  const CMatrix a = frame.vectors.adjoint() * (plus - minus) / (2.0 * step);
  const CMatrix herm = 0.5 * (a + a.adjoint());
  return ConnectionEstimate{0.5 * (a - a.adjoint()), max_abs(herm)};
}

/// A point of a Wilczek-Zee trajectory: psi = sum_a c_a D_a(R).
struct WzPoint {
  double R = 0.0;
  DegenerateFrame frame;
  CVector c;

  CVector state() const { return frame.combine(c); }
};

struct WzOptions {
  double step_R = 1e-2;          // RK4 step along R
  double connection_step = 1e-5; // central-difference step for A
  FrameGauge gauge = FrameGauge::continued;
};

namespace detail {

struct WzStep {
  WzPoint end;
  CMatrix a_start;  // connection at the start, in the step's gauge
  CMatrix a_end;    // connection at the end, in the step's gauge
};

/// One RK4 step of dc/dR = -A c. In the continued gauge every frame in the step
/// is continued from the step's starting frame, so all stages see one smooth
/// gauge and the step is fourth-order accurate.
inline WzStep wz_rk4_step(const ParamHamiltonian& hdef, const WzPoint& from, double dR,
                          const WzOptions& opts) {
  const double h = opts.connection_step;
  const DegenerateFrame& anchor = from.frame;
  auto frame_at = [&](double R) {
    if (opts.gauge == FrameGauge::reference) {
      const CMatrix mix = hdef.reference_frame(from.R).adjoint() * anchor.vectors;
      return DegenerateFrame{R, hdef.reference_frame(R) * mix};
    }
    return degenerate_frame(hdef, R, anchor);
  };
  auto connection = [&](const DegenerateFrame& f) {
    return wz_connection(hdef, f.R, f, h, opts.gauge, &anchor).matrix;
  };
  const DegenerateFrame mid = frame_at(from.R + 0.5 * dR);
  const DegenerateFrame end = frame_at(from.R + dR);
  const CMatrix a0 = connection(anchor);
  const CMatrix am = connection(mid);
  const CMatrix a1 = connection(end);
  const CVector& c = from.c;
  const CVector k1 = -a0 * c;
  const CVector k2 = -am * (c + 0.5 * dR * k1);
  const CVector k3 = -am * (c + 0.5 * dR * k2);
  const CVector k4 = -a1 * (c + dR * k3);
  CVector next = c + (dR / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return WzStep{WzPoint{from.R + dR, end, std::move(next)}, a0, a1};
}

}  // namespace detail

/// Transport a WZ point by dR with a single RK4 step.
inline WzPoint wz_advance(const ParamHamiltonian& hdef, const WzPoint& from, double dR,
                          const WzOptions& opts = {}) {
  return detail::wz_rk4_step(hdef, from, dR, opts).end;
}

/// Starting frame for transport: the model's reference gauge when it has one,
/// otherwise the eigensolver's cluster vectors.
inline DegenerateFrame initial_frame(const ParamHamiltonian& hdef, double R) {
  if (hdef.has_reference_frame()) {
    return degenerate_frame(hdef, R, DegenerateFrame{R, hdef.reference_frame(R)});
  }
  return degenerate_frame(hdef, R);
}

struct WZTrajectory {
  std::vector<double> t;
  std::vector<double> R;
  std::vector<CVector> coefficients;
  std::vector<DegenerateFrame> frames;
  std::vector<CVector> states;  // includes exp(-i E_deg t)

  std::size_t size() const { return t.size(); }
  WzPoint point(std::size_t j) const { return WzPoint{R[j], frames[j], coefficients[j]}; }
};

/// Integrates dc/dR = -A(R) c along the protocol on its own R grid and reports
/// the transported state at `sample_times`. Between grid nodes c is cubic
/// Hermite interpolated and the frame is continued from the node frame.
inline WZTrajectory integrate_wz(const ParamHamiltonian& hdef, const Protocol& prot,
                                 const CVector& c0, std::span<const double> sample_times,
                                 const WzOptions& opts = {}) {
  if (c0.size() != hdef.deg_multiplicity) {
    throw Error(ErrorCode::DimensionMismatch, "c0 must have one entry per degenerate level");
  }
  if (std::abs(c0.squaredNorm() - 1.0) > kNormTolerance) {
    throw Error(ErrorCode::InvalidState, "|c0| must be 1");
  }
  if (!(opts.step_R > 0.0)) throw Error(ErrorCode::ValidationError, "WZ step must be positive");
  if (opts.gauge == FrameGauge::reference && !hdef.has_reference_frame()) {
    throw Error(ErrorCode::ValidationError, "model has no reference frame");
  }
  const double dir = prot.velocity() > 0.0 ? 1.0 : -1.0;
  const double r_end = prot.end();
  const double phase_rate = hdef.deg_energy;

  WZTrajectory out;
  out.t.reserve(sample_times.size());
  out.R.reserve(sample_times.size());
  out.coefficients.reserve(sample_times.size());
  out.frames.reserve(sample_times.size());
  out.states.reserve(sample_times.size());

  WzPoint node{prot.start(), initial_frame(hdef, prot.start()), c0};
  if (opts.gauge == FrameGauge::reference) node.frame.vectors = hdef.reference_frame(node.R);

  std::size_t next_sample = 0;
  auto emit = [&](double t, double R, const CVector& c, DegenerateFrame frame) {
    const double drift = std::abs(c.squaredNorm() - 1.0);
    if (drift > kNormDriftLimit) {
      throw Error(ErrorCode::StepTooLarge,
                  "WZ coefficient norm drift " + num_text(drift));
    }
    CVector psi = frame.combine(c);
    if (phase_rate != 0.0) psi *= std::polar(1.0, -phase_rate * t);
    out.t.push_back(t);
    out.R.push_back(R);
    out.coefficients.push_back(c);
    out.frames.push_back(std::move(frame));
    out.states.push_back(std::move(psi));
  };

  // Samples at (or numerically before) the start.
  while (next_sample < sample_times.size() &&
         dir * (prot.at(sample_times[next_sample]) - node.R) <= 1e-12) {
    emit(sample_times[next_sample], prot.at(sample_times[next_sample]), node.c, node.frame);
    ++next_sample;
  }

  while (next_sample < sample_times.size()) {
    const double remaining = dir * (r_end - node.R);
    double dR = dir * std::min(opts.step_R, std::max(remaining, 0.0));
    if (std::abs(dR) < 1e-14) dR = dir * opts.step_R;  // samples past the nominal end
    const detail::WzStep step = detail::wz_rk4_step(hdef, node, dR, opts);
    const CVector d0 = -step.a_start * node.c;
    const CVector d1 = -step.a_end * step.end.c;
    const double r1 = step.end.R;
    while (next_sample < sample_times.size()) {
      const double ts = sample_times[next_sample];
      const double rs = prot.at(ts);
      if (dir * (rs - r1) > 1e-12) break;
      const double s = std::clamp((rs - node.R) / dR, 0.0, 1.0);
      const double s2 = s * s, s3 = s2 * s;
      const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
      const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
      const CVector c = h00 * node.c + (h10 * dR) * d0 + h01 * step.end.c + (h11 * dR) * d1;
      DegenerateFrame frame;
      if (s == 0.0) {
        frame = node.frame;
      } else if (s == 1.0) {
        frame = step.end.frame;
      } else if (opts.gauge == FrameGauge::reference) {
        const CMatrix mix = hdef.reference_frame(node.R).adjoint() * node.frame.vectors;
        frame = DegenerateFrame{rs, hdef.reference_frame(rs) * mix};
      } else {
        frame = degenerate_frame(hdef, rs, node.frame);
      }
      frame.R = rs;
      emit(ts, rs, c, std::move(frame));
      ++next_sample;
    }
    node = step.end;
  }
  return out;
}

inline WZTrajectory integrate_wz(const ParamHamiltonian& hdef, const Protocol& prot,
                                 const CVector& c0, double dt, double sample_interval,
                                 const WzOptions& opts = {}) {
  const SampleGrid grid = make_sample_grid(prot, dt, sample_interval);
  return integrate_wz(hdef, prot, c0, grid.times, opts);
}

/// max_a |<D_a(R)| psi_WZ(R + dR) - psi_WZ(R)>| / |dR| for one transport step.
inline double wz_orthogonality_residual(const ParamHamiltonian& hdef, double R,
                                        const DegenerateFrame& frame, const CVector& c,
                                        double dR, const WzOptions& opts = {}) {
  if (std::abs(c.squaredNorm() - 1.0) > kNormTolerance) {
    throw Error(ErrorCode::InvalidState, "|c| must be 1");
  }
  const WzPoint start{R, frame, c};
  const WzPoint end = wz_advance(hdef, start, dR, opts);
  const CVector increment = end.state() - start.state();
  return frame.coefficients(increment).cwiseAbs().maxCoeff() / std::abs(dR);
}

}  // namespace adiabatic

#endif
