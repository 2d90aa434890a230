#ifndef ADIABATIC_DEVIATION_HPP
#define ADIABATIC_DEVIATION_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adiabatic/error.hpp"
#include "adiabatic/hilbert.hpp"
#include "adiabatic/phasespace.hpp"
#include "adiabatic/transport.hpp"

namespace adiabatic {

/// Fixed basis plus pivot in which phase-space coordinates are taken.
struct PhaseChart {
  CMatrix basis;  // columns: chart basis vectors in the model basis
  int pivot = 0;

  static PhaseChart identity(int dim, int pivot) {
    return PhaseChart{CMatrix::Identity(dim, dim), pivot};
  }
  /// Chart in which `psi` has equal populations on every component.
  static PhaseChart balanced_at(const StateVector& psi) { return PhaseChart{balanced_basis(psi), 0}; }

  CVector to_chart(const CVector& psi) const { return basis.adjoint() * psi; }
  CVector from_chart(const CVector& a) const { return basis * a; }
  CMatrix operator_in_chart(const CMatrix& h) const { return basis.adjoint() * h * basis; }
  PhasePoint point(const CVector& psi) const { return to_phase_point(to_chart(psi), pivot); }
};

/// Phase-space vector in the eigen-coordinates of a GammaSpectrum: the first
/// `zero_modes` entries are in-patch slots, the rest NZ slots.
struct TransformedVector {
  CVector components;
  int zero_modes = 0;

  CVector in_patch() const { return components.head(zero_modes); }
  CVector nz() const { return components.tail(components.size() - zero_modes); }
};

struct DeviationVector {
  CVector in_patch;
  CVector nz;
  RVector displacement;  // (dp, dq) in the chart
  CVector as_state;      // delta psi in the model basis, horizontal to psi_WZ
  double imag_residue = 0.0;
};

/// d/dR of the chart coordinates of the WZ state at `point`, transformed by U.
inline TransformedVector wz_tangent_transformed(const GammaSpectrum& spectrum,
                                                const ParamHamiltonian& hdef,
                                                const WzPoint& point, const PhaseChart& chart,
                                                double hR = 1e-5, const WzOptions& wz_opts = {}) {
  const CVector plus = wz_advance(hdef, point, hR, wz_opts).state();
  const CVector minus = wz_advance(hdef, point, -hR, wz_opts).state();
  const PhasePoint pp_plus = chart.point(plus);
  const PhasePoint pp_minus = chart.point(minus);
  const int m = pp_plus.size();
  if (2 * m != spectrum.size()) {
    throw Error(ErrorCode::DimensionMismatch, "spectrum and chart dimensions differ");
  }
  RVector dy(2 * m);
  for (int i = 0; i < m; ++i) {
    dy(i) = wrap_angle(pp_plus.p(i) - pp_minus.p(i)) / (2.0 * hR);
    dy(m + i) = (pp_plus.q(i) - pp_minus.q(i)) / (2.0 * hR);
  }
  return TransformedVector{spectrum.U * dy.cast<Complex>(), spectrum.zero_modes};
}

/// Averaged first-order deviation: NZ slots A_i v / d_i, in-patch slots zero,
/// mapped back to (dp, dq) and then to a state displacement at `wz_state`.
inline DeviationVector first_order_offset(const GammaSpectrum& spectrum,
                                          const TransformedVector& tangent, double v,
                                          const PhaseChart& chart, const CVector& wz_state) {
  if (tangent.zero_modes != spectrum.zero_modes ||
      tangent.components.size() != spectrum.size()) {
    throw Error(ErrorCode::ZeroModeCountMismatch, "tangent and spectrum layouts differ");
  }
  const int z = spectrum.zero_modes;
  const int n = spectrum.size();
  CVector lambda = CVector::Zero(n);
  for (int i = z; i < n; ++i) {
    const Complex di = spectrum.d(i);
    if (!(std::abs(di) > spectrum.zero_tol)) {
      throw Error(ErrorCode::SingularNZBlock,
                  "NZ eigenvalue " + num_text(std::abs(di)) + " below tolerance");
    }
    lambda(i) = tangent.components(i) * v / di;
  }
  const CVector dy = spectrum.U_inv * lambda;
  const double re = dy.real().norm();
  DeviationVector out;
  out.in_patch = lambda.head(z);
  out.nz = lambda.tail(n - z);
  out.displacement = dy.real();
  out.imag_residue = re > 0.0 ? dy.imag().norm() / re : dy.imag().norm();

  const CVector a = chart.to_chart(wz_state);
  const PhasePoint pp = to_phase_point(a, chart.pivot);
  const CVector rep = detail::amplitudes(pp);
  CVector dpsi = state_jacobian(pp) * out.displacement.cast<Complex>();
  dpsi -= rep * rep.dot(dpsi);
  // The chart representative has a real pivot; restore the WZ state's phase.
  const Complex phase = a(chart.pivot) / std::abs(a(chart.pivot));
  out.as_state = chart.from_chart(phase * dpsi);
  return out;
}

/// Independent first-order response i v sum_m |m><m|d_R psi_WZ> / (E_m - E_deg)
/// evaluated in the model basis.
inline CVector spectral_first_order_offset(const ParamHamiltonian& hdef, const WzPoint& point,
                                           double v, double hR = 1e-5,
                                           const WzOptions& wz_opts = {}) {
  const auto eig = spectral_decompose(hdef, point.R);
  const CVector plus = wz_advance(hdef, point, hR, wz_opts).state();
  const CVector minus = wz_advance(hdef, point, -hR, wz_opts).state();
  const CVector dpsi = (plus - minus) / (2.0 * hR);
  CVector out = CVector::Zero(hdef.dim);
  for (int m : eig.complement) {
    const double gap = eig.eigenvalues(m) - hdef.deg_energy;
    if (!(std::abs(gap) > 1e-6)) {
      throw Error(ErrorCode::GapClosure, "gap " + num_text(gap) + " at R = " +
                                             num_text(point.R));
    }
    const auto vec = eig.eigenvectors.col(m);
    out += (kI * v / gap) * vec.dot(dpsi) * vec;
  }
  return out;
}

struct OffsetOptions {
  GammaOptions gamma{};
  double tangent_step = 1e-5;
  WzOptions wz{};
};

/// Every intermediate of the phase-space prediction at one WZ point.
struct OffsetPrediction {
  PhaseChart chart;
  PhasePoint point;
  GammaSpectrum spectrum;
  TransformedVector tangent;
  DeviationVector offset;
};

/// Chart -> Gamma -> spectrum -> transformed tangent -> offset, in a chart
/// balanced at the WZ state so that no population sits near a boundary.
inline OffsetPrediction predict_offset(const ParamHamiltonian& hdef, const WzPoint& wz, double v,
                                       const OffsetOptions& opts = {}) {
  const CVector psi = wz.state();
  const PhaseChart chart = PhaseChart::balanced_at(StateVector::normalized(psi));
  const PhasePoint pp = chart.point(psi);
  const CMatrix h = chart.operator_in_chart(hdef(wz.R));
  const RMatrix gamma = gamma_matrix(h, pp, opts.gamma);
  GammaSpectrum spec = gamma_spectrum(gamma, 2 * (hdef.deg_multiplicity - 1));
  TransformedVector tangent =
      wz_tangent_transformed(spec, hdef, wz, chart, opts.tangent_step, opts.wz);
  DeviationVector offset = first_order_offset(spec, tangent, v, chart, psi);
  return OffsetPrediction{chart, pp, std::move(spec), std::move(tangent), std::move(offset)};
}

enum class Scenario { on_patch_start, offset_start };

inline const char* to_string(Scenario s) {
  return s == Scenario::on_patch_start ? "on_patch_start" : "offset_start";
}

struct TraceMetadata {
  std::string model;
  double start = 0.0;
  double velocity = 0.0;
  double duration = 0.0;
  double dt = 0.0;
  Scenario scenario = Scenario::on_patch_start;
  DistanceMode mode = DistanceMode::raw;
};

struct DeviationRecord {
  double t = 0.0;
  double R = 0.0;
  double d_perp = 0.0;
  double d_par = 0.0;
  double norm_err = 0.0;
  double predicted_offset = 0.0;
};

struct DeviationTrace {
  std::vector<DeviationRecord> records;
  TraceMetadata metadata;

  std::size_t size() const { return records.size(); }

  std::vector<double> column(double DeviationRecord::*field) const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.*field);
    return out;
  }
};

/// Per sample: d_perp = ||psi - P psi||, d_par = distance(P psi / |P psi|, psi_WZ).
/// `predicted` (optional) fills the predicted-offset column.
inline DeviationTrace decompose_deviation(const Trajectory& exact, const WZTrajectory& wz,
                                          DistanceMode mode,
                                          std::span<const double> predicted = {}) {
  if (exact.size() != wz.size()) {
    throw Error(ErrorCode::DimensionMismatch, "exact and WZ sample grids differ in length");
  }
  if (!predicted.empty() && predicted.size() != exact.size()) {
    throw Error(ErrorCode::DimensionMismatch, "predicted offsets do not match the grid");
  }
  DeviationTrace out;
  out.records.reserve(exact.size());
  for (std::size_t j = 0; j < exact.size(); ++j) {
    if (std::abs(exact.t[j] - wz.t[j]) > 1e-9 * std::max(1.0, std::abs(exact.t[j]))) {
      throw Error(ErrorCode::DimensionMismatch, "sample times are not aligned");
    }
    const PatchProjection proj = project_to_patch(exact.states[j], wz.frames[j]);
    DeviationRecord r;
    r.t = exact.t[j];
    r.R = exact.R[j];
    r.d_perp = proj.d_perp;
    r.d_par = distance(proj.projection.amplitudes(), wz.states[j], mode);
    r.norm_err = exact.norm_err.empty() ? std::abs(exact.states[j].squaredNorm() - 1.0)
                                        : exact.norm_err[j];
    r.predicted_offset = predicted.empty() ? 0.0 : predicted[j];
    out.records.push_back(r);
  }
  return out;
}

enum class Window { full, second_half };

inline Window default_window(Scenario s) {
  return s == Scenario::on_patch_start ? Window::second_half : Window::full;
}

struct TraceSummary {
  double mean_perp = 0.0;
  double std_perp = 0.0;
  double max_perp = 0.0;
  double max_par = 0.0;
  double mean_predicted = 0.0;
  std::size_t samples = 0;
};

/// Mean/std of d_perp and the mean prediction over the window; maxima over the
/// whole run.
inline TraceSummary summarize(const DeviationTrace& trace, Window window) {
  TraceSummary s;
  if (trace.records.empty()) return s;
  const double t_end = trace.records.back().t;
  const double t_from = window == Window::second_half ? 0.5 * t_end : trace.records.front().t;
  double sum = 0.0, sum_pred = 0.0;
  for (const auto& r : trace.records) {
    s.max_perp = std::max(s.max_perp, r.d_perp);
    s.max_par = std::max(s.max_par, r.d_par);
    if (r.t < t_from) continue;
    sum += r.d_perp;
    sum_pred += r.predicted_offset;
    ++s.samples;
  }
  s.mean_perp = sum / static_cast<double>(s.samples);
  s.mean_predicted = sum_pred / static_cast<double>(s.samples);
  double var = 0.0;
  for (const auto& r : trace.records) {
    if (r.t < t_from) continue;
    var += (r.d_perp - s.mean_perp) * (r.d_perp - s.mean_perp);
  }
  s.std_perp = std::sqrt(var / static_cast<double>(s.samples));
  return s;
}

inline TraceSummary summarize(const DeviationTrace& trace) {
  return summarize(trace, default_window(trace.metadata.scenario));
}

enum class Statistic { mean_perp, max_par };

inline double statistic_value(const TraceSummary& s, Statistic stat) {
  return stat == Statistic::mean_perp ? s.mean_perp : s.max_par;
}

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;  // log(y) at log(x) = 0
  double r2 = 0.0;
};

inline constexpr double kMinFitQuality = 0.95;

/// Least squares of log(y) against log(x).
inline PowerLawFit fit_power_law(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::DimensionMismatch, "x/y length mismatch");
  if (xs.size() < 3) throw Error(ErrorCode::PoorFit, "need at least 3 points for a scaling fit");
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
      throw Error(ErrorCode::PoorFit, "scaling fit needs positive values");
    }
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 1e-24)) {
    throw Error(ErrorCode::PoorFit, "velocities have zero spread; extend the velocity range");
  }
  PowerLawFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ss_res += e * e;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  if (fit.r2 < kMinFitQuality) {
    throw Error(ErrorCode::PoorFit, "r^2 = " + num_text(fit.r2) +
                                        "; statistic is noise dominated, extend the scan interval");
  }
  return fit;
}

/// Slope of log(statistic) against log|v| across runs over a common R interval.
inline PowerLawFit scaling_exponent(std::span<const DeviationTrace> traces, Statistic stat) {
  if (traces.size() < 3) throw Error(ErrorCode::PoorFit, "need at least 3 velocities");
  std::vector<double> xs, ys;
  const auto& ref = traces.front().metadata;
  const double ref_end = ref.start + ref.velocity * ref.duration;
  for (const auto& tr : traces) {
    const auto& md = tr.metadata;
    const double end = md.start + md.velocity * md.duration;
    const double tol = 1e-9 * std::max(1.0, std::abs(ref_end - ref.start));
    if (std::abs(md.start - ref.start) > tol || std::abs(end - ref_end) > tol) {
      throw Error(ErrorCode::ValidationError, "runs must cover the same R interval");
    }
    xs.push_back(std::abs(md.velocity));
    ys.push_back(statistic_value(summarize(tr), stat));
  }
  return fit_power_law(xs, ys);
}

struct FrequencyScan {
  double omega_min = 0.05;
  double omega_max = 10.0;
  int steps = 2000;
  double segment_length = 200.0;  // averaging window, in time units
};

/// Angular frequency of the largest peak of a segment-averaged periodogram of
/// x(t) (mean removed), refined by a parabola through the peak and its
/// neighbours. Samples are assumed evenly spaced.
inline double dominant_angular_frequency(std::span<const double> t, std::span<const double> x,
                                         const FrequencyScan& scan = {}) {
  if (t.size() != x.size() || t.size() < 8) {
    throw Error(ErrorCode::DimensionMismatch, "periodogram needs at least 8 aligned samples");
  }
  if (!(scan.omega_max > scan.omega_min) || scan.steps < 3) {
    throw Error(ErrorCode::ValidationError, "invalid frequency scan range");
  }
  const std::size_t n = t.size();
  const double dt = (t.back() - t.front()) / static_cast<double>(n - 1);
  const std::size_t seg = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(scan.segment_length / dt)), 8, n);
  const std::size_t segments = n / seg;
  const double d_omega = (scan.omega_max - scan.omega_min) / (scan.steps - 1);

  std::vector<double> power(scan.steps, 0.0);
  std::vector<double> centered(seg);
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t off = s * seg;
    double mean = 0.0;
    for (std::size_t j = 0; j < seg; ++j) mean += x[off + j];
    mean /= static_cast<double>(seg);
    for (std::size_t j = 0; j < seg; ++j) centered[j] = x[off + j] - mean;
    for (int k = 0; k < scan.steps; ++k) {
      const double w = scan.omega_min + k * d_omega;
      const Complex rot = std::polar(1.0, -w * dt);
      Complex ph = 1.0, acc = 0.0;
      for (std::size_t j = 0; j < seg; ++j) {
        acc += centered[j] * ph;
        ph *= rot;
      }
      power[k] += std::norm(acc);
    }
  }
  const auto peak = static_cast<int>(std::max_element(power.begin(), power.end()) - power.begin());
  double w = scan.omega_min + peak * d_omega;
  if (peak > 0 && peak + 1 < scan.steps) {
    const double a = power[peak - 1], b = power[peak], c = power[peak + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) w += 0.5 * (a - c) / denom * d_omega;
  }
  return w;
}

}  // namespace adiabatic

#endif
