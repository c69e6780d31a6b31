#include "tcsim/emitter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "tcsim/quadrature.hpp"

namespace tcsim::emitter {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
// MHz * ns -> cycles
constexpr double mhz_ns = 1e-3;

// int_lo^hi exp(-k t) dt, zero for an empty interval.
double exp_integral(double k, double lo, double hi) {
  if (hi <= lo) return 0.0;
  if (k == 0.0) return hi - lo;
  return -std::exp(-k * lo) * std::expm1(-k * (hi - lo)) / k;
}

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw EmitterError(fmt::format("{}: {}", field, why));
}

}  // namespace

void EmitterParams::validate() const {
  require(std::isfinite(lifetime_ns) && lifetime_ns > 0, "lifetime_ns", "must be > 0");
  require(pure_dephasing_mhz >= 0, "pure_dephasing_mhz", "must be >= 0");
  require(diffusion_sigma_mhz >= 0, "diffusion_sigma_mhz", "must be >= 0");
  require(std::isfinite(excitation_bandwidth_mhz), "excitation_bandwidth_mhz", "must be finite");
  require(std::isfinite(mean_detuning_mhz), "mean_detuning_mhz", "must be finite");
  require(std::isfinite(polarization_mismatch_deg), "polarization_mismatch_deg",
          "must be finite");
  require(p_double >= 0 && p_double < 1, "p_double", "must be in [0, 1)");
  require(pair_capture >= 0 && pair_capture <= 1, "pair_capture", "must be in [0, 1]");
  require(br_radiative >= 0 && br_radiative < 1, "br_radiative", "must be in [0, 1)");
  require(br_nonradiative >= 0 && br_nonradiative < 1, "br_nonradiative", "must be in [0, 1)");
  require(br_radiative + br_nonradiative < 1, "br_nonradiative",
          "branching fractions must sum to < 1");
  require(std::isfinite(desync_ns), "desync_ns", "must be finite");
}

double EmitterParams::g2_zero() const {
  const double p = pair_probability();
  return 2 * p / ((1 + p) * (1 + p));
}

double pair_capture_for_g2(double p_double, double g2) {
  if (g2 < 0 || g2 >= 0.5) throw EmitterError("g2 must be in [0, 0.5)");
  if (g2 == 0) return 0;
  if (p_double <= 0) throw EmitterError("p_double must be > 0 for a non-zero g2");
  const double p = ((1 - g2) - std::sqrt(1 - 2 * g2)) / g2;
  const double capture = p / p_double;
  if (capture > 1) throw EmitterError("g2 not reachable with this p_double");
  return capture;
}

EmitterParams tc1_params() {
  EmitterParams p;
  p.lifetime_ns = 69.9;
  p.pure_dephasing_mhz = 5.0;
  p.diffusion_sigma_mhz = 22.5;
  p.excitation_bandwidth_mhz = 22.5;
  p.polarization_mismatch_deg = 0.0;
  p.p_double = 0.028;
  p.pair_capture = pair_capture_for_g2(p.p_double, 0.0076);
  p.br_radiative = 0.025;
  p.br_nonradiative = 0.025;
  return p;
}

EmitterParams tc2_params() {
  EmitterParams p = tc1_params();
  p.lifetime_ns = 64.5;
  p.polarization_mismatch_deg = 12.8;
  p.p_double = 0.03;
  p.pair_capture = pair_capture_for_g2(p.p_double, 0.0117);
  return p;
}

EmitterParams projected_params() {
  EmitterParams p;
  p.lifetime_ns = 10.0;
  p.pure_dephasing_mhz = 0.23;
  p.diffusion_sigma_mhz = 20.0;
  p.excitation_bandwidth_mhz = 20.0;
  p.polarization_mismatch_deg = 0.0;
  p.p_double = 0.0;
  p.pair_capture = 1.0;
  return p;
}

// ---------------------------------------------------------------------------

std::size_t TimeGrid::size() const {
  return 2 * static_cast<std::size_t>(std::llround(half_width_ns / step_ns)) + 1;
}

double TimeGrid::at(std::size_t i) const {
  const auto n = static_cast<long long>(size() / 2);
  return (static_cast<long long>(i) - n) * step_ns;
}

std::vector<double> TimeGrid::points() const {
  validate();
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
  return out;
}

void TimeGrid::validate() const {
  if (!(step_ns > 0) || !(half_width_ns > 0)) {
    throw EmitterError("grid step and half width must be positive");
  }
  const double n = half_width_ns / step_ns;
  if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
    throw EmitterError(fmt::format(
        "grid half width {} ns is not a whole number of {} ns steps", half_width_ns, step_ns));
  }
}

double CorrelationTrace::step_ns() const {
  if (tau_ns.size() < 2) throw EmitterError("trace needs at least two samples");
  return tau_ns[1] - tau_ns[0];
}

void CorrelationTrace::check() const {
  if (tau_ns.size() != values.size() || tau_ns.size() < 3 || tau_ns.size() % 2 == 0) {
    throw EmitterError("trace grid must have an odd number (>= 3) of samples matching values");
  }
  const double h = step_ns();
  const std::size_t n = tau_ns.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(tau_ns[i] + tau_ns[n - 1 - i]) > 1e-9 * h) {
      throw EmitterError("trace grid is not symmetric about zero");
    }
    if (i > 0 && std::abs(tau_ns[i] - tau_ns[i - 1] - h) > 1e-9 * h) {
      throw EmitterError("trace grid is not uniform");
    }
    if (values[i] < 0) throw EmitterError("trace has negative values");
  }
}

double CorrelationTrace::value_at(double tau) const {
  const double h = step_ns();
  const double pos = (tau - tau_ns.front()) / h;
  if (pos < 0 || pos > static_cast<double>(tau_ns.size() - 1)) return 0.0;
  const auto i = std::min(static_cast<std::size_t>(pos), tau_ns.size() - 2);
  const double frac = pos - static_cast<double>(i);
  return values[i] * (1 - frac) + values[i + 1] * frac;
}

double CorrelationTrace::integral(double lo, double hi) const {
  if (hi < lo) return -integral(hi, lo);
  lo = std::max(lo, tau_ns.front());
  hi = std::min(hi, tau_ns.back());
  if (hi <= lo) return 0.0;
  const double h = step_ns();
  // first/last grid index fully inside [lo, hi]
  const auto first = static_cast<std::size_t>(std::ceil((lo - tau_ns.front()) / h - 1e-9));
  const auto last = static_cast<std::size_t>(std::floor((hi - tau_ns.front()) / h + 1e-9));
  if (first > last) return 0.5 * (value_at(lo) + value_at(hi)) * (hi - lo);
  double s = 0;
  for (std::size_t i = first; i < last; ++i) s += 0.5 * (values[i] + values[i + 1]) * h;
  const double a = tau_ns[first];
  const double b = tau_ns[last];
  if (a > lo) s += 0.5 * (value_at(lo) + values[first]) * (a - lo);
  if (hi > b) s += 0.5 * (values[last] + value_at(hi)) * (hi - b);
  return s;
}

// ---------------------------------------------------------------------------

double emission_density(const EmitterParams& p, double t_ns) {
  if (t_ns < p.desync_ns) return 0.0;
  const double g = p.decay_rate();
  return g * std::exp(-g * (t_ns - p.desync_ns));
}

double diffusion_characteristic(const EmitterParams& p, double tau_ns) {
  const double sigma = p.diffusion_sigma_mhz;
  const double w = two_pi * tau_ns * mhz_ns;
  if (!p.truncated()) {
    return std::exp(-0.5 * sigma * sigma * w * w);
  }
  const double half = 0.5 * p.excitation_bandwidth_mhz;
  if (sigma == 0) return 1.0;
  static thread_local QuadratureRule unit = gauss_legendre(96, -1.0, 1.0);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < unit.nodes.size(); ++i) {
    const double x = half * unit.nodes[i];
    const double g = unit.weights[i] * std::exp(-0.5 * x * x / (sigma * sigma));
    num += g * std::cos(w * x);
    den += g;
  }
  return num / den;
}

double detuning_factor(const EmitterParams& p1, const EmitterParams& p2, double tau_ns) {
  const double mean = p1.mean_detuning_mhz - p2.mean_detuning_mhz;
  return std::cos(two_pi * mean * tau_ns * mhz_ns) * diffusion_characteristic(p1, tau_ns) *
         diffusion_characteristic(p2, tau_ns);
}

double dephasing_factor(const EmitterParams& p1, const EmitterParams& p2, double tau_ns) {
  return std::exp(-two_pi * (p1.pure_dephasing_mhz + p2.pure_dephasing_mhz) * std::abs(tau_ns) *
                  mhz_ns);
}

double mode_overlap(const EmitterParams& p1, const EmitterParams& p2) {
  const double c = std::cos((p1.polarization_mismatch_deg - p2.polarization_mismatch_deg) *
                            std::numbers::pi / 180.0);
  return c * c;
}

namespace {

// int f_a(t) f_b(t + tau) dt with t, t + tau in [0, L].
double cross_product_integral(const EmitterParams& a, const EmitterParams& b, double tau,
                              double L) {
  const double ga = a.decay_rate();
  const double gb = b.decay_rate();
  const double lo = std::max({0.0, a.desync_ns, b.desync_ns - tau, -tau});
  const double hi = std::min(L, L - tau);
  if (hi <= lo) return 0.0;
  // exponent evaluated relative to lo keeps it bounded
  const double pref = ga * gb * std::exp(-ga * (lo - a.desync_ns) - gb * (lo + tau - b.desync_ns));
  return pref * exp_integral(ga + gb, 0.0, hi - lo);
}

}  // namespace

double g0_kernel(const EmitterParams& p1, const EmitterParams& p2, double tau, double tau_lim) {
  return 0.5 * (cross_product_integral(p1, p2, tau, tau_lim) +
                cross_product_integral(p2, p1, tau, tau_lim));
}

double overlap_kernel(const EmitterParams& p1, const EmitterParams& p2, double tau,
                      double tau_lim) {
  const double g1 = p1.decay_rate();
  const double g2 = p2.decay_rate();
  const double s = std::max(p1.desync_ns, p2.desync_ns);
  const double lo = std::max({0.0, s, s - tau, -tau});
  const double hi = std::min(tau_lim, tau_lim - tau);
  if (hi <= lo) return 0.0;
  const double gbar = 0.5 * (g1 + g2);
  // sqrt(f1 f2)(t) sqrt(f1 f2)(t+tau) at t = lo
  const double at_lo = g1 * g2 *
                       std::exp(-0.5 * (g1 * (lo - p1.desync_ns) + g2 * (lo - p2.desync_ns)) -
                                0.5 * (g1 * (lo + tau - p1.desync_ns) +
                                       g2 * (lo + tau - p2.desync_ns)));
  return at_lo * exp_integral(2 * gbar, 0.0, hi - lo);
}

double gint_kernel(const EmitterParams& p1, const EmitterParams& p2, double tau, double tau_lim) {
  return -mode_overlap(p1, p2) * detuning_factor(p1, p2, tau) * dephasing_factor(p1, p2, tau) *
         overlap_kernel(p1, p2, tau, tau_lim);
}

// ---------------------------------------------------------------------------

CorrelationTrace hbt_g2_trace(const EmitterParams& p, double rep_period_ns, const TimeGrid& grid) {
  p.validate();
  grid.validate();
  if (grid.step_ns > p.lifetime_ns / 10) {
    throw EmitterError(fmt::format("grid step {} ns is coarser than lifetime/10 = {} ns",
                                   grid.step_ns, p.lifetime_ns / 10));
  }
  if (!(rep_period_ns >= 5 * p.lifetime_ns)) {
    throw EmitterError(fmt::format("repetition period {} ns must be at least 5 lifetimes ({} ns)",
                                   rep_period_ns, 5 * p.lifetime_ns));
  }
  const double g = p.decay_rate();
  const double g2 = p.g2_zero();
  const int kmax = static_cast<int>(std::ceil(grid.half_width_ns / rep_period_ns)) + 1;
  CorrelationTrace tr;
  tr.tau_ns = grid.points();
  tr.values.resize(tr.tau_ns.size());
  tr.normalization = Normalization::density;
  tr.acquisition_window_ns = grid.half_width_ns;
  for (std::size_t i = 0; i < tr.tau_ns.size(); ++i) {
    double v = 0;
    for (int k = -kmax; k <= kmax; ++k) {
      const double area = k == 0 ? g2 : 1.0;
      v += area * 0.5 * g * std::exp(-g * std::abs(tr.tau_ns[i] - k * rep_period_ns));
    }
    tr.values[i] = v;
  }
  return tr;
}

namespace {

HomTraces build_hom(const EmitterParams& p1, const EmitterParams& p2, const TimeGrid& grid,
                    double tau_lim, bool multiphoton) {
  p1.validate();
  p2.validate();
  grid.validate();
  if (!(tau_lim > 0)) throw EmitterError("acquisition window must be positive");
  if (std::abs(p1.desync_ns) >= tau_lim || std::abs(p2.desync_ns) >= tau_lim) {
    throw EmitterError("desync exceeds the acquisition window");
  }
  HomTraces out;
  auto& gi = out.indistinguishable;
  auto& gd = out.distinguishable;
  gi.tau_ns = gd.tau_ns = grid.points();
  const std::size_t n = gi.tau_ns.size();
  gi.values.resize(n);
  gd.values.resize(n);
  gi.acquisition_window_ns = gd.acquisition_window_ns = tau_lim;
  const double g2a = multiphoton ? p1.g2_zero() : 0.0;
  const double g2b = multiphoton ? p2.g2_zero() : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = gi.tau_ns[i];
    const double g0 = g0_kernel(p1, p2, tau, tau_lim);
    const double gint = gint_kernel(p1, p2, tau, tau_lim);
    const double hbt = g2a * g0_kernel(p1, p1, tau, tau_lim) + g2b * g0_kernel(p2, p2, tau, tau_lim);
    gd.values[i] = 0.5 * g0 + 0.25 * hbt;
    gi.values[i] = std::max(0.0, 0.5 * (g0 + gint) + 0.25 * hbt);
  }
  return out;
}

void check_pair(const CorrelationTrace& a, const CorrelationTrace& b) {
  a.check();
  b.check();
  if (a.tau_ns.size() != b.tau_ns.size() || std::abs(a.step_ns() - b.step_ns()) > 1e-12) {
    throw EmitterError("traces do not share a grid");
  }
}

void check_window(const CorrelationTrace& t, double window) {
  if (!(window >= 0)) throw EmitterError("time-bin window must be >= 0");
  if (window > t.acquisition_window_ns + 1e-9) {
    throw EmitterError(fmt::format("time-bin window {} ns exceeds the acquisition window {} ns",
                                   window, t.acquisition_window_ns));
  }
}

}  // namespace

HomTraces hom_correlations(const EmitterParams& p1, const EmitterParams& p2, const TimeGrid& grid,
                           double tau_lim_ns) {
  return build_hom(p1, p2, grid, tau_lim_ns, true);
}

HomTraces two_photon_correlations(const EmitterParams& p1, const EmitterParams& p2,
                                  const TimeGrid& grid, double tau_lim_ns) {
  return build_hom(p1, p2, grid, tau_lim_ns, false);
}

double visibility(const CorrelationTrace& gi, const CorrelationTrace& gd, double window_ns) {
  check_pair(gi, gd);
  check_window(gd, window_ns);
  const double d = gd.integral(-window_ns, window_ns);
  if (!(d > 0)) throw EmitterError("distinguishable coincidences vanish in the window");
  return 1.0 - gi.integral(-window_ns, window_ns) / d;
}

double timebin_capture(const CorrelationTrace& gd, double window_ns) {
  gd.check();
  check_window(gd, window_ns);
  const double lim = gd.acquisition_window_ns;
  const double total = gd.integral(-lim, lim);
  if (!(total > 0)) throw EmitterError("distinguishable trace is empty");
  return std::clamp(gd.integral(-window_ns, window_ns) / total, 0.0, 1.0);
}

}  // namespace tcsim::emitter
