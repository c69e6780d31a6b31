#pragma once

// Spectral and photon-statistics models for single emitters and for
// two-emitter interference at a balanced beamsplitter.
//
// Units: times in ns, linewidths/detunings in MHz, angles in degrees.

#include <stdexcept>
#include <string>
#include <vector>

namespace tcsim::emitter {

class EmitterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EmitterParams {
  double lifetime_ns = 69.9;
  double pure_dephasing_mhz = 5.0;
  double diffusion_sigma_mhz = 22.5;
  // Frequencies farther than half this bandwidth from the mean are never
  // excited. <= 0 means no truncation.
  double excitation_bandwidth_mhz = 22.5;
  double mean_detuning_mhz = 0.0;
  // Polarization angle relative to a common reference; two emitters
  // overlap by cos^2 of the difference.
  double polarization_mismatch_deg = 0.0;
  double p_double = 0.0;
  // Probability that the second photon of a double excitation lands in
  // the acquisition window and is detected like the first one.
  double pair_capture = 1.0;
  double br_radiative = 0.0;
  double br_nonradiative = 0.0;
  double desync_ns = 0.0;

  void validate() const;  // throws EmitterError naming the field

  double decay_rate() const { return 1.0 / lifetime_ns; }
  double pair_probability() const { return p_double * pair_capture; }
  /// HBT g2(0) implied by the pair probability p: 2p/(1+p)^2.
  double g2_zero() const;
  /// Fraction of decays through the collected zero-phonon line.
  double zpl_fraction() const { return 1.0 - br_radiative - br_nonradiative; }
  bool truncated() const { return excitation_bandwidth_mhz > 0.0; }
};

/// pair_capture that makes g2_zero() equal `g2` for the given p_double.
double pair_capture_for_g2(double p_double, double g2);

EmitterParams tc1_params();
EmitterParams tc2_params();
/// Projected next-generation emitter: 10 ns lifetime, 230 kHz dephasing,
/// 20 MHz diffusion.
EmitterParams projected_params();

struct TimeGrid {
  double step_ns = 0.1;
  double half_width_ns = 130.0;

  std::size_t size() const;
  double at(std::size_t i) const;
  std::vector<double> points() const;
  void validate() const;  // half width must be a whole number of steps
};

enum class Normalization { density, counts };

struct CorrelationTrace {
  std::vector<double> tau_ns;
  std::vector<double> values;
  Normalization normalization = Normalization::density;
  double acquisition_window_ns = 0.0;

  double step_ns() const;
  /// Integral of the piecewise-linear interpolant over [lo, hi].
  double integral(double lo, double hi) const;
  double value_at(double tau) const;
  void check() const;
};

// --- model ingredients -----------------------------------------------------

/// Emission-time density Gamma exp(-Gamma (t - desync)) for t >= desync.
double emission_density(const EmitterParams& p, double t_ns);

/// E[cos(2 pi x tau)] for the centred, possibly truncated, diffusion
/// offset x of one emitter.
double diffusion_characteristic(const EmitterParams& p, double tau_ns);

/// E[cos(2 pi (d1 - d2) tau)] over independent detunings of both emitters.
double detuning_factor(const EmitterParams& p1, const EmitterParams& p2, double tau_ns);

/// exp(-2 pi (G1* + G2*) |tau|).
double dephasing_factor(const EmitterParams& p1, const EmitterParams& p2, double tau_ns);

/// cos^2 of the relative polarization angle.
double mode_overlap(const EmitterParams& p1, const EmitterParams& p2);

/// Distinguishable kernel G0(tau) with detection times restricted to
/// [0, tau_lim].
double g0_kernel(const EmitterParams& p1, const EmitterParams& p2, double tau, double tau_lim);

/// Amplitude-overlap envelope integral over t of
/// sqrt(f1(t) f2(t) f1(t+tau) f2(t+tau)) on [0, tau_lim].
double overlap_kernel(const EmitterParams& p1, const EmitterParams& p2, double tau,
                      double tau_lim);

/// Interference kernel Gint(tau) (non-positive).
double gint_kernel(const EmitterParams& p1, const EmitterParams& p2, double tau, double tau_lim);

// --- operations ------------------------------------------------------------

/// Pulsed HBT autocorrelation: peaks at multiples of rep_period, outer
/// peaks of unit area, the centre peak of area g2_zero().
CorrelationTrace hbt_g2_trace(const EmitterParams& p, double rep_period_ns, const TimeGrid& grid);

struct HomTraces {
  CorrelationTrace indistinguishable;
  CorrelationTrace distinguishable;
};

/// HOM coincidence densities including the multi-photon HBT terms:
/// G_HOM,X = G_X/2 + (g2_1 h_1 + g2_2 h_2)/4.
HomTraces hom_correlations(const EmitterParams& p1, const EmitterParams& p2, const TimeGrid& grid,
                           double tau_lim_ns);

/// Same traces without the multi-photon terms (pure two-photon interference).
HomTraces two_photon_correlations(const EmitterParams& p1, const EmitterParams& p2,
                                  const TimeGrid& grid, double tau_lim_ns);

/// V = 1 - int_{-T}^{T} G_I / int_{-T}^{T} G_D.
double visibility(const CorrelationTrace& gi, const CorrelationTrace& gd, double window_ns);

/// Fraction of distinguishable coincidences with |tau| <= T.
double timebin_capture(const CorrelationTrace& gd, double window_ns);

}  // namespace tcsim::emitter
