#pragma once

// Coincidence histograms from tag streams, weighted least-squares fits of the
// coherence and lifetime models, and single-shot readout statistics.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcsim/harness.hpp"

namespace tcsim::analysis {

class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- coincidences ----------------------------------------------------------

struct CoincidenceOptions {
  double window_ns = 130.0;
  double bin_width_ns = 5.0;
  double realign_shift_ns = 0.0;
  // When set, the shift is removed from every click whose in-shot time is at
  // or after this instant (time-bin realignment). Otherwise it is removed
  // from all D2 clicks (channel delay).
  std::optional<double> realign_after_ns;
};

struct CoincidenceHistogram {
  double bin_width_ns = 0;
  std::vector<double> centers_ns;  // bins centred on multiples of the width
  std::vector<std::uint64_t> counts;
  std::vector<double> delays_ns;  // every D1/D2 pair inside the window, t_D2 - t_D1
  bool empty = true;

  std::uint64_t total() const { return delays_ns.size(); }
  /// Pairs with |delay| <= window.
  std::uint64_t within(double window_ns) const;
};

CoincidenceHistogram coincidences(const harness::TagStream& stream, const CoincidenceOptions& opt);

struct VisibilityEstimate {
  double value;
  double error;  // Poisson
  std::uint64_t n_indistinguishable;
  std::uint64_t n_distinguishable;
};

/// V = 1 - N_I(|dt| <= T) / N_D(|dt| <= T) for runs of equal length.
VisibilityEstimate hom_visibility(const CoincidenceHistogram& indist,
                                  const CoincidenceHistogram& dist, double window_ns);

// --- fits ------------------------------------------------------------------

enum class FitModel { exp_decay, rabi, ramsey, hahn, pump_decay };

const char* to_string(FitModel m);
/// Parameter names in fit order.
std::vector<std::string> parameter_names(FitModel m);
double evaluate(FitModel m, const std::vector<double>& params, double t);

struct FitOptions {
  // per-point uncertainties; empty means sqrt(max(y, 1))
  std::vector<double> sigma;
  // starting values in parameter order; empty means automatic
  std::vector<double> initial;
  int max_iterations = 500;
};

struct FitResult {
  FitModel model;
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> std_errors;  // NaN when degenerate
  std::vector<std::vector<double>> covariance;
  double chi2 = 0;
  int dof = 0;
  bool degenerate = false;  // singular normal matrix
  double t_min = 0, t_max = 0;

  double reduced_chi2() const { return dof > 0 ? chi2 / dof : 0.0; }
  double param(const std::string& name) const;
  double error(const std::string& name) const;
};

/// exp_decay:  A exp(-t/tau) + c
/// rabi:       A cos(omega t + phi) exp(-t/T_R) + c
/// ramsey:     A cos(2 pi delta t + phi) exp(-(t/T2)^n) + c
/// hahn:       A exp(-(t/T2)^n) + c
/// pump_decay: A r^k + c  (t is the pulse index k)
/// n is bounded to [0.5, 3]. Needs at least 3 points per parameter.
FitResult fit(FitModel model, const std::vector<double>& t, const std::vector<double>& y,
              const FitOptions& opt = {});

/// (1 + env) / 2.
double gate_fidelity_from_envelope(double envelope);
/// Envelope exp(-(t/T2)^n) of a ramsey or hahn fit at the gate duration.
/// Throws when t_gate is more than twice the fitted range.
double gate_fidelity_from_envelope(const FitResult& fit, double t_gate);

// --- single-shot readout ---------------------------------------------------

struct SsroParams {
  double bright_rate = 6.0;  // mean photons per round, electron bright
  double dark_rate = 0.3;
  double flip_probability = 0.02;  // nuclear flip per round
  int rounds = 12;
  double map_fidelity = 0.984;  // a failed mapping leaves the electron dark

  void validate() const;
};

/// Calibrated to the two modules' measured readout histograms.
SsroParams ssro_tc1();
SsroParams ssro_tc2();

struct SsroData {
  std::vector<int> bright;  // total photons per shot, nucleus prepared bright
  std::vector<int> dark;
};

SsroData ssro_simulate(const SsroParams& p, std::uint64_t shots, std::uint64_t seed);

struct SsroThreshold {
  int threshold;
  double spam;
  std::vector<double> curve;  // SPAM(theta) for theta = 0 .. curve.size() - 1
};

/// SPAM(theta) = (P(n >= theta | bright) + P(n < theta | dark)) / 2.
double ssro_spam(const std::vector<int>& bright, const std::vector<int>& dark, int threshold);
/// Maximises SPAM; ties go to the smaller threshold.
SsroThreshold ssro_threshold(const std::vector<int>& bright, const std::vector<int>& dark);

}  // namespace tcsim::analysis
