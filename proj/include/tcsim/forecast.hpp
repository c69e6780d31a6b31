#pragma once

// Projected repetition rate, success probability and the fidelity/rate
// trade-off under a coincidence time filter.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcsim/emitter.hpp"

namespace tcsim::forecast {

class ForecastError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Step {
  std::string label;
  double time_ns;
  int count;
  bool operator==(const Step&) const = default;
};

struct StepBudget {
  std::vector<Step> steps;
  void validate() const;
  bool operator==(const StepBudget&) const = default;
};

struct EfficiencyItem {
  std::string label;
  double efficiency;
  int count;
  bool operator==(const EfficiencyItem&) const = default;
};

struct EfficiencyBudget {
  std::vector<EfficiencyItem> elements;
  void validate() const;
  bool operator==(const EfficiencyBudget&) const = default;
};

/// Minimum step times of one protocol attempt.
StepBudget minimum_step_budget();
/// Projected per-element efficiencies.
EfficiencyBudget projected_efficiency_budget();

struct RepetitionRate {
  double total_time_ns;
  double rate_hz;
};

RepetitionRate repetition_rate(const StepBudget& b);
double success_probability(const EfficiencyBudget& b);

struct ProjectionParams {
  double lifetime_ns = 10.0;
  double intrinsic_dephasing_khz = 230.0;
  double slow_diffusion_mhz = 20.0;
  double pulse_width_ps = 83.0;
  std::optional<double> p_double;  // derived from the pulse width when absent
  double field_mt = 500.0;         // metadata
  double acquisition_window_ns = 30.0;
  double grid_step_ns = 0.01;

  void validate() const;
  /// Re-excitation probability during the pulse, pulse_width / (4 lifetime).
  double double_excitation() const;
  emitter::EmitterParams emitter() const;
};

struct CurvePoint {
  double fraction;
  double timebin_ns;
  double visibility;
  double fidelity;
  double rate_hz;
};

/// For each coincidence fraction f the time bin T with eta_tb(T) = f is found
/// by bisection (1 ps); F = min((1 + v(T)) / 2, 1) (1 - p_double / 2) and
/// rate = repetition rate * success probability * f.
std::vector<CurvePoint> fidelity_rate_curve(const ProjectionParams& p, const StepBudget& sb,
                                            const EfficiencyBudget& eb,
                                            const std::vector<double>& fractions);

}  // namespace tcsim::forecast
